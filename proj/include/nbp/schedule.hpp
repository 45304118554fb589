#ifndef NBP_SCHEDULE_HPP
#define NBP_SCHEDULE_HPP

#include <string>
#include <vector>

#include "nbp/common.hpp"

namespace nbp::sched {

enum class schedule_kind { cosine, linear };

schedule_kind schedule_kind_from_string(const std::string& s);
std::string to_string(schedule_kind k);

struct schedule_config {
    schedule_kind kind = schedule_kind::cosine;
    int timesteps = 500;
    double beta_start = 3e-4;
    double beta_end = 0.5;
    // Zeroes gamma, gamma_bar and the bridge correction, which turns the
    // bridge into the plain unconditional diffusion baseline.
    bool force_zero_bridge = false;

    void validate() const;
};

// All per-timestep coefficients, precomputed in double precision. Arrays are
// indexed by timestep t in [1, T]; alpha_bar and gamma_bar also define t=0
// (alpha_bar[0]=1, gamma_bar[0]=0). Immutable after construction; safe to
// share read-only.
class noise_schedule {
public:
    int timesteps() const { return T_; }
    bool zero_bridge() const { return zero_bridge_; }
    const schedule_config& config() const { return cfg_; }

    double beta(int t) const { return at(beta_, t); }
    double alpha(int t) const { return at(alpha_, t); }
    double alpha_bar(int t) const { return at0(alpha_bar_, t); }
    double snr(int t) const { return at(snr_, t); }
    double gamma(int t) const { return at(gamma_, t); }
    double gamma_bar(int t) const { return at0(gamma_bar_, t); }
    double beta_tilde(int t) const { return at(beta_tilde_, t); }
    double c_bridge(int t) const { return at(c_bridge_, t); }

    friend noise_schedule build_schedule(const schedule_config& cfg);

private:
    schedule_config cfg_;
    int T_ = 0;
    bool zero_bridge_ = false;
    // index 0 unused for the [1..T] arrays, so t indexes directly
    std::vector<double> beta_, alpha_, snr_, gamma_, beta_tilde_, c_bridge_;
    std::vector<double> alpha_bar_, gamma_bar_;  // [0..T]

    double at(const std::vector<double>& v, int t) const {
        if (t < 1 || t > T_) throw invalid_argument("schedule: timestep out of range [1,T]");
        return v[static_cast<std::size_t>(t)];
    }
    double at0(const std::vector<double>& v, int t) const {
        if (t < 0 || t > T_) throw invalid_argument("schedule: timestep out of range [0,T]");
        return v[static_cast<std::size_t>(t)];
    }
};

noise_schedule build_schedule(const schedule_config& cfg);

// Reverse-mean bridge correction coefficient, -gamma_t / sqrt(1 - beta_t).
double bridge_correction_coeff(const noise_schedule& s, int t);

// Same coefficient before algebraic simplification:
// -(beta_t + (1-beta_t)(1-alpha_bar_{t-1})) * gamma_t / (sqrt(1-beta_t) (1-alpha_bar_t)).
double bridge_correction_coeff_unsimplified(const noise_schedule& s, int t);

// Same coefficient with gamma substituted by its SNR ratio:
// -(1/sqrt(1-beta_t)) * alpha_bar_T (1-alpha_bar_t) / (alpha_bar_t (1-alpha_bar_T)).
double snr_form_coeff(const noise_schedule& s, int t);

// Direct-summation oracle for the cumulative bridge coefficient,
// sum_{s<=t} gamma_s sqrt(alpha_bar_t / alpha_bar_s). The stored gamma_bar
// uses the recurrence; the two must agree to 1e-12.
double gamma_bar_direct_sum(const noise_schedule& s, int t);

// Writes columns t,beta,alpha_bar,snr,gamma,gamma_bar,beta_tilde,c_bridge.
void dump_schedule_csv(const noise_schedule& s, const std::string& path);

}  // namespace nbp::sched

#endif
