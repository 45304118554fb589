#include "nbp/schedule.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace nbp::sched {

schedule_kind schedule_kind_from_string(const std::string& s) {
    if (s == "cosine") return schedule_kind::cosine;
    if (s == "linear") return schedule_kind::linear;
    throw invalid_argument("unknown schedule kind '" + s + "' (expected cosine or linear)");
}

std::string to_string(schedule_kind k) {
    return k == schedule_kind::cosine ? "cosine" : "linear";
}

void schedule_config::validate() const {
    if (timesteps < 1) throw invalid_argument("schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start < 1.0)) throw invalid_argument("schedule: beta_start must be in (0,1)");
    if (!(beta_end > 0.0 && beta_end < 1.0)) throw invalid_argument("schedule: beta_end must be in (0,1)");
    if (beta_start > beta_end) throw invalid_argument("schedule: beta_start must be <= beta_end");
}

noise_schedule build_schedule(const schedule_config& cfg) {
    cfg.validate();
    const int T = cfg.timesteps;
    noise_schedule s;
    s.cfg_ = cfg;
    s.T_ = T;
    s.zero_bridge_ = cfg.force_zero_bridge;
    s.beta_.assign(static_cast<std::size_t>(T) + 1, 0.0);
    s.alpha_.assign(static_cast<std::size_t>(T) + 1, 0.0);
    s.snr_.assign(static_cast<std::size_t>(T) + 1, 0.0);
    s.gamma_.assign(static_cast<std::size_t>(T) + 1, 0.0);
    s.beta_tilde_.assign(static_cast<std::size_t>(T) + 1, 0.0);
    s.c_bridge_.assign(static_cast<std::size_t>(T) + 1, 0.0);
    s.alpha_bar_.assign(static_cast<std::size_t>(T) + 1, 0.0);
    s.gamma_bar_.assign(static_cast<std::size_t>(T) + 1, 0.0);

    // Monotone ramps hitting both beta endpoints exactly.
    for (int t = 1; t <= T; ++t) {
        const double u = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
        double b;
        if (cfg.kind == schedule_kind::cosine)
            b = cfg.beta_start + 0.5 * (cfg.beta_end - cfg.beta_start) * (1.0 - std::cos(std::numbers::pi * u));
        else
            b = cfg.beta_start + (cfg.beta_end - cfg.beta_start) * u;
        s.beta_[static_cast<std::size_t>(t)] = b;
        s.alpha_[static_cast<std::size_t>(t)] = 1.0 - b;
    }

    s.alpha_bar_[0] = 1.0;
    for (int t = 1; t <= T; ++t)
        s.alpha_bar_[static_cast<std::size_t>(t)] =
            s.alpha_bar_[static_cast<std::size_t>(t - 1)] * s.alpha_[static_cast<std::size_t>(t)];

    for (int t = 1; t <= T; ++t) {
        const double ab = s.alpha_bar_[static_cast<std::size_t>(t)];
        s.snr_[static_cast<std::size_t>(t)] = ab / (1.0 - ab);
    }

    // gamma_t = SNR_T / SNR_t, so gamma_T == 1 exactly; the recurrence
    // gamma_bar_t = gamma_t + sqrt(alpha_t) gamma_bar_{t-1} has base
    // gamma_bar_0 = 0.
    const double snr_T = s.snr_[static_cast<std::size_t>(T)];
    for (int t = 1; t <= T; ++t) {
        const double g = cfg.force_zero_bridge ? 0.0 : snr_T / s.snr_[static_cast<std::size_t>(t)];
        s.gamma_[static_cast<std::size_t>(t)] = g;
        s.gamma_bar_[static_cast<std::size_t>(t)] =
            g + std::sqrt(s.alpha_[static_cast<std::size_t>(t)]) * s.gamma_bar_[static_cast<std::size_t>(t - 1)];
        s.c_bridge_[static_cast<std::size_t>(t)] =
            cfg.force_zero_bridge ? 0.0 : -g / std::sqrt(1.0 - s.beta_[static_cast<std::size_t>(t)]);
        s.beta_tilde_[static_cast<std::size_t>(t)] = s.beta_[static_cast<std::size_t>(t)] *
                                                     (1.0 - s.alpha_bar_[static_cast<std::size_t>(t - 1)]) /
                                                     (1.0 - s.alpha_bar_[static_cast<std::size_t>(t)]);
    }

    // construction self-checks: monotonicity and recurrence-vs-direct-sum
    // agreement must hold for every valid config
    for (int t = 1; t <= T; ++t) {
        if (!(s.alpha_bar_[static_cast<std::size_t>(t)] < s.alpha_bar_[static_cast<std::size_t>(t - 1)]) ||
            !(s.alpha_bar_[static_cast<std::size_t>(t)] > 0.0))
            throw numeric_error("schedule: alpha_bar is not strictly decreasing in (0,1)");
        if (!cfg.force_zero_bridge && t >= 2 &&
            !(s.gamma_[static_cast<std::size_t>(t)] > s.gamma_[static_cast<std::size_t>(t - 1)]))
            throw numeric_error("schedule: gamma is not strictly increasing");
        if (std::abs(s.gamma_bar_[static_cast<std::size_t>(t)] - gamma_bar_direct_sum(s, t)) > 1e-12)
            throw numeric_error("schedule: gamma_bar recurrence disagrees with the direct sum");
    }
    if (!cfg.force_zero_bridge && s.gamma_[static_cast<std::size_t>(T)] != 1.0)
        throw numeric_error("schedule: gamma_T is not exactly one");
    return s;
}

double bridge_correction_coeff(const noise_schedule& s, int t) {
    return s.c_bridge(t);
}

double bridge_correction_coeff_unsimplified(const noise_schedule& s, int t) {
    const double b = s.beta(t);
    const double ab_prev = s.alpha_bar(t - 1);
    const double ab = s.alpha_bar(t);
    return -(b + (1.0 - b) * (1.0 - ab_prev)) * s.gamma(t) / (std::sqrt(1.0 - b) * (1.0 - ab));
}

double snr_form_coeff(const noise_schedule& s, int t) {
    if (s.zero_bridge()) {
        s.beta(t);  // still range-check t
        return 0.0;
    }
    const double ab = s.alpha_bar(t);
    const double ab_T = s.alpha_bar(s.timesteps());
    return -(1.0 / std::sqrt(1.0 - s.beta(t))) * (ab_T * (1.0 - ab)) / (ab * (1.0 - ab_T));
}

double gamma_bar_direct_sum(const noise_schedule& s, int t) {
    if (t == 0) return 0.0;
    const double ab_t = s.alpha_bar(t);
    double sum = 0.0;
    for (int k = 1; k <= t; ++k) sum += s.gamma(k) * std::sqrt(ab_t / s.alpha_bar(k));
    return sum;
}

void dump_schedule_csv(const noise_schedule& s, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open '" + path + "' for writing");
    f << "t,beta,alpha_bar,snr,gamma,gamma_bar,beta_tilde,c_bridge\n";
    char buf[64];
    auto put = [&](double v, char sep) {
        std::snprintf(buf, sizeof buf, "%.17g%c", v, sep);
        f << buf;
    };
    for (int t = 1; t <= s.timesteps(); ++t) {
        f << t << ',';
        put(s.beta(t), ',');
        put(s.alpha_bar(t), ',');
        put(s.snr(t), ',');
        put(s.gamma(t), ',');
        put(s.gamma_bar(t), ',');
        put(s.beta_tilde(t), ',');
        put(s.c_bridge(t), '\n');
    }
    if (!f) throw io_error("write failed for '" + path + "'");
}

}  // namespace nbp::sched
