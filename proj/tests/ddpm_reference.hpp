#ifndef NBP_TESTS_DDPM_REFERENCE_HPP
#define NBP_TESTS_DDPM_REFERENCE_HPP

// Independently coded plain-DDPM reference used as the oracle for the
// zero-bridge ablation. Deliberately avoids the library's diffusion ops:
// everything here is written from the unconditional forward/reverse
// formulas, with its own beta ramp and cumulative products. Only the noise
// network itself is shared (the ablation statement is about the diffusion
// formulas, not the net). RNG draw order per (t, repeat) matches the
// documented sampler convention: context noise, reverse noise (t > 1),
// re-noise (when another repeat follows).

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ddpm_ref {

struct coeffs {
    std::vector<double> beta;       // [0..T], index 0 unused
    std::vector<double> alpha_bar;  // [0..T]
};

inline coeffs linear_coeffs(int T, double b0, double b1) {
    coeffs c;
    c.beta.assign(static_cast<std::size_t>(T) + 1, 0.0);
    c.alpha_bar.assign(static_cast<std::size_t>(T) + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        c.beta[static_cast<std::size_t>(t)] =
            T == 1 ? b0 : b0 + (b1 - b0) * static_cast<double>(t - 1) / static_cast<double>(T - 1);
        c.alpha_bar[static_cast<std::size_t>(t)] =
            c.alpha_bar[static_cast<std::size_t>(t - 1)] * (1.0 - c.beta[static_cast<std::size_t>(t)]);
    }
    return c;
}

inline coeffs cosine_coeffs(int T, double b0, double b1) {
    coeffs c;
    c.beta.assign(static_cast<std::size_t>(T) + 1, 0.0);
    c.alpha_bar.assign(static_cast<std::size_t>(T) + 1, 1.0);
    const double pi = 3.14159265358979323846;
    for (int t = 1; t <= T; ++t) {
        const double u = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
        c.beta[static_cast<std::size_t>(t)] = b0 + 0.5 * (b1 - b0) * (1.0 - std::cos(pi * u));
        c.alpha_bar[static_cast<std::size_t>(t)] =
            c.alpha_bar[static_cast<std::size_t>(t - 1)] * (1.0 - c.beta[static_cast<std::size_t>(t)]);
    }
    return c;
}

inline double beta_tilde(const coeffs& c, int t) {
    return c.beta[static_cast<std::size_t>(t)] * (1.0 - c.alpha_bar[static_cast<std::size_t>(t - 1)]) /
           (1.0 - c.alpha_bar[static_cast<std::size_t>(t)]);
}

// q(y_t | y_{t-1}) = N(sqrt(1-beta_t) y_{t-1}, beta_t I)
inline std::vector<double> q_step(const coeffs& c, const std::vector<double>& y_prev, int t,
                                  const std::vector<double>& eps) {
    const double a = std::sqrt(1.0 - c.beta[static_cast<std::size_t>(t)]);
    const double b = std::sqrt(c.beta[static_cast<std::size_t>(t)]);
    std::vector<double> out(y_prev.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * y_prev[i] + b * eps[i];
    return out;
}

// y_t = sqrt(alpha_bar_t) y_0 + sqrt(1-alpha_bar_t) eps
inline std::vector<double> marginal(const coeffs& c, const std::vector<double>& y0, int t,
                                    const std::vector<double>& eps) {
    const double a = std::sqrt(c.alpha_bar[static_cast<std::size_t>(t)]);
    const double s = std::sqrt(1.0 - c.alpha_bar[static_cast<std::size_t>(t)]);
    std::vector<double> out(y0.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * y0[i] + s * eps[i];
    return out;
}

// mu = (y_t - beta_t/sqrt(1-alpha_bar_t) eps_hat) / sqrt(alpha_t)
inline std::vector<double> reverse_mean(const coeffs& c, const std::vector<double>& y_t, int t,
                                        const std::vector<double>& eps_hat) {
    const double inv = 1.0 / std::sqrt(1.0 - c.beta[static_cast<std::size_t>(t)]);
    const double e = c.beta[static_cast<std::size_t>(t)] /
                     std::sqrt(1.0 - c.alpha_bar[static_cast<std::size_t>(t)]);
    std::vector<double> out(y_t.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv * (y_t[i] - e * eps_hat[i]);
    return out;
}

// DDPM posterior mean of q(y_{t-1} | y_t, y_0)
inline std::vector<double> posterior_mean(const coeffs& c, const std::vector<double>& y_t,
                                          const std::vector<double>& y0, int t) {
    const double b = c.beta[static_cast<std::size_t>(t)];
    const double ab = c.alpha_bar[static_cast<std::size_t>(t)];
    const double abp = c.alpha_bar[static_cast<std::size_t>(t - 1)];
    const double cy_t = std::sqrt(1.0 - b) * (1.0 - abp) / (1.0 - ab);
    const double cy_0 = b * std::sqrt(abp) / (1.0 - ab);
    std::vector<double> out(y_t.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cy_t * y_t[i] + cy_0 * y0[i];
    return out;
}

// One block of standard normals from a fresh distribution object, matching
// the library convention of one distribution per tensor fill.
inline std::vector<double> draw_block(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> out(n);
    for (auto& v : out) v = n01(rng);
    return out;
}

// Conditional sampler for one chain, following the documented draw order.
// EpsModel: (y_all flat, t) -> eps_hat flat; points are ordered targets
// first then context.
template <class EpsModel>
std::vector<double> conditional_sample(const coeffs& c, int T, const std::vector<double>& y_ctx,
                                       std::size_t n_tgt, int repaint, std::mt19937_64& rng,
                                       EpsModel&& eps_model) {
    const std::size_t n_ctx = y_ctx.size();
    std::vector<double> y_tgt = draw_block(rng, n_tgt);

    for (int t = T; t >= 1; --t) {
        for (int rep = 0; rep < repaint; ++rep) {
            std::vector<double> y_all(n_tgt + n_ctx);
            std::copy(y_tgt.begin(), y_tgt.end(), y_all.begin());
            if (n_ctx) {
                const double a = std::sqrt(c.alpha_bar[static_cast<std::size_t>(t)]);
                const double s = std::sqrt(1.0 - c.alpha_bar[static_cast<std::size_t>(t)]);
                auto z = draw_block(rng, n_ctx);
                for (std::size_t i = 0; i < n_ctx; ++i) y_all[n_tgt + i] = a * y_ctx[i] + s * z[i];
            }
            auto eps_hat = eps_model(y_all, t);
            auto mu = reverse_mean(c, y_all, t, eps_hat);
            std::vector<double> y_prev(n_tgt);
            if (t > 1) {
                const double sd = std::sqrt(beta_tilde(c, t));
                auto z = draw_block(rng, n_tgt);
                for (std::size_t i = 0; i < n_tgt; ++i) y_prev[i] = mu[i] + sd * z[i];
            } else {
                for (std::size_t i = 0; i < n_tgt; ++i) y_prev[i] = mu[i];
            }
            if (rep + 1 < repaint) {
                const double a = std::sqrt(1.0 - c.beta[static_cast<std::size_t>(t)]);
                const double b = std::sqrt(c.beta[static_cast<std::size_t>(t)]);
                auto z = draw_block(rng, n_tgt);
                for (std::size_t i = 0; i < n_tgt; ++i) y_tgt[i] = a * y_prev[i] + b * z[i];
            } else {
                y_tgt = std::move(y_prev);
            }
        }
    }
    return y_tgt;
}

}  // namespace ddpm_ref

#endif
