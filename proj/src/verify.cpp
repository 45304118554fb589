#include "nbp/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "nbp/diffusion.hpp"
#include "nbp/schedule.hpp"

namespace nbp::verify {

namespace {

using num::dtensor;

sched::noise_schedule paper_schedule(bool zero_bridge = false) {
    return sched::build_schedule({sched::schedule_kind::cosine, 500, 3e-4, 0.5, zero_bridge});
}

check_result check_schedule_identities() {
    auto s = paper_schedule();
    double max_rec = 0.0, max_tel = 0.0;
    for (int t = 1; t <= s.timesteps(); ++t) {
        max_rec = std::max(max_rec, std::abs(s.gamma_bar(t) - sched::gamma_bar_direct_sum(s, t)));
        double acc = 0.0;
        for (int k = 1; k <= t; ++k) acc += s.beta(k) * s.alpha_bar(t) / s.alpha_bar(k);
        max_tel = std::max(max_tel, std::abs(acc - (1.0 - s.alpha_bar(t))));
    }
    bool mono = s.gamma(s.timesteps()) == 1.0;
    for (int t = 2; t <= s.timesteps() && mono; ++t) mono = s.gamma(t) > s.gamma(t - 1);
    char d[160];
    std::snprintf(d, sizeof d, "recurrence residual %.2e (<=1e-12), telescoping %.2e (<=1e-10), gamma_T==1 %s",
                  max_rec, max_tel, mono ? "yes" : "NO");
    return {"schedule-recurrence-and-telescoping", max_rec <= 1e-12 && max_tel <= 1e-10 && mono, d};
}

check_result check_correction_dual_forms() {
    double worst = 0.0;
    for (auto cfg : {sched::schedule_config{sched::schedule_kind::cosine, 500, 3e-4, 0.5, false},
                     sched::schedule_config{sched::schedule_kind::linear, 50, 1e-3, 0.3, false}}) {
        auto s = sched::build_schedule(cfg);
        for (int t = 1; t <= s.timesteps(); ++t) {
            const double c = sched::bridge_correction_coeff(s, t);
            worst = std::max(worst, std::abs(c - sched::bridge_correction_coeff_unsimplified(s, t)));
            worst = std::max(worst, std::abs(c - sched::snr_form_coeff(s, t)));
        }
    }
    char d[96];
    std::snprintf(d, sizeof d, "max disagreement %.2e (<=1e-12)", worst);
    return {"bridge-correction-dual-forms", worst <= 1e-12, d};
}

check_result check_marginal_vs_step() {
    // scalar y0=1, x=2, T=50 linear, step-composed chains vs closed form
    auto s = sched::build_schedule({sched::schedule_kind::linear, 50, 1e-3, 0.3, false});
    const int n = 200000;
    const int T = s.timesteps();
    std::vector<double> sum(static_cast<std::size_t>(T) + 1, 0.0), sumsq(static_cast<std::size_t>(T) + 1, 0.0);
    rng_t rng(1234);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int c = 0; c < n; ++c) {
        double y = 1.0;
        for (int t = 1; t <= T; ++t) {
            y = std::sqrt(1.0 - s.beta(t)) * y + s.gamma(t) * 2.0 + std::sqrt(s.beta(t)) * n01(rng);
            sum[static_cast<std::size_t>(t)] += y;
            sumsq[static_cast<std::size_t>(t)] += y * y;
        }
    }
    double worst_z = 0.0;
    for (int t = 1; t <= T; ++t) {
        const double mean = sum[static_cast<std::size_t>(t)] / n;
        const double var = sumsq[static_cast<std::size_t>(t)] / n - mean * mean;
        const double want_mean = std::sqrt(s.alpha_bar(t)) + s.gamma_bar(t) * 2.0;
        const double want_var = 1.0 - s.alpha_bar(t);
        worst_z = std::max(worst_z, std::abs(mean - want_mean) / std::sqrt(want_var / n));
        worst_z = std::max(worst_z, std::abs(var - want_var) / (want_var * std::sqrt(2.0 / (n - 1))));
    }
    char d[96];
    std::snprintf(d, sizeof d, "worst |z| = %.2f over %d chains (<4)", worst_z, n);
    return {"marginal-vs-step-monte-carlo", worst_z < 4.0, d};
}

check_result check_reparameterization(const std::string& inject_fault) {
    const bool flip = inject_fault == "c-bridge-sign-flip";
    auto s = sched::build_schedule({sched::schedule_kind::linear, 50, 1e-3, 0.3, false});
    rng_t rng(55);
    std::uniform_int_distribution<int> td(2, 50);
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const int t = td(rng);
        auto y0 = num::standard_normal_like<double>({2, 1}, rng);
        auto x = num::standard_normal_like<double>({2, 1}, rng);
        auto eps = num::standard_normal_like<double>({2, 1}, rng);
        auto y_t = model::q_marginal_sample(y0, x, t, eps, s);
        auto mu_post = model::posterior_mean_oracle(y_t, y0, x, t, s);
        // reverse mean, optionally with the injected sign fault on C(t)
        const double inv = 1.0 / std::sqrt(1.0 - s.beta(t));
        const double ec = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
        const double c = (flip ? -1.0 : 1.0) * s.c_bridge(t);
        for (std::size_t i = 0; i < 2; ++i) {
            const double mu = inv * (y_t[i] - ec * eps[i]) + c * x[i];
            worst = std::max(worst, std::abs(mu - mu_post[i]));
        }
    }
    char d[96];
    std::snprintf(d, sizeof d, "max |reverse_mean - posterior_oracle| = %.2e (<=1e-8)%s", worst,
                  flip ? " [fault injected]" : "");
    return {"reparameterization-identity", worst <= 1e-8, d};
}

check_result check_ablation_ddpm() {
    // locally coded plain-DDPM formulas vs the zero-bridge library ops
    auto s = sched::build_schedule({sched::schedule_kind::linear, 50, 1e-3, 0.3, true});
    rng_t rng(66);
    std::uniform_int_distribution<int> td(1, 50);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const int t = td(rng);
        auto y = num::standard_normal_like<double>({3, 1}, rng);
        auto y0 = num::standard_normal_like<double>({3, 1}, rng);
        auto x = num::standard_normal_like<double>({3, 1}, rng);
        auto eps = num::standard_normal_like<double>({3, 1}, rng);
        const double beta = s.beta(t), ab = s.alpha_bar(t);
        auto step = model::q_step(y, x, t, eps, s);
        auto marg = model::q_marginal_sample(y0, x, t, eps, s);
        auto rev = model::reverse_mean(y, x, t, eps, s);
        for (std::size_t i = 0; i < 3; ++i) {
            worst = std::max(worst, std::abs(step[i] - (std::sqrt(1.0 - beta) * y[i] + std::sqrt(beta) * eps[i])));
            worst = std::max(worst, std::abs(marg[i] - (std::sqrt(ab) * y0[i] + std::sqrt(1.0 - ab) * eps[i])));
            worst = std::max(worst,
                             std::abs(rev[i] - (y[i] - beta / std::sqrt(1.0 - ab) * eps[i]) / std::sqrt(1.0 - beta)));
        }
    }
    char d[96];
    std::snprintf(d, sizeof d, "max deviation from plain DDPM formulas %.2e (<=1e-12)", worst);
    return {"ablation-ddpm-equality", worst <= 1e-12, d};
}

check_result check_equivariance() {
    model::denoiser_config cfg{2, 8, 2, 8};
    rng_t rng(77);
    double worst = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
        auto p = model::init_denoiser<float>(cfg, 500 + static_cast<std::uint64_t>(rep));
        num::fill_uniform(p.w.head_w2, rng, -0.5, 0.5);
        num::raw_ctx<float> ctx;
        auto w = lift_weights(ctx, p);
        const std::size_t N = 6, D = 3;
        num::ftensor x({N, D}), y({N, D});
        num::fill_uniform(x, rng, -1, 1);
        num::fill_uniform(y, rng, -1, 1);
        auto out = predict_noise(ctx, cfg, w, x, y, 17);
        std::vector<std::size_t> pi(N);
        std::iota(pi.begin(), pi.end(), 0u);
        std::shuffle(pi.begin(), pi.end(), rng);
        auto out_pi = predict_noise(ctx, cfg, w, num::gather_rows(x, pi), num::gather_rows(y, pi), 17);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t d = 0; d < D; ++d)
                worst = std::max(worst,
                                 std::abs(static_cast<double>(out_pi[n * D + d]) - out[pi[n] * D + d]));

        // feature-axis permutation at the grid level
        auto s = num::standard_normal_like<float>({N, D, 8}, rng);
        auto g = bi_block(ctx, cfg, w.layers[0], s);
        std::vector<std::size_t> pd(D);
        std::iota(pd.begin(), pd.end(), 0u);
        std::shuffle(pd.begin(), pd.end(), rng);
        num::ftensor s_pd({N, D, 8});
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t d = 0; d < D; ++d)
                std::copy_n(s.data() + (n * D + pd[d]) * 8, 8, s_pd.data() + (n * D + d) * 8);
        auto g_pd = bi_block(ctx, cfg, w.layers[0], s_pd);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t d = 0; d < D; ++d)
                for (std::size_t h = 0; h < 8; ++h)
                    worst = std::max(worst, std::abs(static_cast<double>(g_pd[(n * D + d) * 8 + h]) -
                                                     g[(n * D + pd[d]) * 8 + h]));
    }
    char d[96];
    std::snprintf(d, sizeof d, "max equivariance deviation %.2e (<=1e-5, single precision)", worst);
    return {"equivariance-n-and-d", worst <= 1e-5, d};
}

check_result check_gradients() {
    model::denoiser_config cfg{2, 8, 2, 8};
    rng_t rng(88);
    auto p = model::init_denoiser<double>(cfg, 999);
    num::fill_uniform(p.w.head_w2, rng, -0.5, 0.5);
    dtensor x({4, 2}), y({4, 2});
    num::fill_uniform(x, rng, -1, 1);
    num::fill_uniform(y, rng, -1, 1);

    auto eval = [&]() {
        num::raw_ctx<double> ctx;
        auto w = lift_weights(ctx, p);
        auto out = predict_noise(ctx, cfg, w, x, y, 9);
        return num::reduce_mean_all(num::mul(out, out)).item();
    };
    num::tape<double> tp;
    num::tape_ctx<double> ctx{tp};
    std::vector<num::var> reg;
    auto w = lift_weights(ctx, p, &reg);
    auto out = predict_noise(ctx, cfg, w, x, y, 9);
    tp.backward(tp.reduce_mean_all(tp.mul(out, out)));

    double worst = 0.0;
    std::size_t reg_i = 0;
    p.w.for_each([&](const std::string&, dtensor& param) {
        const auto& g = tp.grad(reg[reg_i++]);
        for (std::size_t i = 0; i < param.numel(); i += std::max<std::size_t>(1, param.numel() / 4)) {
            const double x0 = param[i];
            const double h = 1e-5 * std::max(1.0, std::abs(x0));
            param[i] = x0 + h;
            const double up = eval();
            param[i] = x0 - h;
            const double dn = eval();
            param[i] = x0;
            const double fd = (up - dn) / (2.0 * h);
            worst = std::max(worst, std::abs(g[i] - fd) / std::max({1.0, std::abs(g[i]), std::abs(fd)}));
        }
    });
    char d[96];
    std::snprintf(d, sizeof d, "max relative error vs central differences %.2e (<=1e-6)", worst);
    return {"gradient-check", worst <= 1e-6, d};
}

check_result check_endpoint_init() {
    auto s = paper_schedule();
    dtensor x_a({1, 1}, {1.5});
    rng_t rng(99);
    const std::size_t S = 10000;
    auto init = model::sampler_init_targets(x_a, S, s, false, rng);
    double mean = 0.0;
    for (std::size_t i = 0; i < S; ++i) mean += init[i];
    mean /= static_cast<double>(S);
    const double want = s.gamma_bar(s.timesteps()) * 1.5;
    const double z = std::abs(mean - want) / (1.0 / std::sqrt(static_cast<double>(S)));
    char d[96];
    std::snprintf(d, sizeof d, "|init mean - gamma_bar_T x| = %.2e (%.2f se, < 4)", std::abs(mean - want), z);
    return {"endpoint-init-mean", z < 4.0, d};
}

}  // namespace

std::vector<check_result> run_verification(const std::string& inject_fault) {
    if (!inject_fault.empty() && inject_fault != "c-bridge-sign-flip")
        throw invalid_argument("verify: unknown fault '" + inject_fault + "'");
    std::vector<check_result> out;
    out.push_back(check_schedule_identities());
    out.push_back(check_correction_dual_forms());
    out.push_back(check_marginal_vs_step());
    out.push_back(check_reparameterization(inject_fault));
    out.push_back(check_ablation_ddpm());
    out.push_back(check_equivariance());
    out.push_back(check_gradients());
    out.push_back(check_endpoint_init());
    return out;
}

std::string format_table(const std::vector<check_result>& results) {
    std::string out;
    char line[256];
    for (const auto& r : results) {
        std::snprintf(line, sizeof line, "%-36s %s  %s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                      r.detail.c_str());
        out += line;
    }
    int failed = 0;
    for (const auto& r : results)
        if (!r.pass) ++failed;
    std::snprintf(line, sizeof line, "%d/%zu checks passed\n", static_cast<int>(results.size()) - failed,
                  results.size());
    out += line;
    return out;
}

}  // namespace nbp::verify
