// Acceptance suite: every criterion computes its own verdict, prints one
// pass/fail line, and only then asserts, so the table is complete even when
// something goes red. Criterion 8 trains the two desk-scale models (bridge
// on, bridge off) with identical seeds; results are cached under the working
// directory keyed by the config echo since training is deterministic within
// a build.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ddpm_reference.hpp"
#include "doctest.h"
#include "nbp.h"
#include "nbp/evalmetrics.hpp"
#include "nbp/taskio.hpp"
#include "nbp/trainer.hpp"

using namespace nbp;

namespace {

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("[acceptance] criterion %2d: %s  %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

sched::noise_schedule paper_schedule(bool zero_bridge = false) {
    return sched::build_schedule({sched::schedule_kind::cosine, 500, 3e-4, 0.5, zero_bridge});
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE_MESSAGE(f, "missing file ", path);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

std::filesystem::path work_dir() {
    auto p = std::filesystem::current_path() / "acceptance_work";
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("criterion 1: schedule identities on the T=500 cosine config") {
    const double t0 = now_s();
    auto s = paper_schedule();
    double rec = 0, tel = 0, dual = 0;
    for (int t = 1; t <= 500; ++t) {
        rec = std::max(rec, std::abs(s.gamma_bar(t) - sched::gamma_bar_direct_sum(s, t)));
        double acc = 0;
        for (int k = 1; k <= t; ++k) acc += s.beta(k) * s.alpha_bar(t) / s.alpha_bar(k);
        tel = std::max(tel, std::abs(acc - (1.0 - s.alpha_bar(t))));
        const double c = sched::bridge_correction_coeff(s, t);
        dual = std::max(dual, std::abs(c - sched::bridge_correction_coeff_unsimplified(s, t)));
        dual = std::max(dual, std::abs(c - sched::snr_form_coeff(s, t)));
    }
    const bool gamma_T_exact = s.gamma(500) == 1.0;
    const double dt = now_s() - t0;
    char d[200];
    std::snprintf(d, sizeof d,
                  "recurrence %.1e<=1e-12, telescoping %.1e<=1e-10, gamma_T==1 %s, C(t) forms %.1e<=1e-12, %.2fs<1s",
                  rec, tel, gamma_T_exact ? "yes" : "no", dual, dt);
    const bool pass = rec <= 1e-12 && tel <= 1e-10 && gamma_T_exact && dual <= 1e-12 && dt < 1.0;
    report(1, pass, d);
    CHECK(pass);
}

TEST_CASE("criterion 2: marginal consistency, 200000 step-composed chains") {
    const double t0 = now_s();
    auto s = sched::build_schedule({sched::schedule_kind::linear, 50, 1e-3, 0.3, false});
    const int n = 200000, T = 50;
    std::vector<double> sum(T + 1, 0.0), sumsq(T + 1, 0.0);
    rng_t rng(24601);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int c = 0; c < n; ++c) {
        double y = 1.0;
        for (int t = 1; t <= T; ++t) {
            y = std::sqrt(1.0 - s.beta(t)) * y + s.gamma(t) * 2.0 + std::sqrt(s.beta(t)) * n01(rng);
            sum[t] += y;
            sumsq[t] += y * y;
        }
    }
    double worst = 0;
    for (int t = 1; t <= T; ++t) {
        const double mean = sum[t] / n;
        const double var = sumsq[t] / n - mean * mean;
        const double wm = std::sqrt(s.alpha_bar(t)) + s.gamma_bar(t) * 2.0;
        const double wv = 1.0 - s.alpha_bar(t);
        worst = std::max(worst, std::abs(mean - wm) / std::sqrt(wv / n));
        worst = std::max(worst, std::abs(var - wv) / (wv * std::sqrt(2.0 / (n - 1))));
    }
    const double dt = now_s() - t0;
    char d[160];
    std::snprintf(d, sizeof d, "worst |z| = %.2f over all t (<4), %.1fs<60s", worst, dt);
    const bool pass = worst < 4.0 && dt < 60.0;
    report(2, pass, d);
    CHECK(pass);
}

TEST_CASE("criterion 3: reparameterization identity over 1000 random tuples") {
    const double t0 = now_s();
    auto s = sched::build_schedule({sched::schedule_kind::linear, 50, 1e-3, 0.3, false});
    rng_t rng(31415);
    std::uniform_int_distribution<int> td(2, 50);
    double worst = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        const int t = td(rng);
        auto y0 = num::standard_normal_like<double>({3, 1}, rng);
        auto x = num::standard_normal_like<double>({3, 1}, rng);
        auto eps = num::standard_normal_like<double>({3, 1}, rng);
        auto y_t = model::q_marginal_sample(y0, x, t, eps, s);
        auto a = model::reverse_mean(y_t, x, t, eps, s);
        auto b = model::posterior_mean_oracle(y_t, y0, x, t, s);
        for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    const double dt = now_s() - t0;
    char d[120];
    std::snprintf(d, sizeof d, "max deviation %.2e (<=1e-8), %.2fs<1s", worst, dt);
    const bool pass = worst <= 1e-8 && dt < 1.0;
    report(3, pass, d);
    CHECK(pass);
}

TEST_CASE("criterion 4: zero-bridge ablation matches an independent DDPM reference") {
    const int T = 10;
    auto s = sched::build_schedule({sched::schedule_kind::linear, T, 1e-3, 0.3, true});
    auto c = ddpm_ref::linear_coeffs(T, 1e-3, 0.3);

    model::diffusion_model<double> m;
    m.schedule = s;
    m.net_cfg = {2, 8, 2, 8};
    m.params = model::init_denoiser<double>(m.net_cfg, 404);
    m.alignment.kind = model::alignment_kind::identity;
    m.bridge_enabled = false;
    rng_t hr(405);
    num::fill_uniform(m.params.w.head_w2, hr, -0.4, 0.4);

    double worst = 0;
    rng_t rng(406);
    std::uniform_int_distribution<int> td(1, T);

    // q_step, q_marginal_sample, reverse_mean over 100 random inputs
    for (int rep = 0; rep < 100; ++rep) {
        const int t = td(rng);
        auto y = num::standard_normal_like<double>({4, 1}, rng);
        auto y0 = num::standard_normal_like<double>({4, 1}, rng);
        auto x = num::standard_normal_like<double>({4, 1}, rng);
        auto eps = num::standard_normal_like<double>({4, 1}, rng);
        auto v = [&](const num::dtensor& q) { return std::vector<double>(q.data(), q.data() + 4); };
        auto r1 = model::q_step(y, x, t, eps, s);
        auto e1 = ddpm_ref::q_step(c, v(y), t, v(eps));
        auto r2 = model::q_marginal_sample(y0, x, t, eps, s);
        auto e2 = ddpm_ref::marginal(c, v(y0), t, v(eps));
        auto r3 = model::reverse_mean(y, x, t, eps, s);
        auto e3 = ddpm_ref::reverse_mean(c, v(y), t, v(eps));
        for (std::size_t i = 0; i < 4; ++i) {
            worst = std::max(worst, std::abs(r1[i] - e1[i]));
            worst = std::max(worst, std::abs(r2[i] - e2[i]));
            worst = std::max(worst, std::abs(r3[i] - e3[i]));
        }
    }

    // training_loss over 100 random tasks: the reference composes its own
    // marginal and the plain l2 mean, sharing only the noise network
    num::raw_ctx<double> rc;
    auto w = lift_weights(rc, m.params);
    for (int rep = 0; rep < 100; ++rep) {
        data::gp_task_config tc;
        tc.n_context_hi = 4;
        tc.n_target = 6;
        auto tk = data::sample_gp_task(tc, {data::kernel_kind::squared_exponential, 0.25},
                                       static_cast<std::uint64_t>(500 + rep));
        rng_t drng(static_cast<std::uint64_t>(900 + rep));
        auto draw = model::draw_noise<double>(tk, s, drng);
        auto loss = model::task_loss(
            rc,
            [&](num::raw_ctx<double>& cc, const num::dtensor& y_t, const num::dtensor& x, int t) {
                return predict_noise(cc, m.net_cfg, w, x, y_t, t);
            },
            tk, s, m.alignment, draw, model::loss_kind::l2);

        const std::size_t n = tk.y.shape()[0];
        std::vector<double> y0v(tk.y.data(), tk.y.data() + n), epsv(draw.eps.data(), draw.eps.data() + n);
        auto y_t_ref = ddpm_ref::marginal(c, y0v, draw.t, epsv);
        num::dtensor y_t_t({n, 1}, std::vector<double>(y_t_ref));
        auto eps_hat = predict_noise(rc, m.net_cfg, w, model::cast_tensor<double>(tk.x), y_t_t, draw.t);
        double ref_loss = 0;
        for (std::size_t i = 0; i < n; ++i) ref_loss += (eps_hat[i] - epsv[i]) * (eps_hat[i] - epsv[i]);
        ref_loss /= static_cast<double>(n);
        worst = std::max(worst, std::abs(loss.item() - ref_loss));
    }

    // conditional sampler over 100 random chains (fresh seeds)
    for (int rep = 0; rep < 100; ++rep) {
        rng_t xr(static_cast<std::uint64_t>(50 + rep));
        auto x_tgt = num::standard_normal_like<double>({3, 1}, xr);
        auto x_ctx = num::standard_normal_like<double>({2, 1}, xr);
        auto y_ctx = num::standard_normal_like<double>({2, 1}, xr);
        num::dtensor x_all({5, 1});
        std::copy_n(x_tgt.data(), 3, x_all.data());
        std::copy_n(x_ctx.data(), 2, x_all.data() + 3);

        model::sampler_config sc;
        sc.seed = static_cast<std::uint64_t>(7000 + rep);
        sc.repaint_repeats = 2;
        auto mine = model::conditional_sample(x_ctx, y_ctx, x_tgt, 1, m, sc);
        rng_t ref_rng(sc.seed);
        auto ref = ddpm_ref::conditional_sample(
            c, T, std::vector<double>(y_ctx.data(), y_ctx.data() + 2), 3, 2, ref_rng,
            [&](const std::vector<double>& y_all, int t) {
                num::dtensor yt({1, 5, 1}, std::vector<double>(y_all));
                auto xb = num::reshape(x_all, {1, 5, 1});
                auto eh = predict_noise(rc, m.net_cfg, w, xb, yt, t);
                return std::vector<double>(eh.data(), eh.data() + 5);
            });
        for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::abs(mine[i] - ref[i]));
    }

    char d[120];
    std::snprintf(d, sizeof d, "five ops vs independent DDPM reference: max |diff| = %.2e (<=1e-12)", worst);
    const bool pass = worst <= 1e-12;
    report(4, pass, d);
    CHECK(pass);
}

TEST_CASE("criterion 5: equivariance, 50 seeds per axis at single precision") {
    model::denoiser_config cfg{2, 16, 4, 16};
    double worst_n = 0, worst_d = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        rng_t rng(9000 + seed);
        auto p = model::init_denoiser<float>(cfg, 100 + seed);
        num::fill_uniform(p.w.head_w2, rng, -0.5, 0.5);
        num::raw_ctx<float> ctx;
        auto w = lift_weights(ctx, p);

        const std::size_t N = 8, D = 3;
        num::ftensor x({N, D}), y({N, D});
        num::fill_uniform(x, rng, -2, 2);
        num::fill_uniform(y, rng, -2, 2);
        std::uniform_int_distribution<int> tdist(1, 500);
        const int t = tdist(rng);
        auto out = predict_noise(ctx, cfg, w, x, y, t);
        std::vector<std::size_t> pi(N);
        std::iota(pi.begin(), pi.end(), 0u);
        std::shuffle(pi.begin(), pi.end(), rng);
        auto out_pi = predict_noise(ctx, cfg, w, num::gather_rows(x, pi), num::gather_rows(y, pi), t);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < D; ++j)
                worst_n =
                    std::max(worst_n, std::abs(static_cast<double>(out_pi[i * D + j]) - out[pi[i] * D + j]));

        auto sgrid = num::standard_normal_like<float>({N, D, 16}, rng);
        auto g = bi_block(ctx, cfg, w.layers[0], sgrid);
        std::vector<std::size_t> pd(D);
        std::iota(pd.begin(), pd.end(), 0u);
        std::shuffle(pd.begin(), pd.end(), rng);
        num::ftensor s_pd({N, D, 16});
        for (std::size_t nrow = 0; nrow < N; ++nrow)
            for (std::size_t drow = 0; drow < D; ++drow)
                std::copy_n(sgrid.data() + (nrow * D + pd[drow]) * 16, 16, s_pd.data() + (nrow * D + drow) * 16);
        auto g_pd = bi_block(ctx, cfg, w.layers[0], s_pd);
        for (std::size_t nrow = 0; nrow < N; ++nrow)
            for (std::size_t drow = 0; drow < D; ++drow)
                for (std::size_t h = 0; h < 16; ++h)
                    worst_d = std::max(worst_d, std::abs(static_cast<double>(g_pd[(nrow * D + drow) * 16 + h]) -
                                                         g[(nrow * D + pd[drow]) * 16 + h]));
    }
    char d[140];
    std::snprintf(d, sizeof d, "N-axis max %.2e, D-axis max %.2e (both <=1e-5, 50 seeds each)", worst_n, worst_d);
    const bool pass = worst_n <= 1e-5 && worst_d <= 1e-5;
    report(5, pass, d);
    CHECK(pass);
}

TEST_CASE("criterion 6: gradients vs central finite differences, 20 seeds") {
    model::denoiser_config cfg{2, 8, 2, 8};
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        rng_t rng(4000 + seed);
        auto p = model::init_denoiser<double>(cfg, 300 + seed);
        num::fill_uniform(p.w.head_w2, rng, -0.5, 0.5);
        num::fill_uniform(p.w.head_b2, rng, -0.5, 0.5);

        data::gp_task_config tc;
        tc.n_context_hi = 3;
        tc.n_target = 4;
        auto tk = data::sample_gp_task(tc, {data::kernel_kind::squared_exponential, 0.25}, 600 + seed);
        auto s = sched::build_schedule({sched::schedule_kind::linear, 20, 1e-3, 0.3, false});
        rng_t drng(700 + seed);
        auto draw = model::draw_noise<double>(tk, s, drng);
        model::alignment_spec id;
        num::dtensor x({4, 2}), y({4, 2});
        num::fill_uniform(x, rng, -1, 1);
        num::fill_uniform(y, rng, -1, 1);
        auto sgrid = num::standard_normal_like<double>({4, 2, 8}, rng);

        // every building block gets a scalar head (mean of squares); the
        // last entry is the full training loss itself
        enum block { b_preprocess, b_mhsa_n, b_mhsa_d, b_biblock, b_predict, b_loss, b_count };
        for (int which = 0; which < b_count; ++which) {
            auto forward = [&](auto& ctx, const auto& wts) -> double {
                using C = std::decay_t<decltype(ctx)>;
                if (which == b_loss) {
                    auto h = model::task_loss(
                        ctx,
                        [&](C& cc, const num::dtensor& y_t, const num::dtensor& xx, int t) {
                            return predict_noise(cc, cfg, wts, xx, y_t, t);
                        },
                        tk, s, id, draw, model::loss_kind::l2);
                    return ctx.value(h).item();
                }
                typename C::handle h;
                switch (which) {
                    case b_preprocess: h = preprocess(ctx, cfg, wts, x, y, 7); break;
                    case b_mhsa_n:
                        h = mhsa(ctx, cfg, wts.layers[0].n_wq, wts.layers[0].n_wk, wts.layers[0].n_wv,
                                 wts.layers[0].n_wo, ctx.constant(sgrid), true);
                        break;
                    case b_mhsa_d:
                        h = mhsa(ctx, cfg, wts.layers[1].d_wq, wts.layers[1].d_wk, wts.layers[1].d_wv,
                                 wts.layers[1].d_wo, ctx.constant(sgrid), false);
                        break;
                    case b_biblock: h = bi_block(ctx, cfg, wts.layers[0], ctx.constant(sgrid)); break;
                    default: h = predict_noise(ctx, cfg, wts, x, y, 7); break;
                }
                return ctx.value(ctx.reduce_mean_all(ctx.mul(h, h))).item();
            };

            num::tape<double> tp;
            num::tape_ctx<double> tctx{tp};
            std::vector<num::var> reg;
            auto wh = lift_weights(tctx, p, &reg);
            if (which == b_loss) {
                auto h = model::task_loss(
                    tctx,
                    [&](num::tape_ctx<double>& cc, const num::dtensor& y_t, const num::dtensor& xx, int t) {
                        return predict_noise(cc, cfg, wh, xx, y_t, t);
                    },
                    tk, s, id, draw, model::loss_kind::l2);
                tp.backward(h);
            } else {
                typename num::tape_ctx<double>::handle h;
                switch (which) {
                    case b_preprocess: h = preprocess(tctx, cfg, wh, x, y, 7); break;
                    case b_mhsa_n:
                        h = mhsa(tctx, cfg, wh.layers[0].n_wq, wh.layers[0].n_wk, wh.layers[0].n_wv,
                                 wh.layers[0].n_wo, tctx.constant(sgrid), true);
                        break;
                    case b_mhsa_d:
                        h = mhsa(tctx, cfg, wh.layers[1].d_wq, wh.layers[1].d_wk, wh.layers[1].d_wv,
                                 wh.layers[1].d_wo, tctx.constant(sgrid), false);
                        break;
                    case b_biblock: h = bi_block(tctx, cfg, wh.layers[0], tctx.constant(sgrid)); break;
                    default: h = predict_noise(tctx, cfg, wh, x, y, 7); break;
                }
                tp.backward(tp.reduce_mean_all(tp.mul(h, h)));
            }

            std::size_t reg_i = 0;
            p.w.for_each([&](const std::string&, num::dtensor& param) {
                const auto& g = tp.grad(reg[reg_i++]);
                for (std::size_t i = 0; i < param.numel(); i += std::max<std::size_t>(1, param.numel() / 2)) {
                    const double x0 = param[i];
                    const double h = 1e-5 * std::max(1.0, std::abs(x0));
                    num::raw_ctx<double> rc1;
                    param[i] = x0 + h;
                    const double up = forward(rc1, lift_weights(rc1, p));
                    num::raw_ctx<double> rc2;
                    param[i] = x0 - h;
                    const double dn = forward(rc2, lift_weights(rc2, p));
                    param[i] = x0;
                    const double fd = (up - dn) / (2.0 * h);
                    worst = std::max(worst, std::abs(g[i] - fd) / std::max({1.0, std::abs(g[i]), std::abs(fd)}));
                }
            });
        }
    }
    char d[120];
    std::snprintf(d, sizeof d, "all blocks + training loss: max relative error %.2e (<=1e-6)", worst);
    const bool pass = worst <= 1e-6;
    report(6, pass, d);
    CHECK(pass);
}

TEST_CASE("criterion 7: sampler init mean matches gamma_bar_T x over 10^4 draws") {
    auto s = paper_schedule();
    num::dtensor x_a({1, 1}, {1.5});
    rng_t rng(777);
    const std::size_t S = 10000;
    auto init = model::sampler_init_targets(x_a, S, s, false, rng);
    double mean = 0;
    for (std::size_t i = 0; i < S; ++i) mean += init[i];
    mean /= static_cast<double>(S);
    const double want = s.gamma_bar(500) * 1.5;
    const double se = 1.0 / std::sqrt(static_cast<double>(S));
    const double z = std::abs(mean - want) / se;
    char d[120];
    std::snprintf(d, sizeof d, "|mean - gamma_bar_T x| = %.4f = %.2f se (<=4)", std::abs(mean - want), z);
    const bool pass = z <= 4.0;
    report(7, pass, d);
    CHECK(pass);
}

// ---------------------------------------------------------------------------
// criterion 8: the desk-scale bridge-vs-baseline comparison
// ---------------------------------------------------------------------------

namespace {

io::run_config desk_config(bool bridge) {
    io::run_config rc;  // defaults already mirror the documented experiment
    rc.label = bridge ? "nbp" : "ndp";
    rc.diffusion.bridge_enabled = bridge;
    rc.train.epochs = 100;
    rc.train.seed = 20240;
    rc.dataset.n_tasks = 16;
    rc.eval.n_samples = 128;
    rc.eval.repaint = 1;
    rc.eval.seed = 515;
    return rc;
}

std::string train_cached(const io::run_config& rc, double* train_seconds) {
    const auto dir = work_dir() / ("run_" + rc.label);
    const auto ckpt = dir / "checkpoint.nbp";
    *train_seconds = 0.0;
    if (std::filesystem::exists(ckpt)) {
        try {
            auto ck = io::load_checkpoint(ckpt.string());
            if (ck.config == io::to_json(rc) &&
                ck.global_step == static_cast<long long>(rc.train.epochs) * rc.train.steps_per_epoch()) {
                std::printf("[acceptance] reusing finished run %s\n", dir.string().c_str());
                std::fflush(stdout);
                return ckpt.string();
            }
        } catch (...) {
        }
        std::filesystem::remove_all(dir);
    }
    std::printf("[acceptance] training %s (100 epochs, batch 32, 1024 tasks/epoch)...\n", rc.label.c_str());
    std::fflush(stdout);
    const double t0 = now_s();
    io::train_model(rc, dir.string());
    *train_seconds = now_s() - t0;
    return ckpt.string();
}

std::vector<double> losses_after_warmup(const std::string& metrics_path, long long warmup_steps) {
    std::ifstream f(metrics_path);
    REQUIRE(f);
    std::string line;
    std::getline(f, line);
    std::vector<double> out;
    while (std::getline(f, line)) {
        std::stringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        const long long step = std::stoll(cell);
        for (int c = 0; c < 3; ++c) std::getline(ls, cell, ',');
        if (step >= warmup_steps) out.push_back(std::stod(cell));
    }
    return out;
}

}  // namespace

TEST_CASE("criterion 8: desk-scale ordering, bridge vs zero-bridge ablation") {
    const auto rc_nbp = desk_config(true);
    const auto rc_ndp = desk_config(false);

    double train_nbp_s = 0, train_ndp_s = 0;
    const auto ckpt_nbp = train_cached(rc_nbp, &train_nbp_s);
    const auto ckpt_ndp = train_cached(rc_ndp, &train_ndp_s);

    // identical evaluation tasks and sampler seeds for both models
    auto tasks = io::generate_tasks(rc_nbp.dataset, 99991, rc_nbp.dataset.n_tasks);

    auto eval_one = [&](const std::string& ckpt_path, const io::run_config& rc) {
        auto ck = io::load_checkpoint(ckpt_path);
        auto m = io::build_model(rc);
        m.params = ck.ema;  // EMA weights for evaluation
        return eval::evaluate_run(m, tasks, rc_nbp.eval, rc.label);
    };
    std::printf("[acceptance] evaluating both models (16 tasks x 128 samples, T=500)...\n");
    std::fflush(stdout);
    auto rep_nbp = eval_one(ckpt_nbp, rc_nbp);
    auto rep_ndp = eval_one(ckpt_ndp, rc_ndp);

    const auto dir = work_dir();
    eval::write_report_csv(rep_nbp, (dir / "nbp_report.csv").string());
    eval::write_report_json(rep_nbp, (dir / "nbp_report.json").string());
    eval::write_report_csv(rep_ndp, (dir / "ndp_report.csv").string());
    eval::write_report_json(rep_ndp, (dir / "ndp_report.json").string());

    // paired joint standard error over the shared task set
    REQUIRE(rep_nbp.records.size() == rep_ndp.records.size());
    std::vector<double> diff;
    for (std::size_t i = 0; i < rep_nbp.records.size(); ++i)
        diff.push_back(rep_nbp.records[i].loglik - rep_ndp.records[i].loglik);
    double dmean = 0;
    for (double v : diff) dmean += v;
    dmean /= static_cast<double>(diff.size());
    double dvar = 0;
    for (double v : diff) dvar += (v - dmean) * (v - dmean);
    dvar /= static_cast<double>(diff.size() - 1);
    const double joint_se = std::sqrt(dvar / static_cast<double>(diff.size()));
    const bool loglik_ok = rep_nbp.loglik_mean() >= rep_ndp.loglik_mean() - joint_se;

    // training-loss dominance after warmup (the loss-curve claim)
    const long long warmup_steps = 20LL * 32;
    auto l_nbp =
        losses_after_warmup((std::filesystem::path(ckpt_nbp).parent_path() / "metrics.csv").string(), warmup_steps);
    auto l_ndp =
        losses_after_warmup((std::filesystem::path(ckpt_ndp).parent_path() / "metrics.csv").string(), warmup_steps);
    REQUIRE(l_nbp.size() == l_ndp.size());
    REQUIRE(!l_nbp.empty());
    std::size_t wins = 0;
    for (std::size_t i = 0; i < l_nbp.size(); ++i)
        if (l_nbp[i] <= l_ndp[i]) ++wins;
    const double win_frac = static_cast<double>(wins) / static_cast<double>(l_nbp.size());
    const bool loss_ok = win_frac >= 0.60;

    // the 100-epoch run must also beat the untrained eps_hat = 0 baseline
    // (loss about 1.0) by at least 5x
    const double final_nbp_loss = l_nbp.back();
    const bool learned_ok = final_nbp_loss <= 1.0 / 5.0;

    const bool runtime_ok = train_nbp_s < 7200.0 && train_ndp_s < 7200.0;

    char d[320];
    std::snprintf(d, sizeof d,
                  "loglik nbp %.3f vs ndp %.3f (joint se %.3f) %s; loss wins %.0f%% (>=60%%) %s; "
                  "final nbp loss %.3f (<=0.2) %s; train %.0fs/%.0fs (<7200s each) %s",
                  rep_nbp.loglik_mean(), rep_ndp.loglik_mean(), joint_se, loglik_ok ? "ok" : "VIOLATED",
                  100.0 * win_frac, loss_ok ? "ok" : "VIOLATED", final_nbp_loss, learned_ok ? "ok" : "VIOLATED",
                  train_nbp_s, train_ndp_s, runtime_ok ? "ok" : "VIOLATED");
    const bool pass = loglik_ok && loss_ok && learned_ok && runtime_ok;
    report(8, pass, d);
    CHECK(pass);
}

TEST_CASE("criterion 9: GP covariance fidelity, 10^5 draws per kernel") {
    num::dtensor x({3, 1}, {-1.2, 0.3, 1.1});
    const double sigma = 0.05;
    const int n = 100000;
    double worst_z = 0;
    for (auto kind : {data::kernel_kind::squared_exponential, data::kernel_kind::matern52}) {
        data::kernel_spec spec{kind, 0.25};
        double want[3][3];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                want[i][j] = data::kernel_eval(spec, x.data() + i, x.data() + j, 1);
                if (i == j) want[i][j] += sigma * sigma;
            }
        double acc[3][3] = {};
        rng_t rng(kind == data::kernel_kind::squared_exponential ? 808 : 809);
        for (int k = 0; k < n; ++k) {
            auto y = data::sample_gp_outputs(x, spec, sigma, rng);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) acc[i][j] += y[i] * y[j];
        }
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double emp = acc[i][j] / n;
                const double se = std::sqrt((want[i][i] * want[j][j] + want[i][j] * want[i][j]) / n);
                worst_z = std::max(worst_z, std::abs(emp - want[i][j]) / se);
            }
    }
    char d[120];
    std::snprintf(d, sizeof d, "worst covariance-entry |z| = %.2f over both kernels (<=4)", worst_z);
    const bool pass = worst_z <= 4.0;
    report(9, pass, d);
    CHECK(pass);
}

TEST_CASE("criterion 10: byte-level reproducibility through the public API") {
    const auto dir = work_dir() / "repro";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    auto p = [&](const std::string& n) { return (dir / n).string(); };
    bool pass = true;
    std::string detail;

    // schedule dump
    nbp_schedule* s = nullptr;
    REQUIRE(nbp_schedule_create("cosine", 500, 3e-4, 0.5, 0, &s) == NBP_OK);
    REQUIRE(nbp_schedule_dump_csv(s, p("s1.csv").c_str()) == NBP_OK);
    REQUIRE(nbp_schedule_dump_csv(s, p("s2.csv").c_str()) == NBP_OK);
    nbp_schedule_free(s);
    if (slurp(p("s1.csv")) != slurp(p("s2.csv"))) pass = false, detail += "schedule-dump differs; ";

    const std::string cfg = p("config.json");
    {
        std::ofstream f(cfg);
        f << R"({"version":1,"label":"repro",
                 "schedule":{"kind":"linear","timesteps":10,"beta_start":0.001,"beta_end":0.3},
                 "denoiser":{"layers":1,"hidden":8,"heads":2},
                 "data":{"n_context_range":[1,3],"n_target":5,"n_tasks":2},
                 "train":{"epochs":2,"tasks_per_epoch":8,"batch_size":4,"warmup_epochs":1,"decay_epochs":1,"seed":3},
                 "eval":{"n_samples":8,"repaint":1,"seed":4}})";
    }
    REQUIRE(nbp_gen_data(cfg.c_str(), p("t1.jsonl").c_str(), 11) == NBP_OK);
    REQUIRE(nbp_gen_data(cfg.c_str(), p("t2.jsonl").c_str(), 11) == NBP_OK);
    if (slurp(p("t1.jsonl")) != slurp(p("t2.jsonl"))) pass = false, detail += "gen-data differs; ";

    REQUIRE(nbp_train(cfg.c_str(), p("runA").c_str(), nullptr, -1) == NBP_OK);
    REQUIRE(nbp_train(cfg.c_str(), p("runB").c_str(), nullptr, -1) == NBP_OK);
    // the wall-time column records physical time and is excluded from the
    // byte comparison; everything else must match exactly
    auto strip_wall = [](const std::string& csv) {
        std::stringstream in(csv), out;
        std::string line;
        while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << '\n';
        return out.str();
    };
    if (strip_wall(slurp(p("runA") + "/metrics.csv")) != strip_wall(slurp(p("runB") + "/metrics.csv")))
        pass = false, detail += "train metrics differ; ";

    const std::string ckpt = p("runA") + "/checkpoint.nbp";
    REQUIRE(nbp_sample(ckpt.c_str(), p("t1.jsonl").c_str(), 0, 4, 2, 21, p("smp1.csv").c_str()) == NBP_OK);
    REQUIRE(nbp_sample(ckpt.c_str(), p("t1.jsonl").c_str(), 0, 4, 2, 21, p("smp2.csv").c_str()) == NBP_OK);
    if (slurp(p("smp1.csv")) != slurp(p("smp2.csv"))) pass = false, detail += "sample differs; ";

    REQUIRE(nbp_evaluate(ckpt.c_str(), p("t1.jsonl").c_str(), 8, 1, 5, "r", p("e1.csv").c_str(),
                         p("e1.json").c_str()) == NBP_OK);
    REQUIRE(nbp_evaluate(ckpt.c_str(), p("t1.jsonl").c_str(), 8, 1, 5, "r", p("e2.csv").c_str(),
                         p("e2.json").c_str()) == NBP_OK);
    if (slurp(p("e1.csv")) != slurp(p("e2.csv")) || slurp(p("e1.json")) != slurp(p("e2.json")))
        pass = false, detail += "eval differs; ";

    // checkpoint resume reproduces the uninterrupted metrics log
    {
        std::string cfg4 = slurp(cfg);
        auto pos = cfg4.find("\"epochs\":2");
        REQUIRE(pos != std::string::npos);
        cfg4.replace(pos, 10, "\"epochs\":4");
        std::ofstream f(p("config4.json"));
        f << cfg4;
    }
    REQUIRE(nbp_train(p("config4.json").c_str(), p("runFull").c_str(), nullptr, -1) == NBP_OK);
    REQUIRE(nbp_train(cfg.c_str(), p("runPart").c_str(), nullptr, -1) == NBP_OK);
    REQUIRE(nbp_train(p("config4.json").c_str(), p("runPart").c_str(),
                      (p("runPart") + "/checkpoint.nbp").c_str(), -1) == NBP_OK);
    if (strip_wall(slurp(p("runFull") + "/metrics.csv")) != strip_wall(slurp(p("runPart") + "/metrics.csv")))
        pass = false, detail += "resume metrics differ; ";

    if (detail.empty())
        detail =
            "schedule-dump, gen-data, sample, eval byte-identical; train and resume metrics identical "
            "(wall-time column excluded)";
    report(10, pass, detail);
    CHECK(pass);
}
