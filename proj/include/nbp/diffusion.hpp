#ifndef NBP_DIFFUSION_HPP
#define NBP_DIFFUSION_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "nbp/denoiser.hpp"
#include "nbp/schedule.hpp"
#include "nbp/synthdata.hpp"
#include "nbp/tape.hpp"

namespace nbp::model {

// ---------------------------------------------------------------------------
// input-output alignment
// ---------------------------------------------------------------------------

enum class alignment_kind { identity, mean_projection, custom_affine };

alignment_kind alignment_kind_from_string(const std::string& s);
std::string to_string(alignment_kind k);

// Fixed projection P mapping inputs [.., N, D_x] to the output space
// [.., N, D_y] so the bridge terms are shape-compatible. The denoiser always
// receives the raw x; only the bridge terms see x_a.
struct alignment_spec {
    alignment_kind kind = alignment_kind::identity;
    // custom_affine: x_a[n] = matrix * x[n] + bias, matrix is d_y x d_x
    num::dtensor matrix;
    num::dtensor bias;
};

// Output dimension the bridge terms live in, when no context set pins it.
// mean_projection collapses to one component; custom_affine is fixed by its
// matrix; identity keeps D_x.
inline std::size_t aligned_dim(const alignment_spec& spec, std::size_t d_x) {
    switch (spec.kind) {
        case alignment_kind::identity: return d_x;
        case alignment_kind::mean_projection: return 1;
        case alignment_kind::custom_affine:
            if (spec.matrix.rank() != 2) throw invalid_argument("align: affine matrix missing");
            return spec.matrix.shape()[0];
    }
    throw invalid_argument("align: unknown alignment kind");
}

template <class T>
num::basic_tensor<T> align(const num::basic_tensor<T>& x, const alignment_spec& spec, std::size_t d_y) {
    const std::size_t r = x.rank();
    if (r < 2) throw invalid_argument("align: x must be [..., N, D_x]");
    const std::size_t d_x = x.shape()[r - 1];
    const std::size_t rows = x.numel() / d_x;

    switch (spec.kind) {
        case alignment_kind::identity: {
            if (d_x != d_y) throw invalid_argument("align: identity requires D_x == D_y");
            return x;
        }
        case alignment_kind::mean_projection: {
            std::vector<std::size_t> shape(x.shape().begin(), x.shape().end() - 1);
            shape.push_back(d_y);
            num::basic_tensor<T> out(shape);
            for (std::size_t row = 0; row < rows; ++row) {
                T m = T(0);
                for (std::size_t j = 0; j < d_x; ++j) m += x[row * d_x + j];
                m /= T(d_x);
                for (std::size_t j = 0; j < d_y; ++j) out[row * d_y + j] = m;
            }
            return out;
        }
        case alignment_kind::custom_affine: {
            if (spec.matrix.rank() != 2 || spec.matrix.shape()[0] != d_y || spec.matrix.shape()[1] != d_x)
                throw invalid_argument("align: affine matrix must be D_y x D_x");
            if (spec.bias.numel() != d_y) throw invalid_argument("align: affine bias must have D_y entries");
            std::vector<std::size_t> shape(x.shape().begin(), x.shape().end() - 1);
            shape.push_back(d_y);
            num::basic_tensor<T> out(shape);
            for (std::size_t row = 0; row < rows; ++row)
                for (std::size_t i = 0; i < d_y; ++i) {
                    double s = spec.bias[i];
                    for (std::size_t j = 0; j < d_x; ++j)
                        s += spec.matrix[i * d_x + j] * static_cast<double>(x[row * d_x + j]);
                    out[row * d_y + i] = static_cast<T>(s);
                }
            return out;
        }
    }
    throw invalid_argument("align: unknown alignment kind");
}

// ---------------------------------------------------------------------------
// model bundle
// ---------------------------------------------------------------------------

template <class T>
struct diffusion_model {
    sched::noise_schedule schedule;
    denoiser_config net_cfg;
    denoiser_params<T> params;
    alignment_spec alignment;
    bool bridge_enabled = true;  // false: schedule was built with gamma forced to zero
};

// Widens trained float weights for double-precision sampling. The reverse
// chain of a poorly trained model can reach magnitudes far beyond float
// range; running inference in double keeps those runs finite (and honestly
// terrible) instead of overflowing.
template <class To, class From>
diffusion_model<To> cast_model(const diffusion_model<From>& m) {
    diffusion_model<To> out;
    out.schedule = m.schedule;
    out.net_cfg = m.net_cfg;
    out.alignment = m.alignment;
    out.bridge_enabled = m.bridge_enabled;
    out.params.cfg = m.params.cfg;
    out.params.w.layers.resize(m.params.w.layers.size());
    std::size_t i = 0;
    std::vector<const num::basic_tensor<From>*> src;
    m.params.w.for_each([&](const std::string&, const num::basic_tensor<From>& t) { src.push_back(&t); });
    out.params.w.for_each([&](const std::string&, num::basic_tensor<To>& t) {
        t = num::basic_tensor<To>(src[i]->shape());
        for (std::size_t k = 0; k < t.numel(); ++k) t[k] = static_cast<To>((*src[i])[k]);
        ++i;
    });
    return out;
}

// ---------------------------------------------------------------------------
// forward / reverse kernels (exact affine formulas; schedule coefficients
// stay double and are cast at use)
// ---------------------------------------------------------------------------

// y_t = sqrt(1-beta_t) y_{t-1} + gamma_t x_a + sqrt(beta_t) eps
template <class T>
num::basic_tensor<T> q_step(const num::basic_tensor<T>& y_prev, const num::basic_tensor<T>& x_a, int t,
                            const num::basic_tensor<T>& eps, const sched::noise_schedule& s) {
    const T a = static_cast<T>(std::sqrt(1.0 - s.beta(t)));
    const T g = static_cast<T>(s.gamma(t));
    const T b = static_cast<T>(std::sqrt(s.beta(t)));
    num::basic_tensor<T> out(y_prev.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * y_prev[i] + g * x_a[i] + b * eps[i];
    return out;
}

// y_t = sqrt(alpha_bar_t) y_0 + gamma_bar_t x_a + sqrt(1-alpha_bar_t) eps
template <class T>
num::basic_tensor<T> q_marginal_sample(const num::basic_tensor<T>& y_0, const num::basic_tensor<T>& x_a, int t,
                                       const num::basic_tensor<T>& eps, const sched::noise_schedule& s) {
    const T a = static_cast<T>(std::sqrt(s.alpha_bar(t)));
    const T g = static_cast<T>(s.gamma_bar(t));
    const T n = static_cast<T>(std::sqrt(1.0 - s.alpha_bar(t)));
    num::basic_tensor<T> out(y_0.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * y_0[i] + g * x_a[i] + n * eps[i];
    return out;
}

// Exact mean of q(y_{t-1} | y_t, y_0, x): the unreduced three-term
// product-of-Gaussians posterior. Test oracle only; sampling never calls it.
template <class T>
num::basic_tensor<T> posterior_mean_oracle(const num::basic_tensor<T>& y_t, const num::basic_tensor<T>& y_0,
                                           const num::basic_tensor<T>& x_a, int t,
                                           const sched::noise_schedule& s) {
    const double b = s.beta(t);
    const double ab = s.alpha_bar(t);
    const double ab_prev = s.alpha_bar(t - 1);
    const double cy_t = std::sqrt(1.0 - b) * (1.0 - ab_prev) / (1.0 - ab);
    const double cy_0 = b * std::sqrt(ab_prev) / (1.0 - ab);
    const double cx = (b * s.gamma_bar(t - 1) - std::sqrt(1.0 - b) * (1.0 - ab_prev) * s.gamma(t)) / (1.0 - ab);
    num::basic_tensor<T> out(y_t.shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<T>(cy_t * y_t[i] + cy_0 * y_0[i] + cx * x_a[i]);
    return out;
}

// mu = (y_t - beta_t/sqrt(1-alpha_bar_t) eps_hat) / sqrt(alpha_t) + C_t x_a,
// with C_t = -gamma_t / sqrt(1-beta_t). Variance companion is beta_tilde_t.
template <class T>
num::basic_tensor<T> reverse_mean(const num::basic_tensor<T>& y_t, const num::basic_tensor<T>& x_a, int t,
                                  const num::basic_tensor<T>& eps_hat, const sched::noise_schedule& s) {
    const double inv_sqrt_a = 1.0 / std::sqrt(1.0 - s.beta(t));
    const double ecoef = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
    const double c = s.c_bridge(t);
    num::basic_tensor<T> out(y_t.shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<T>(inv_sqrt_a * (y_t[i] - ecoef * eps_hat[i]) + c * x_a[i]);
    return out;
}

// ---------------------------------------------------------------------------
// training loss
// ---------------------------------------------------------------------------

enum class loss_kind { l2, l1 };

loss_kind loss_kind_from_string(const std::string& s);
std::string to_string(loss_kind k);

// Fixed draws for one task's loss term, so tests can replay or
// finite-difference the exact same sample.
template <class T>
struct noise_draw {
    int t = 1;
    num::basic_tensor<T> eps;  // same shape as y_0
};

template <class T>
noise_draw<T> draw_noise(const data::task& tk, const sched::noise_schedule& s, rng_t& rng) {
    std::uniform_int_distribution<int> tdist(1, s.timesteps());
    noise_draw<T> d;
    d.t = tdist(rng);
    d.eps = num::basic_tensor<T>(std::vector<std::size_t>{tk.y.shape()[0], tk.y.shape()[1]});
    num::fill_standard_normal(d.eps, rng);
    return d;
}

template <class T>
num::basic_tensor<T> cast_tensor(const num::dtensor& x) {
    num::basic_tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = static_cast<T>(x[i]);
    return out;
}

// Loss for one task under fixed draws, evaluated through an arbitrary
// epsilon-model so stubs and the real denoiser share one code path.
// EpsModel: (ctx, y_t tensor, x tensor, t) -> ctx handle.
template <class Ctx, class EpsModel>
typename Ctx::handle task_loss(Ctx& ctx, EpsModel&& eps_model, const data::task& tk,
                               const sched::noise_schedule& s, const alignment_spec& al,
                               const noise_draw<typename Ctx::scalar>& draw, loss_kind kind) {
    using T = typename Ctx::scalar;
    const auto x = cast_tensor<T>(tk.x);
    const auto y0 = cast_tensor<T>(tk.y);
    const auto x_a = align(x, al, y0.shape()[1]);
    const auto y_t = q_marginal_sample(y0, x_a, draw.t, draw.eps, s);

    auto eps_hat = eps_model(ctx, y_t, x, draw.t);
    auto diff = ctx.sub(eps_hat, ctx.constant(draw.eps));
    if (kind == loss_kind::l2) return ctx.reduce_mean_all(ctx.mul(diff, diff));
    // |z| = relu(z) + relu(-z)
    return ctx.reduce_mean_all(ctx.add(ctx.relu(diff), ctx.relu(ctx.scale(diff, T(-1)))));
}

template <class T>
struct loss_and_grads {
    double loss = 0.0;
    std::vector<num::basic_tensor<T>> grads;  // registry order; empty if not requested
};

// Mean loss over a batch of tasks with per-task draws; gradients are averaged
// across tasks in fixed order. Tasks are evaluated individually (no padding).
template <class T>
loss_and_grads<T> training_loss_fixed(const std::vector<data::task>& batch, const diffusion_model<T>& m,
                                      const std::vector<noise_draw<T>>& draws, loss_kind kind,
                                      bool want_grads) {
    if (batch.empty()) throw invalid_argument("training_loss: empty batch");
    if (draws.size() != batch.size()) throw invalid_argument("training_loss: one draw per task required");

    loss_and_grads<T> out;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (want_grads) {
            num::tape<T> tp;
            num::tape_ctx<T> ctx{tp};
            std::vector<num::var> reg;
            auto w = lift_weights(ctx, m.params, &reg);
            auto loss = task_loss(
                ctx,
                [&](num::tape_ctx<T>& c, const num::basic_tensor<T>& y_t, const num::basic_tensor<T>& x, int t) {
                    return predict_noise(c, m.net_cfg, w, x, y_t, t);
                },
                batch[i], m.schedule, m.alignment, draws[i], kind);
            tp.backward(loss);
            out.loss += static_cast<double>(tp.value(loss).item()) * inv_b;
            if (out.grads.empty()) {
                out.grads.reserve(reg.size());
                for (auto v : reg) out.grads.push_back(num::scale(tp.grad(v), static_cast<T>(inv_b)));
            } else {
                for (std::size_t j = 0; j < reg.size(); ++j) {
                    const auto& g = tp.grad(reg[j]);
                    for (std::size_t k = 0; k < g.numel(); ++k) out.grads[j][k] += static_cast<T>(inv_b) * g[k];
                }
            }
        } else {
            num::raw_ctx<T> ctx;
            auto w = lift_weights(ctx, m.params);
            auto loss = task_loss(
                ctx,
                [&](num::raw_ctx<T>& c, const num::basic_tensor<T>& y_t, const num::basic_tensor<T>& x, int t) {
                    return predict_noise(c, m.net_cfg, w, x, y_t, t);
                },
                batch[i], m.schedule, m.alignment, draws[i], kind);
            out.loss += static_cast<double>(loss.item()) * inv_b;
        }
    }
    return out;
}

// Production entry: draws t uniform in {1..T} and fresh standard normal eps
// per task from the given rng, then defers to the fixed-draw path.
template <class T>
loss_and_grads<T> training_loss(const std::vector<data::task>& batch, const diffusion_model<T>& m, rng_t& rng,
                                loss_kind kind, bool want_grads = true) {
    if (batch.empty()) throw invalid_argument("training_loss: empty batch");
    std::vector<noise_draw<T>> draws;
    draws.reserve(batch.size());
    for (const auto& tk : batch) draws.push_back(draw_noise<T>(tk, m.schedule, rng));
    return training_loss_fixed(batch, m, draws, kind, want_grads);
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

struct sampler_config {
    int repaint_repeats = 5;
    std::uint64_t seed = 0;
    bool record_trajectory = false;
    // Reproduces the literal gamma_T * x initialization instead of the
    // marginal-consistent gamma_bar_T * x.
    bool literal_gamma_init = false;
};

// y_T = gamma_bar_T x_a + n, drawn for all samples at once. Exposed so the
// endpoint-coherence check exercises exactly the sampler's own init path.
template <class T>
num::basic_tensor<T> sampler_init_targets(const num::basic_tensor<T>& x_a_tgt, std::size_t n_samples,
                                          const sched::noise_schedule& s, bool literal_gamma_init, rng_t& rng) {
    const int T_ = s.timesteps();
    const double coef = literal_gamma_init ? s.gamma(T_) : s.gamma_bar(T_);
    std::vector<std::size_t> shape{n_samples};
    for (auto d : x_a_tgt.shape()) shape.push_back(d);
    auto y = num::standard_normal_like<T>(shape, rng);
    const std::size_t per = x_a_tgt.numel();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] += static_cast<T>(coef) * x_a_tgt[i % per];
    return y;
}

// Conditional sampler with RePaint repeats. Draw order per (t, repeat):
// context noise (if any context), reverse noise (if t > 1), re-noise step
// (if another repeat follows). Returns [n_samples, N_target, D_y].
template <class T>
num::basic_tensor<T> conditional_sample(const num::basic_tensor<T>& x_ctx, const num::basic_tensor<T>& y_ctx,
                                        const num::basic_tensor<T>& x_tgt, std::size_t n_samples,
                                        const diffusion_model<T>& m, const sampler_config& sc,
                                        std::vector<num::basic_tensor<T>>* trajectory = nullptr) {
    if (sc.repaint_repeats < 1) throw invalid_argument("sampler: repaint repeats must be >= 1");
    if (x_tgt.rank() != 2 || x_tgt.shape()[0] == 0) throw invalid_argument("sampler: empty target set");
    const std::size_t n_t = x_tgt.shape()[0];
    const std::size_t n_c = x_ctx.numel() ? x_ctx.shape()[0] : 0;
    const std::size_t d_x = x_tgt.shape()[1];
    const std::size_t d_y = n_c ? y_ctx.shape()[1] : aligned_dim(m.alignment, d_x);
    const int T_ = m.schedule.timesteps();
    rng_t rng(sc.seed);

    // combined point set: targets first, then context
    num::basic_tensor<T> x_all({n_t + n_c, d_x});
    std::copy_n(x_tgt.data(), n_t * d_x, x_all.data());
    if (n_c) std::copy_n(x_ctx.data(), n_c * d_x, x_all.data() + n_t * d_x);
    const auto x_a_all = align(x_all, m.alignment, d_y);
    num::basic_tensor<T> x_a_tgt({n_t, d_y});
    std::copy_n(x_a_all.data(), n_t * d_y, x_a_tgt.data());

    // batched views: [S, N, D] with x broadcast across samples
    const auto x_all_b = num::broadcast_to(num::reshape(x_all, {1, n_t + n_c, d_x}), {n_samples, n_t + n_c, d_x});
    num::basic_tensor<T> x_a_tgt_b =
        num::broadcast_to(num::reshape(x_a_tgt, {1, n_t, d_y}), {n_samples, n_t, d_y});
    num::basic_tensor<T> x_a_all_b =
        num::broadcast_to(num::reshape(x_a_all, {1, n_t + n_c, d_y}), {n_samples, n_t + n_c, d_y});

    auto y_tgt = sampler_init_targets(x_a_tgt, n_samples, m.schedule, sc.literal_gamma_init, rng);
    if (trajectory) trajectory->push_back(y_tgt);

    num::raw_ctx<T> ctx;
    const auto w = lift_weights(ctx, m.params);

    for (int t = T_; t >= 1; --t) {
        for (int rep = 0; rep < sc.repaint_repeats; ++rep) {
            num::basic_tensor<T> y_all({n_samples, n_t + n_c, d_y});
            for (std::size_t s = 0; s < n_samples; ++s)
                std::copy_n(y_tgt.data() + s * n_t * d_y, n_t * d_y, y_all.data() + s * (n_t + n_c) * d_y);
            if (n_c) {
                // forward-noised context at this timestep, fresh per repeat
                const double a = std::sqrt(m.schedule.alpha_bar(t));
                const double g = m.schedule.gamma_bar(t);
                const double nsd = std::sqrt(1.0 - m.schedule.alpha_bar(t));
                auto z = num::standard_normal_like<T>({n_samples, n_c, d_y}, rng);
                for (std::size_t s = 0; s < n_samples; ++s)
                    for (std::size_t i = 0; i < n_c * d_y; ++i)
                        y_all[(s * (n_t + n_c) + n_t) * d_y + i] =
                            static_cast<T>(a * y_ctx[i] + g * x_a_all[(n_t * d_y) + i] + nsd * z[s * n_c * d_y + i]);
            }

            auto eps_hat = predict_noise(ctx, m.net_cfg, w, x_all_b, y_all, t);
            auto mu = reverse_mean(y_all, x_a_all_b, t, eps_hat, m.schedule);

            num::basic_tensor<T> y_prev_tgt({n_samples, n_t, d_y});
            const double sd = std::sqrt(m.schedule.beta_tilde(t));
            if (t > 1) {
                auto z = num::standard_normal_like<T>({n_samples, n_t, d_y}, rng);
                for (std::size_t s = 0; s < n_samples; ++s)
                    for (std::size_t i = 0; i < n_t * d_y; ++i)
                        y_prev_tgt[s * n_t * d_y + i] = static_cast<T>(
                            mu[s * (n_t + n_c) * d_y + i] + sd * z[s * n_t * d_y + i]);
            } else {
                // beta_tilde_1 == 0: the final step is deterministic at the mean
                for (std::size_t s = 0; s < n_samples; ++s)
                    std::copy_n(mu.data() + s * (n_t + n_c) * d_y, n_t * d_y, y_prev_tgt.data() + s * n_t * d_y);
            }

            if (rep + 1 < sc.repaint_repeats) {
                // RePaint: push the target block one step forward again
                auto z = num::standard_normal_like<T>({n_samples, n_t, d_y}, rng);
                y_tgt = q_step(y_prev_tgt, x_a_tgt_b, t, z, m.schedule);
            } else {
                y_tgt = std::move(y_prev_tgt);
            }
        }
        if (trajectory && sc.record_trajectory) trajectory->push_back(y_tgt);
    }
    num::check_finite(y_tgt, "conditional_sample");
    return y_tgt;
}

template <class T>
num::basic_tensor<T> unconditional_sample(const num::basic_tensor<T>& x, std::size_t n_samples,
                                          const diffusion_model<T>& m, const sampler_config& sc,
                                          std::vector<num::basic_tensor<T>>* trajectory = nullptr) {
    const std::size_t d_y = aligned_dim(m.alignment, x.shape()[1]);
    num::basic_tensor<T> no_x({0, x.shape()[1]});
    num::basic_tensor<T> no_y({0, d_y});
    return conditional_sample(no_x, no_y, x, n_samples, m, sc, trajectory);
}

}  // namespace nbp::model

#endif
