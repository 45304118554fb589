#ifndef NBP_DENOISER_HPP
#define NBP_DENOISER_HPP

#include <cmath>
#include <string>
#include <vector>

#include "nbp/tape.hpp"
#include "nbp/tensor.hpp"

namespace nbp::model {

struct denoiser_config {
    int layers = 4;
    int hidden = 64;
    int heads = 8;
    int t_embed_dim = 64;

    void validate() const {
        if (layers < 1) throw invalid_argument("denoiser: layers must be >= 1");
        if (heads < 1) throw invalid_argument("denoiser: heads must be >= 1");
        if (hidden < heads || hidden % heads != 0)
            throw invalid_argument("denoiser: hidden must be divisible by heads");
        if (t_embed_dim < 2 || t_embed_dim % 2 != 0)
            throw invalid_argument("denoiser: t_embed_dim must be even and >= 2");
    }
};

// Weight container generic over the stored value type, so the same layout
// holds tensors (parameters) or op-context handles (lifted weights).
template <class V>
struct denoiser_weights {
    V embed_w, embed_b;  // [2,H], [H]
    V tproj_w, tproj_b;  // [t_embed_dim,H], [H]
    struct layer_w {
        V n_wq, n_wk, n_wv, n_wo;  // attention over the dataset axis
        V d_wq, d_wk, d_wv, d_wo;  // attention over the feature axis
    };
    std::vector<layer_w> layers;
    V head_w1, head_b1;  // [2H,H], [H]
    V head_w2, head_b2;  // [H,1], [1]

    template <class F>
    void for_each(F&& f) {
        f("embed_w", embed_w);
        f("embed_b", embed_b);
        f("tproj_w", tproj_w);
        f("tproj_b", tproj_b);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::string p = "layer" + std::to_string(i) + ".";
            auto& L = layers[i];
            f(p + "n_wq", L.n_wq);
            f(p + "n_wk", L.n_wk);
            f(p + "n_wv", L.n_wv);
            f(p + "n_wo", L.n_wo);
            f(p + "d_wq", L.d_wq);
            f(p + "d_wk", L.d_wk);
            f(p + "d_wv", L.d_wv);
            f(p + "d_wo", L.d_wo);
        }
        f("head_w1", head_w1);
        f("head_b1", head_b1);
        f("head_w2", head_w2);
        f("head_b2", head_b2);
    }

    template <class F>
    void for_each(F&& f) const {
        const_cast<denoiser_weights*>(this)->for_each(
            [&](const std::string& n, V& v) { f(n, static_cast<const V&>(v)); });
    }
};

template <class T>
struct denoiser_params {
    denoiser_config cfg;
    denoiser_weights<num::basic_tensor<T>> w;
};

// Glorot-uniform projections, zero biases, zero-initialized output head so
// an untrained model predicts exactly zero noise.
template <class T>
denoiser_params<T> init_denoiser(const denoiser_config& cfg, std::uint64_t seed) {
    cfg.validate();
    const auto H = static_cast<std::size_t>(cfg.hidden);
    const auto E = static_cast<std::size_t>(cfg.t_embed_dim);
    denoiser_params<T> p;
    p.cfg = cfg;
    auto& w = p.w;
    w.embed_w = num::basic_tensor<T>({2, H});
    w.embed_b = num::basic_tensor<T>({H});
    w.tproj_w = num::basic_tensor<T>({E, H});
    w.tproj_b = num::basic_tensor<T>({H});
    w.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (auto& L : w.layers)
        for (auto* m : {&L.n_wq, &L.n_wk, &L.n_wv, &L.n_wo, &L.d_wq, &L.d_wk, &L.d_wv, &L.d_wo})
            *m = num::basic_tensor<T>({H, H});
    w.head_w1 = num::basic_tensor<T>({2 * H, H});
    w.head_b1 = num::basic_tensor<T>({H});
    w.head_w2 = num::basic_tensor<T>({H, 1});
    w.head_b2 = num::basic_tensor<T>({1});

    rng_t rng(seed);
    w.for_each([&](const std::string& name, num::basic_tensor<T>& t) {
        if (t.rank() != 2) return;  // biases stay zero
        if (name == "head_w2") return;
        const double bound = std::sqrt(6.0 / static_cast<double>(t.shape()[0] + t.shape()[1]));
        num::fill_uniform(t, rng, -bound, bound);
    });
    return p;
}

// Sinusoidal embedding of the integer timestep; denominator frequencies run
// geometrically from 1 to 1e4 across the half-dimension.
template <class T>
num::basic_tensor<T> timestep_embedding(int t, int dim) {
    const std::size_t half = static_cast<std::size_t>(dim) / 2;
    num::basic_tensor<T> e({static_cast<std::size_t>(dim)});
    for (std::size_t i = 0; i < half; ++i) {
        const double denom =
            half == 1 ? 1.0 : std::exp(std::log(1e4) * static_cast<double>(i) / static_cast<double>(half - 1));
        const double angle = static_cast<double>(t) / denom;
        e[i] = static_cast<T>(std::sin(angle));
        e[half + i] = static_cast<T>(std::cos(angle));
    }
    return e;
}

template <class Ctx>
denoiser_weights<typename Ctx::handle> lift_weights(
    Ctx& ctx, const denoiser_params<typename Ctx::scalar>& p,
    std::vector<typename Ctx::handle>* registry_order = nullptr) {
    using handle = typename Ctx::handle;
    std::vector<handle> hs;
    p.w.for_each([&](const std::string&, const num::basic_tensor<typename Ctx::scalar>& t) {
        hs.push_back(ctx.constant(t));
    });
    if (registry_order) *registry_order = hs;
    denoiser_weights<handle> out;
    out.layers.resize(p.w.layers.size());
    std::size_t i = 0;
    out.for_each([&](const std::string&, handle& h) { h = hs[i++]; });
    return out;
}

namespace detail {

inline std::vector<std::size_t> iota_perm(std::size_t rank) {
    std::vector<std::size_t> p(rank);
    for (std::size_t i = 0; i < rank; ++i) p[i] = i;
    return p;
}

}  // namespace detail

// Multi-head self-attention over one grid axis of s [..., N, D, H].
// tokens_over_n selects the dataset axis (keys/queries range over N for each
// fixed d); otherwise tokens range over D for each fixed n.
template <class Ctx>
typename Ctx::handle mhsa(Ctx& ctx, const denoiser_config& cfg,
                          const typename Ctx::handle& wq, const typename Ctx::handle& wk,
                          const typename Ctx::handle& wv, const typename Ctx::handle& wo,
                          const typename Ctx::handle& s, bool tokens_over_n) {
    using T = typename Ctx::scalar;
    const auto grid_shape = ctx.value(s).shape();
    const std::size_t r = grid_shape.size();
    if (r < 3) throw invalid_argument("mhsa: grid must be [..., N, D, H]");
    const std::size_t heads = static_cast<std::size_t>(cfg.heads);
    const std::size_t H = static_cast<std::size_t>(cfg.hidden);
    const std::size_t hd = H / heads;

    auto sp = s;
    if (tokens_over_n) {
        auto perm = detail::iota_perm(r);
        std::swap(perm[r - 3], perm[r - 2]);
        sp = ctx.permute_axes(s, perm);
    }
    const auto sp_shape = ctx.value(sp).shape();
    const std::size_t ntok = sp_shape[r - 2];

    auto q = ctx.matmul(sp, wq);
    auto k = ctx.matmul(sp, wk);
    auto v = ctx.matmul(sp, wv);

    // [..., ntok, H] -> [..., heads, ntok, hd]
    auto split = [&](const typename Ctx::handle& h) {
        std::vector<std::size_t> hs(sp_shape.begin(), sp_shape.end() - 1);
        hs.push_back(heads);
        hs.push_back(hd);
        auto re = ctx.reshape(h, hs);
        auto perm = detail::iota_perm(r + 1);
        std::swap(perm[r - 2], perm[r - 1]);
        return ctx.permute_axes(re, perm);
    };
    auto qh = split(q), kh = split(k), vh = split(v);
    // scaled dot-product; scaling q is cheaper than scaling the score grid
    qh = ctx.scale(qh, static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));

    auto kt_perm = detail::iota_perm(r + 1);
    std::swap(kt_perm[r - 1], kt_perm[r]);
    auto scores = ctx.matmul(qh, ctx.permute_axes(kh, kt_perm));
    auto attn = ctx.softmax(scores, -1);
    auto o = ctx.matmul(attn, vh);

    // back to [..., ntok, H]
    auto merge_perm = detail::iota_perm(r + 1);
    std::swap(merge_perm[r - 2], merge_perm[r - 1]);
    o = ctx.permute_axes(o, merge_perm);
    std::vector<std::size_t> merged(sp_shape.begin(), sp_shape.end() - 1);
    merged.push_back(H);
    (void)ntok;
    o = ctx.reshape(o, merged);
    o = ctx.matmul(o, wo);

    if (tokens_over_n) {
        auto perm = detail::iota_perm(r);
        std::swap(perm[r - 3], perm[r - 2]);
        o = ctx.permute_axes(o, perm);
    }
    return o;
}

// One bi-dimensional attention block:
// s_next = s + relu(MHSA_N(s) + MHSA_D(s)).
template <class Ctx>
typename Ctx::handle bi_block(Ctx& ctx, const denoiser_config& cfg,
                              const typename denoiser_weights<typename Ctx::handle>::layer_w& L,
                              const typename Ctx::handle& s) {
    auto an = mhsa(ctx, cfg, L.n_wq, L.n_wk, L.n_wv, L.n_wo, s, /*tokens_over_n=*/true);
    auto ad = mhsa(ctx, cfg, L.d_wq, L.d_wk, L.d_wv, L.d_wo, s, /*tokens_over_n=*/false);
    return ctx.add(s, ctx.relu(ctx.add(an, ad)));
}

// Embeds each (x, y_t) cell pair into the N x D x H grid and adds the
// projected timestep embedding to every cell. y may have one feature (it is
// then paired with every x feature) or exactly as many as x.
template <class Ctx>
typename Ctx::handle preprocess(Ctx& ctx, const denoiser_config& cfg,
                                const denoiser_weights<typename Ctx::handle>& w,
                                const num::basic_tensor<typename Ctx::scalar>& x,
                                const num::basic_tensor<typename Ctx::scalar>& y_t, int t) {
    using T = typename Ctx::scalar;
    if (t < 1) throw invalid_argument("preprocess: timestep must be >= 1");
    if (x.rank() != y_t.rank() || x.rank() < 2)
        throw invalid_argument("preprocess: x and y_t must both be [..., N, D]");
    const std::size_t r = x.rank();
    for (std::size_t i = 0; i + 1 < r; ++i)
        if (x.shape()[i] != y_t.shape()[i]) throw invalid_argument("preprocess: x and y_t row shapes differ");
    const std::size_t d = x.shape()[r - 1];
    const std::size_t dy = y_t.shape()[r - 1];
    if (dy != d && dy != 1)
        throw invalid_argument("preprocess: y feature count must equal x's or be 1");

    std::vector<std::size_t> pair_shape = x.shape();
    pair_shape.push_back(2);
    num::basic_tensor<T> pairs(pair_shape);
    const std::size_t rows = x.numel() / d;
    for (std::size_t row = 0; row < rows; ++row)
        for (std::size_t j = 0; j < d; ++j) {
            pairs[(row * d + j) * 2] = x[row * d + j];
            pairs[(row * d + j) * 2 + 1] = y_t[row * dy + (dy == 1 ? 0 : j)];
        }

    auto grid = ctx.matmul(ctx.constant(std::move(pairs)), w.embed_w);
    std::vector<std::size_t> grid_shape = x.shape();
    grid_shape.push_back(static_cast<std::size_t>(cfg.hidden));
    grid = ctx.add(grid, ctx.broadcast_to(w.embed_b, grid_shape));

    auto temb = ctx.constant(num::reshape(timestep_embedding<T>(t, cfg.t_embed_dim),
                                          {1, static_cast<std::size_t>(cfg.t_embed_dim)}));
    auto tp = ctx.matmul(temb, w.tproj_w);
    tp = ctx.add(tp, ctx.reshape(w.tproj_b, {1, static_cast<std::size_t>(cfg.hidden)}));
    return ctx.add(grid, ctx.broadcast_to(tp, grid_shape));
}

// Full noise model: stacked bi-blocks, the telescoped sum of their residual
// increments, mean aggregation over the feature axis, and a per-cell head
// that maps [row latent ; cell latent] back to a scalar.
template <class Ctx>
typename Ctx::handle predict_noise(Ctx& ctx, const denoiser_config& cfg,
                                   const denoiser_weights<typename Ctx::handle>& w,
                                   const num::basic_tensor<typename Ctx::scalar>& x,
                                   const num::basic_tensor<typename Ctx::scalar>& y_t, int t) {
    cfg.validate();
    auto s0 = preprocess(ctx, cfg, w, x, y_t, t);
    auto s = s0;
    for (const auto& L : w.layers) s = bi_block(ctx, cfg, L, s);
    // residual increments telescope: sum over layers == s_L - s_0
    auto acc = ctx.sub(s, s0);

    const auto grid_shape = ctx.value(acc).shape();
    const std::size_t r = grid_shape.size();
    const std::size_t d = grid_shape[r - 2];
    auto row_latent = ctx.reduce_mean(acc, static_cast<int>(r) - 2);  // [..., N, H]
    std::vector<std::size_t> keep(grid_shape.begin(), grid_shape.end() - 2);  // [..., N]
    keep.push_back(1);
    keep.push_back(grid_shape[r - 1]);  // H
    auto tiled = ctx.broadcast_to(ctx.reshape(row_latent, keep), grid_shape);

    auto head_in = ctx.concat({tiled, acc}, -1);
    auto h1 = ctx.matmul(head_in, w.head_w1);
    std::vector<std::size_t> h1_shape = ctx.value(h1).shape();
    h1 = ctx.relu(ctx.add(h1, ctx.broadcast_to(w.head_b1, h1_shape)));
    auto out = ctx.matmul(h1, w.head_w2);
    std::vector<std::size_t> o_shape = ctx.value(out).shape();
    out = ctx.add(out, ctx.broadcast_to(w.head_b2, o_shape));

    std::vector<std::size_t> cells(grid_shape.begin(), grid_shape.end() - 1);  // [..., N, D]
    out = ctx.reshape(out, cells);

    const std::size_t dy = y_t.shape()[y_t.rank() - 1];
    if (dy == 1 && d > 1) {
        out = ctx.reduce_mean(out, -1);
        std::vector<std::size_t> yshape(cells.begin(), cells.end() - 1);
        yshape.push_back(1);
        out = ctx.reshape(out, yshape);
    }
    return out;
}

}  // namespace nbp::model

#endif
