#include "nbp/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nbp::data {

kernel_kind kernel_kind_from_string(const std::string& s) {
    if (s == "squared_exponential" || s == "se") return kernel_kind::squared_exponential;
    if (s == "matern52") return kernel_kind::matern52;
    throw invalid_argument("unknown kernel kind '" + s + "' (expected squared_exponential or matern52)");
}

std::string to_string(kernel_kind k) {
    return k == kernel_kind::squared_exponential ? "squared_exponential" : "matern52";
}

void kernel_spec::validate() const {
    if (!(lengthscale > 0.0)) throw invalid_argument("kernel: lengthscale must be positive");
}

double default_lengthscale(int d_x) {
    if (d_x < 1) throw invalid_argument("default_lengthscale: d_x must be >= 1");
    return std::sqrt(static_cast<double>(d_x)) / 4.0;
}

double kernel_eval(const kernel_spec& spec, const double* x1, const double* x2, std::size_t dim) {
    spec.validate();
    double r2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double d = x1[i] - x2[i];
        r2 += d * d;
    }
    const double l = spec.lengthscale;
    if (spec.kind == kernel_kind::squared_exponential) return std::exp(-r2 / (2.0 * l * l));
    const double r = std::sqrt(r2);
    const double a = std::sqrt(5.0) * r / l;
    return (1.0 + a + 5.0 * r2 / (3.0 * l * l)) * std::exp(-a);
}

double kernel_eval(const kernel_spec& spec, const std::vector<double>& x1, const std::vector<double>& x2) {
    if (x1.size() != x2.size()) throw invalid_argument("kernel_eval: point dimensions differ");
    return kernel_eval(spec, x1.data(), x2.data(), x1.size());
}

mask_mode mask_mode_from_string(const std::string& s) {
    if (s == "random") return mask_mode::random;
    if (s == "window") return mask_mode::window;
    if (s == "suffix") return mask_mode::suffix;
    throw invalid_argument("unknown mask mode '" + s + "' (expected random, window or suffix)");
}

std::string to_string(mask_mode m) {
    switch (m) {
        case mask_mode::random: return "random";
        case mask_mode::window: return "window";
        default: return "suffix";
    }
}

void gp_task_config::validate() const {
    if (d_x < 1) throw invalid_argument("task config: d_x must be >= 1");
    if (n_context_lo < 1 || n_context_lo > n_context_hi)
        throw invalid_argument("task config: need 1 <= n_context_lo <= n_context_hi");
    if (n_target < 1) throw invalid_argument("task config: n_target must be >= 1");
    if (noise_sigma < 0.0) throw invalid_argument("task config: noise_sigma must be >= 0");
    if (!(x_domain_lo < x_domain_hi)) throw invalid_argument("task config: empty x domain");
    if (n_channels < 1) throw invalid_argument("task config: n_channels must be >= 1");
    if (n_channels > 1 && d_x != 2)
        throw invalid_argument("task config: multichannel tasks need d_x == 2 (time, channel)");
    if (n_masked_channels < 1 || n_masked_channels > n_channels)
        throw invalid_argument("task config: n_masked_channels out of range");
}

std::size_t task::n_context() const {
    std::size_t n = 0;
    for (auto m : context_mask) n += m ? 1u : 0u;
    return n;
}

std::vector<std::size_t> task::context_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < context_mask.size(); ++i)
        if (context_mask[i]) idx.push_back(i);
    return idx;
}

std::vector<std::size_t> task::target_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < context_mask.size(); ++i)
        if (!context_mask[i]) idx.push_back(i);
    return idx;
}

namespace {

// In-place lower Cholesky; returns false if a pivot is not positive.
bool cholesky(std::vector<double>& a, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (!(d > 0.0)) return false;
        const double l = std::sqrt(d);
        a[j * n + j] = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / l;
        }
    }
    return true;
}

std::vector<double> cholesky_with_jitter(std::vector<double> gram, std::size_t n) {
    double diag_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) diag_mean += gram[i * n + i];
    diag_mean = n ? diag_mean / static_cast<double>(n) : 1.0;
    for (double rel = 1e-8; rel <= 1.0000001e-4; rel *= 10.0) {
        std::vector<double> a = gram;
        for (std::size_t i = 0; i < n; ++i) a[i * n + i] += rel * diag_mean;
        if (cholesky(a, n)) return a;
    }
    throw numeric_error("gram matrix factorization failed after jitter escalation");
}

num::dtensor mvn_sample(const std::vector<double>& chol, std::size_t n, rng_t& rng) {
    num::dtensor z({n});
    num::fill_standard_normal(z, rng);
    num::dtensor y({n});
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j <= i; ++j) s += chol[i * n + j] * z[j];
        y[i] = s;
    }
    return y;
}

std::vector<double> gram_matrix(const num::dtensor& x, const kernel_spec& kernel, double noise_sigma) {
    const std::size_t n = x.shape()[0];
    const std::size_t d = x.rank() == 2 ? x.shape()[1] : 1;
    std::vector<double> gram(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double k = kernel_eval(kernel, x.data() + i * d, x.data() + j * d, d);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    for (std::size_t i = 0; i < n; ++i) gram[i * n + i] += noise_sigma * noise_sigma;
    return gram;
}

}  // namespace

num::dtensor sample_gp_outputs(const num::dtensor& x, const kernel_spec& kernel, double noise_sigma, rng_t& rng) {
    const std::size_t n = x.shape()[0];
    const auto chol = cholesky_with_jitter(gram_matrix(x, kernel, noise_sigma), n);
    return mvn_sample(chol, n, rng);
}

task sample_gp_task(const gp_task_config& cfg, const kernel_spec& kernel, std::uint64_t seed) {
    cfg.validate();
    kernel.validate();
    rng_t rng(seed);

    const std::size_t n_target = static_cast<std::size_t>(cfg.n_target);
    std::uniform_int_distribution<int> ctx_count(cfg.n_context_lo, cfg.n_context_hi);
    const std::size_t n_context = static_cast<std::size_t>(ctx_count(rng));
    const std::size_t n = n_context + n_target;

    task tk;
    tk.kernel = kernel;
    tk.seed = seed;

    if (cfg.n_channels == 1) {
        num::dtensor x({n, static_cast<std::size_t>(cfg.d_x)});
        num::fill_uniform(x, rng, cfg.x_domain_lo, cfg.x_domain_hi);
        if (cfg.mask != mask_mode::random) {
            // window/suffix masks are defined over the ordering of the first
            // coordinate, so store points sorted by it
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0u);
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return x[a * x.shape()[1]] < x[b * x.shape()[1]]; });
            x = num::gather_rows(x, order);
        }
        tk.x = std::move(x);
        auto y = sample_gp_outputs(tk.x, kernel, cfg.noise_sigma, rng);
        tk.y = num::reshape(y, {n, 1});

        tk.context_mask.assign(n, 0);
        if (cfg.mask == mask_mode::random) {
            std::vector<std::size_t> idx(n);
            std::iota(idx.begin(), idx.end(), 0u);
            std::shuffle(idx.begin(), idx.end(), rng);
            for (std::size_t i = 0; i < n_context; ++i) tk.context_mask[idx[i]] = 1;
        } else if (cfg.mask == mask_mode::suffix) {
            for (std::size_t i = 0; i < n_context; ++i) tk.context_mask[i] = 1;
        } else {
            std::uniform_int_distribution<std::size_t> start(0, n - n_target);
            const std::size_t s = start(rng);
            for (std::size_t i = 0; i < n; ++i) tk.context_mask[i] = (i < s || i >= s + n_target) ? 1 : 0;
        }
        return tk;
    }

    // Multichannel: a (time, channel) grid with y per channel drawn
    // independently over the shared time axis. Time is an even grid and the
    // channel index is normalized so both coordinates stay inside x_domain.
    const std::size_t n_ch = static_cast<std::size_t>(cfg.n_channels);
    std::size_t per_ch = (n + n_ch - 1) / n_ch;
    const std::size_t total = per_ch * n_ch;
    num::dtensor times({per_ch, 1});
    for (std::size_t i = 0; i < per_ch; ++i)
        times[i] = per_ch == 1 ? cfg.x_domain_lo
                               : cfg.x_domain_lo + (cfg.x_domain_hi - cfg.x_domain_lo) *
                                                       static_cast<double>(i) / static_cast<double>(per_ch - 1);

    num::dtensor x({total, 2});
    num::dtensor y({total, 1});
    const auto chol = cholesky_with_jitter(gram_matrix(times, kernel, cfg.noise_sigma), per_ch);
    for (std::size_t c = 0; c < n_ch; ++c) {
        const double cval = n_ch == 1 ? cfg.x_domain_lo
                                      : cfg.x_domain_lo + (cfg.x_domain_hi - cfg.x_domain_lo) *
                                                              static_cast<double>(c) / static_cast<double>(n_ch - 1);
        auto draw = mvn_sample(chol, per_ch, rng);
        for (std::size_t i = 0; i < per_ch; ++i) {
            x[(c * per_ch + i) * 2] = times[i];
            x[(c * per_ch + i) * 2 + 1] = cval;
            y[c * per_ch + i] = draw[i];
        }
    }
    tk.x = std::move(x);
    tk.y = std::move(y);
    tk.context_mask.assign(total, 1);

    const std::size_t n_masked_ch = static_cast<std::size_t>(cfg.n_masked_channels);
    if (cfg.mask == mask_mode::random) {
        std::vector<std::size_t> idx(total);
        std::iota(idx.begin(), idx.end(), 0u);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < std::min(n_target, total - 1); ++i) tk.context_mask[idx[i]] = 0;
    } else {
        // per-channel target block length; window places one contiguous block
        // per masked channel, suffix pins the block at the end
        std::vector<std::size_t> channels(n_ch);
        std::iota(channels.begin(), channels.end(), 0u);
        std::shuffle(channels.begin(), channels.end(), rng);
        const std::size_t block = std::min(per_ch, std::max<std::size_t>(1, n_target / n_masked_ch));
        for (std::size_t m = 0; m < n_masked_ch; ++m) {
            const std::size_t c = channels[m];
            std::size_t s;
            if (cfg.mask == mask_mode::suffix) {
                s = per_ch - block;
            } else {
                std::uniform_int_distribution<std::size_t> start(0, per_ch - block);
                s = start(rng);
            }
            for (std::size_t i = s; i < s + block; ++i) tk.context_mask[c * per_ch + i] = 0;
        }
    }
    return tk;
}

}  // namespace nbp::data
