#ifndef NBP_SYNTHDATA_HPP
#define NBP_SYNTHDATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "nbp/tensor.hpp"

namespace nbp::data {

enum class kernel_kind { squared_exponential, matern52 };

kernel_kind kernel_kind_from_string(const std::string& s);
std::string to_string(kernel_kind k);

struct kernel_spec {
    kernel_kind kind = kernel_kind::squared_exponential;
    double lengthscale = 0.25;

    void validate() const;
};

// lengthscale = sqrt(D)/4
double default_lengthscale(int d_x);

double kernel_eval(const kernel_spec& spec, const double* x1, const double* x2, std::size_t dim);
double kernel_eval(const kernel_spec& spec, const std::vector<double>& x1, const std::vector<double>& x2);

enum class mask_mode { random, window, suffix };

mask_mode mask_mode_from_string(const std::string& s);
std::string to_string(mask_mode m);

struct gp_task_config {
    int d_x = 1;
    int n_context_lo = 1;
    int n_context_hi = 10;
    int n_target = 50;
    double noise_sigma = 0.05;
    double x_domain_lo = -2.0;
    double x_domain_hi = 2.0;
    mask_mode mask = mask_mode::random;
    // Multichannel tasks pair a time index with a channel index as the two
    // input coordinates; channels are independent GP draws over time.
    // window mode masks a contiguous time block within n_masked_channels
    // channels; requires d_x == 2 when n_channels > 1.
    int n_channels = 1;
    int n_masked_channels = 1;

    void validate() const;
};

struct task {
    num::dtensor x;                  // N x D_x
    num::dtensor y;                  // N x D_y (D_y = 1 for GP draws)
    std::vector<std::uint8_t> context_mask;  // true = context point
    kernel_spec kernel;
    std::uint64_t seed = 0;

    std::size_t n_points() const { return x.shape()[0]; }
    std::size_t n_context() const;
    std::size_t n_target() const { return n_points() - n_context(); }
    std::vector<std::size_t> context_indices() const;
    std::vector<std::size_t> target_indices() const;
};

// Draws y ~ N(0, K + noise_sigma^2 I) for the given inputs via Cholesky with
// escalating diagonal jitter (1e-8 .. 1e-4 of the mean diagonal).
num::dtensor sample_gp_outputs(const num::dtensor& x, const kernel_spec& kernel, double noise_sigma, rng_t& rng);

task sample_gp_task(const gp_task_config& cfg, const kernel_spec& kernel, std::uint64_t seed);

}  // namespace nbp::data

#endif
