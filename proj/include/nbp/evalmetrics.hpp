#ifndef NBP_EVALMETRICS_HPP
#define NBP_EVALMETRICS_HPP

#include <string>
#include <vector>

#include "json.hpp"
#include "nbp/diffusion.hpp"
#include "nbp/runconfig.hpp"
#include "nbp/synthdata.hpp"

namespace nbp::eval {

// Joint log-density of y_true under a Gaussian fitted to the samples
// (sample mean, S-1 covariance, + 1e-6 I), divided by the number of points.
// samples: S x M, y_true: M.
double gaussian_fit_loglik(const num::dtensor& samples, const num::dtensor& y_true);

// Mean squared error over samples and points.
double conditional_mse(const num::dtensor& samples, const num::dtensor& y_true);

struct task_record {
    std::uint64_t task_seed = 0;
    std::size_t n_context = 0;
    double loglik = 0.0;
    double mse = 0.0;
};

struct metric_report {
    std::string label;
    std::string normalization = "per_point";
    io::eval_protocol protocol;
    std::vector<task_record> records;

    double loglik_mean() const;
    double loglik_se() const;
    double mse_mean() const;
    double mse_se() const;
};

// Draws n_samples conditional samples per task with the EMA weights and
// scores targets by Gaussian-fit log-likelihood and MSE. Deterministic given
// the protocol seed; per-task sampler seeds are derived from it.
metric_report evaluate_run(const model::diffusion_model<float>& m, const std::vector<data::task>& tasks,
                           const io::eval_protocol& proto, const std::string& label);

void write_report_csv(const metric_report& r, const std::string& path);
void write_report_json(const metric_report& r, const std::string& path);
metric_report read_report_json(const std::string& path);

struct comparison {
    struct row {
        std::string metric;
        double a = 0.0, b = 0.0;
        bool higher_better = true;
        std::string winner;
    };
    std::string label_a, label_b;
    std::vector<row> rows;
    std::string verdict;  // "<label> wins k/m"
};

comparison compare_reports(const metric_report& a, const metric_report& b);
std::string format_comparison(const comparison& c);

}  // namespace nbp::eval

#endif
