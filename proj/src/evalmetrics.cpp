#include "nbp/evalmetrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace nbp::eval {

namespace {

constexpr double cov_lambda = 1e-6;
constexpr std::uint64_t eval_sampler_stream = 0xe7a1;

// lower Cholesky, throws numeric_error if not positive definite
std::vector<double> cholesky_or_throw(std::vector<double> a, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (!(d > 0.0)) throw numeric_error("covariance factorization failed despite regularization");
        const double l = std::sqrt(d);
        a[j * n + j] = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / l;
        }
    }
    return a;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    s2 /= static_cast<double>(v.size() - 1);
    return std::sqrt(s2 / static_cast<double>(v.size()));
}

}  // namespace

double gaussian_fit_loglik(const num::dtensor& samples, const num::dtensor& y_true) {
    if (samples.rank() != 2) throw invalid_argument("gaussian_fit_loglik: samples must be S x M");
    const std::size_t S = samples.shape()[0];
    const std::size_t M = samples.shape()[1];
    if (S < 2) throw invalid_argument("gaussian_fit_loglik: need at least two samples");
    if (y_true.numel() != M) throw invalid_argument("gaussian_fit_loglik: y_true size mismatch");

    std::vector<double> mean(M, 0.0);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t j = 0; j < M; ++j) mean[j] += samples[s * M + j];
    for (auto& v : mean) v /= static_cast<double>(S);

    std::vector<double> cov(M * M, 0.0);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t i = 0; i < M; ++i) {
            const double di = samples[s * M + i] - mean[i];
            for (std::size_t j = 0; j <= i; ++j) cov[i * M + j] += di * (samples[s * M + j] - mean[j]);
        }
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            cov[i * M + j] /= static_cast<double>(S - 1);
            cov[j * M + i] = cov[i * M + j];
        }
    for (std::size_t i = 0; i < M; ++i) cov[i * M + i] += cov_lambda;

    const auto chol = cholesky_or_throw(std::move(cov), M);
    // solve L z = (y - mean); logdet = 2 sum log L_ii
    std::vector<double> z(M);
    for (std::size_t i = 0; i < M; ++i) {
        double s = y_true[i] - mean[i];
        for (std::size_t k = 0; k < i; ++k) s -= chol[i * M + k] * z[k];
        z[i] = s / chol[i * M + i];
    }
    double quad = 0.0, logdet = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        quad += z[i] * z[i];
        logdet += 2.0 * std::log(chol[i * M + i]);
    }
    const double joint =
        -0.5 * (quad + logdet + static_cast<double>(M) * std::log(2.0 * std::numbers::pi));
    return joint / static_cast<double>(M);
}

double conditional_mse(const num::dtensor& samples, const num::dtensor& y_true) {
    if (samples.rank() != 2) throw invalid_argument("conditional_mse: samples must be S x M");
    const std::size_t S = samples.shape()[0];
    const std::size_t M = samples.shape()[1];
    if (S < 1) throw invalid_argument("conditional_mse: need at least one sample");
    if (y_true.numel() != M) throw invalid_argument("conditional_mse: y_true size mismatch");
    double acc = 0.0;
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t j = 0; j < M; ++j) {
            const double d = samples[s * M + j] - y_true[j];
            acc += d * d;
        }
    return acc / static_cast<double>(S * M);
}

double metric_report::loglik_mean() const {
    std::vector<double> v;
    for (const auto& r : records) v.push_back(r.loglik);
    return mean_of(v);
}
double metric_report::loglik_se() const {
    std::vector<double> v;
    for (const auto& r : records) v.push_back(r.loglik);
    return se_of(v);
}
double metric_report::mse_mean() const {
    std::vector<double> v;
    for (const auto& r : records) v.push_back(r.mse);
    return mean_of(v);
}
double metric_report::mse_se() const {
    std::vector<double> v;
    for (const auto& r : records) v.push_back(r.mse);
    return se_of(v);
}

metric_report evaluate_run(const model::diffusion_model<float>& m, const std::vector<data::task>& tasks,
                           const io::eval_protocol& proto, const std::string& label) {
    if (tasks.empty()) throw invalid_argument("evaluate_run: empty task set");
    proto.validate();
    metric_report rep;
    rep.label = label;
    rep.protocol = proto;

    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const auto& tk = tasks[ti];
        const auto ctx_idx = tk.context_indices();
        const auto tgt_idx = tk.target_indices();
        const auto x_tgt_d = num::gather_rows(tk.x, tgt_idx);
        const auto y_tgt = num::gather_rows(tk.y, tgt_idx);

        model::sampler_config sc;
        sc.repaint_repeats = proto.repaint;
        // keyed by the task's own seed: identical tasks get identical records
        sc.seed = derive_seed(proto.seed, eval_sampler_stream, tk.seed);
        const auto S = static_cast<std::size_t>(proto.n_samples);
        const std::size_t M = y_tgt.numel();

        // sample in training precision; the reverse chain of a poorly fitted
        // model can overflow float, in which case the task reruns in double
        num::dtensor flat({S, M});
        try {
            auto samples = model::conditional_sample(
                model::cast_tensor<float>(num::gather_rows(tk.x, ctx_idx)),
                model::cast_tensor<float>(num::gather_rows(tk.y, ctx_idx)),
                model::cast_tensor<float>(x_tgt_d), S, m, sc);
            for (std::size_t i = 0; i < S * M; ++i) flat[i] = static_cast<double>(samples[i]);
        } catch (const numeric_error&) {
            const auto md = model::cast_model<double>(m);
            auto samples = model::conditional_sample(num::gather_rows(tk.x, ctx_idx),
                                                     num::gather_rows(tk.y, ctx_idx), x_tgt_d, S, md, sc);
            std::copy_n(samples.data(), S * M, flat.data());
        }
        num::dtensor truth({M}, std::vector<double>(y_tgt.data(), y_tgt.data() + M));

        task_record rec;
        rec.task_seed = tk.seed;
        rec.n_context = ctx_idx.size();
        rec.loglik = gaussian_fit_loglik(flat, truth);
        rec.mse = conditional_mse(flat, truth);
        rep.records.push_back(rec);
    }
    return rep;
}

void write_report_csv(const metric_report& r, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open report '" + path + "' for writing");
    f << "task_index,task_seed,n_context,loglik,mse\n";
    char row[160];
    for (std::size_t i = 0; i < r.records.size(); ++i) {
        const auto& rec = r.records[i];
        std::snprintf(row, sizeof row, "%zu,%llu,%zu,%.17g,%.17g\n", i,
                      static_cast<unsigned long long>(rec.task_seed), rec.n_context, rec.loglik, rec.mse);
        f << row;
    }
    if (!f) throw io_error("write failed for report '" + path + "'");
}

void write_report_json(const metric_report& r, const std::string& path) {
    nlohmann::json j;
    j["label"] = r.label;
    j["normalization"] = r.normalization;
    j["protocol"] = {{"n_samples", r.protocol.n_samples}, {"repaint", r.protocol.repaint}, {"seed", r.protocol.seed}};
    j["n_tasks"] = r.records.size();
    j["loglik"] = {{"mean", r.loglik_mean()}, {"se", r.loglik_se()}};
    j["mse"] = {{"mean", r.mse_mean()}, {"se", r.mse_se()}};
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& rec : r.records)
        recs.push_back({{"task_seed", rec.task_seed},
                        {"n_context", rec.n_context},
                        {"loglik", rec.loglik},
                        {"mse", rec.mse}});
    j["records"] = recs;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open report '" + path + "' for writing");
    f << j.dump(2) << '\n';
    if (!f) throw io_error("write failed for report '" + path + "'");
}

metric_report read_report_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open report '" + path + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw invalid_argument("report '" + path + "': " + e.what());
    }
    metric_report r;
    r.label = j.at("label").get<std::string>();
    r.normalization = j.at("normalization").get<std::string>();
    r.protocol.n_samples = j.at("protocol").at("n_samples").get<int>();
    r.protocol.repaint = j.at("protocol").at("repaint").get<int>();
    r.protocol.seed = j.at("protocol").at("seed").get<std::uint64_t>();
    for (const auto& rec : j.at("records")) {
        task_record t;
        t.task_seed = rec.at("task_seed").get<std::uint64_t>();
        t.n_context = rec.at("n_context").get<std::size_t>();
        t.loglik = rec.at("loglik").get<double>();
        t.mse = rec.at("mse").get<double>();
        r.records.push_back(t);
    }
    return r;
}

comparison compare_reports(const metric_report& a, const metric_report& b) {
    comparison c;
    c.label_a = a.label;
    c.label_b = b.label;
    c.rows.push_back({"loglik", a.loglik_mean(), b.loglik_mean(), true, ""});
    c.rows.push_back({"mse", a.mse_mean(), b.mse_mean(), false, ""});
    int wins_a = 0;
    for (auto& row : c.rows) {
        const bool a_wins = row.higher_better ? row.a > row.b : row.a < row.b;
        row.winner = a_wins ? c.label_a : c.label_b;
        if (a_wins) ++wins_a;
    }
    const int total = static_cast<int>(c.rows.size());
    if (wins_a * 2 >= total)
        c.verdict = c.label_a + " wins " + std::to_string(wins_a) + "/" + std::to_string(total);
    else
        c.verdict = c.label_b + " wins " + std::to_string(total - wins_a) + "/" + std::to_string(total);
    return c;
}

std::string format_comparison(const comparison& c) {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf, "%-8s %20s %20s %8s %s\n", "metric", c.label_a.c_str(), c.label_b.c_str(),
                  "dir", "winner");
    out += buf;
    for (const auto& r : c.rows) {
        std::snprintf(buf, sizeof buf, "%-8s %20.6f %20.6f %8s %s\n", r.metric.c_str(), r.a, r.b,
                      r.higher_better ? "higher" : "lower", r.winner.c_str());
        out += buf;
    }
    out += "verdict: " + c.verdict + "\n";
    return out;
}

}  // namespace nbp::eval
