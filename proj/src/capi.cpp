#include "nbp.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

#include "nbp/checkpoint.hpp"
#include "nbp/evalmetrics.hpp"
#include "nbp/runconfig.hpp"
#include "nbp/schedule.hpp"
#include "nbp/svg.hpp"
#include "nbp/taskio.hpp"
#include "nbp/trainer.hpp"
#include "nbp/verify.hpp"

namespace {

thread_local std::string g_last_error;

nbp_status set_error(nbp_status code, const char* what) {
    g_last_error = what ? what : "unknown error";
    return code;
}

template <class F>
nbp_status guarded(F&& f) {
    try {
        f();
        return NBP_OK;
    } catch (const nbp::invalid_argument& e) {
        return set_error(NBP_ERR_INVALID, e.what());
    } catch (const nbp::numeric_error& e) {
        return set_error(NBP_ERR_NUMERIC, e.what());
    } catch (const nbp::io_error& e) {
        return set_error(NBP_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return set_error(NBP_ERR_INVALID, e.what());
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

nbp::io::run_config load_config_with_seed(const char* config_path, long long seed) {
    if (!config_path) throw nbp::invalid_argument("config path is null");
    auto rc = nbp::io::load_run_config(config_path);
    if (seed >= 0) {
        rc.train.seed = static_cast<std::uint64_t>(seed);
        rc.eval.seed = static_cast<std::uint64_t>(seed);
    }
    return rc;
}

// Model for sampling/evaluation: config echo from the checkpoint, EMA
// weights as the evaluation weights.
nbp::model::diffusion_model<float> model_from_checkpoint(const nbp::io::checkpoint& ck) {
    const auto rc = nbp::io::parse_run_config(ck.config);
    auto m = nbp::io::build_model(rc);
    m.params = ck.ema;
    return m;
}

}  // namespace

extern "C" {

const char* nbp_version(void) {
    return "0.1.0";
}

const char* nbp_last_error(void) {
    return g_last_error.c_str();
}

void nbp_string_free(char* s) {
    std::free(s);
}

struct nbp_schedule {
    nbp::sched::noise_schedule s;
};

nbp_status nbp_schedule_create(const char* kind, int timesteps, double beta_start, double beta_end,
                               int zero_bridge, nbp_schedule** out) {
    return guarded([&] {
        if (!kind || !out) throw nbp::invalid_argument("schedule: null argument");
        nbp::sched::schedule_config cfg;
        cfg.kind = nbp::sched::schedule_kind_from_string(kind);
        cfg.timesteps = timesteps;
        cfg.beta_start = beta_start;
        cfg.beta_end = beta_end;
        cfg.force_zero_bridge = zero_bridge != 0;
        *out = new nbp_schedule{nbp::sched::build_schedule(cfg)};
    });
}

void nbp_schedule_free(nbp_schedule* s) {
    delete s;
}

int nbp_schedule_timesteps(const nbp_schedule* s) {
    return s ? s->s.timesteps() : 0;
}

nbp_status nbp_schedule_coeff(const nbp_schedule* s, const char* name, int t, double* out) {
    return guarded([&] {
        if (!s || !name || !out) throw nbp::invalid_argument("schedule_coeff: null argument");
        const std::string n = name;
        if (n == "beta")
            *out = s->s.beta(t);
        else if (n == "alpha")
            *out = s->s.alpha(t);
        else if (n == "alpha_bar")
            *out = s->s.alpha_bar(t);
        else if (n == "snr")
            *out = s->s.snr(t);
        else if (n == "gamma")
            *out = s->s.gamma(t);
        else if (n == "gamma_bar")
            *out = s->s.gamma_bar(t);
        else if (n == "beta_tilde")
            *out = s->s.beta_tilde(t);
        else if (n == "c_bridge")
            *out = s->s.c_bridge(t);
        else
            throw nbp::invalid_argument("schedule_coeff: unknown coefficient '" + n + "'");
    });
}

nbp_status nbp_schedule_dump_csv(const nbp_schedule* s, const char* path) {
    return guarded([&] {
        if (!s || !path) throw nbp::invalid_argument("schedule_dump: null argument");
        nbp::sched::dump_schedule_csv(s->s, path);
    });
}

nbp_status nbp_gen_data(const char* config_path, const char* out_path, long long seed) {
    return guarded([&] {
        if (!out_path) throw nbp::invalid_argument("gen_data: output path is null");
        const auto rc = load_config_with_seed(config_path, seed);
        const std::uint64_t data_seed = seed >= 0 ? static_cast<std::uint64_t>(seed) : rc.eval.seed;
        auto tasks = nbp::io::generate_tasks(rc.dataset, data_seed, rc.dataset.n_tasks);
        nbp::io::write_tasks(out_path, tasks, rc.dataset);
    });
}

nbp_status nbp_train(const char* config_path, const char* out_dir, const char* resume_checkpoint,
                     long long seed) {
    return guarded([&] {
        if (!out_dir) throw nbp::invalid_argument("train: output directory is null");
        const auto rc = load_config_with_seed(config_path, seed);
        nbp::io::train_model(rc, out_dir, resume_checkpoint ? resume_checkpoint : "");
    });
}

nbp_status nbp_sample(const char* checkpoint_path, const char* task_file, int task_index, int n_samples,
                      int repaint, long long seed, const char* out_csv) {
    return guarded([&] {
        if (!checkpoint_path || !task_file || !out_csv)
            throw nbp::invalid_argument("sample: null argument");
        if (n_samples < 1) throw nbp::invalid_argument("sample: n_samples must be >= 1");
        const auto ck = nbp::io::load_checkpoint(checkpoint_path);
        auto m = model_from_checkpoint(ck);
        const auto tasks = nbp::io::read_tasks(task_file);
        if (task_index < 0 || static_cast<std::size_t>(task_index) >= tasks.size())
            throw nbp::invalid_argument("sample: task index out of range");
        const auto& tk = tasks[static_cast<std::size_t>(task_index)];

        const auto ctx_idx = tk.context_indices();
        const auto tgt_idx = tk.target_indices();
        const auto x_ctx = nbp::num::gather_rows(tk.x, ctx_idx);
        const auto y_ctx = nbp::num::gather_rows(tk.y, ctx_idx);
        const auto x_tgt = nbp::num::gather_rows(tk.x, tgt_idx);

        nbp::model::sampler_config sc;
        sc.repaint_repeats = repaint;
        sc.seed = seed >= 0 ? static_cast<std::uint64_t>(seed)
                            : nbp::io::parse_run_config(ck.config).eval.seed;
        // float first, double when the chain overflows training precision
        nbp::num::dtensor samples;
        try {
            auto sf = nbp::model::conditional_sample(nbp::model::cast_tensor<float>(x_ctx),
                                                     nbp::model::cast_tensor<float>(y_ctx),
                                                     nbp::model::cast_tensor<float>(x_tgt),
                                                     static_cast<std::size_t>(n_samples), m, sc);
            samples = nbp::num::dtensor(sf.shape());
            for (std::size_t i = 0; i < sf.numel(); ++i) samples[i] = static_cast<double>(sf[i]);
        } catch (const nbp::numeric_error&) {
            const auto md = nbp::model::cast_model<double>(m);
            samples = nbp::model::conditional_sample(x_ctx, y_ctx, x_tgt,
                                                     static_cast<std::size_t>(n_samples), md, sc);
        }

        const std::size_t S = samples.shape()[0], N = samples.shape()[1], dy = samples.shape()[2];
        const std::size_t dx = tk.x.shape()[1];
        std::FILE* f = std::fopen(out_csv, "wb");
        if (!f) throw nbp::io_error(std::string("cannot open '") + out_csv + "' for writing");
        std::fputs("sample,point", f);
        for (std::size_t d = 0; d < dx; ++d) std::fprintf(f, ",x%zu", d);
        for (std::size_t d = 0; d < dy; ++d) std::fprintf(f, ",y%zu", d);
        std::fputc('\n', f);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t n = 0; n < N; ++n) {
                std::fprintf(f, "%zu,%zu", s, n);
                for (std::size_t d = 0; d < dx; ++d)
                    std::fprintf(f, ",%.17g", tk.x[tgt_idx[n] * dx + d]);
                for (std::size_t d = 0; d < dy; ++d)
                    std::fprintf(f, ",%.17g", static_cast<double>(samples[(s * N + n) * dy + d]));
                std::fputc('\n', f);
            }
        if (std::fclose(f) != 0) throw nbp::io_error(std::string("write failed for '") + out_csv + "'");
    });
}

nbp_status nbp_evaluate(const char* checkpoint_path, const char* task_file, int n_samples, int repaint,
                        long long seed, const char* label, const char* out_csv, const char* out_json) {
    return guarded([&] {
        if (!checkpoint_path || !task_file) throw nbp::invalid_argument("evaluate: null argument");
        const auto ck = nbp::io::load_checkpoint(checkpoint_path);
        auto m = model_from_checkpoint(ck);
        const auto rc = nbp::io::parse_run_config(ck.config);
        const auto tasks = nbp::io::read_tasks(task_file);
        nbp::io::eval_protocol proto = rc.eval;
        if (n_samples > 0) proto.n_samples = n_samples;
        if (repaint > 0) proto.repaint = repaint;
        if (seed >= 0) proto.seed = static_cast<std::uint64_t>(seed);
        const auto rep = nbp::eval::evaluate_run(m, tasks, proto, label ? label : rc.label);
        if (out_csv) nbp::eval::write_report_csv(rep, out_csv);
        if (out_json) nbp::eval::write_report_json(rep, out_json);
    });
}

nbp_status nbp_compare(const char* report_a, const char* report_b, const char* out_json, char** table_out) {
    return guarded([&] {
        if (!report_a || !report_b) throw nbp::invalid_argument("compare: null argument");
        const auto a = nbp::eval::read_report_json(report_a);
        const auto b = nbp::eval::read_report_json(report_b);
        const auto c = nbp::eval::compare_reports(a, b);
        if (out_json) {
            nlohmann::json j;
            j["a"] = c.label_a;
            j["b"] = c.label_b;
            j["verdict"] = c.verdict;
            j["metrics"] = nlohmann::json::array();
            for (const auto& r : c.rows)
                j["metrics"].push_back({{"metric", r.metric},
                                        {"a", r.a},
                                        {"b", r.b},
                                        {"direction", r.higher_better ? "higher" : "lower"},
                                        {"winner", r.winner}});
            std::FILE* f = std::fopen(out_json, "wb");
            if (!f) throw nbp::io_error(std::string("cannot open '") + out_json + "' for writing");
            const std::string s = j.dump(2) + "\n";
            std::fwrite(s.data(), 1, s.size(), f);
            if (std::fclose(f) != 0) throw nbp::io_error(std::string("write failed for '") + out_json + "'");
        }
        if (table_out) *table_out = dup_string(nbp::eval::format_comparison(c));
    });
}

nbp_status nbp_plot_samples(const char* samples_csv, const char* task_file, int task_index,
                            const char* out_svg) {
    return guarded([&] {
        if (!samples_csv || !out_svg) throw nbp::invalid_argument("plot: null argument");
        nbp::io::plot_samples_svg(samples_csv, task_file ? task_file : "", task_index, out_svg);
    });
}

nbp_status nbp_plot_losses(const char* const* metrics_csvs, const char* const* labels, int count,
                           const char* out_svg) {
    return guarded([&] {
        if (!metrics_csvs || !out_svg || count < 1) throw nbp::invalid_argument("plot: null argument");
        std::vector<std::string> files, names;
        for (int i = 0; i < count; ++i) files.emplace_back(metrics_csvs[i]);
        if (labels)
            for (int i = 0; i < count; ++i) names.emplace_back(labels[i]);
        nbp::io::plot_losses_svg(files, names, out_svg);
    });
}

nbp_status nbp_verify(const char* inject_fault, char** table_out, int* n_failed) {
    return guarded([&] {
        const auto results = nbp::verify::run_verification(inject_fault ? inject_fault : "");
        int failed = 0;
        for (const auto& r : results)
            if (!r.pass) ++failed;
        if (table_out) *table_out = dup_string(nbp::verify::format_table(results));
        if (n_failed) *n_failed = failed;
    });
}

}  // extern "C"
