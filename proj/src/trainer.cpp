#include "nbp/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "nbp/taskio.hpp"

namespace nbp::io {

namespace {

constexpr std::uint64_t train_task_stream = 0x7e41;
constexpr std::uint64_t train_noise_stream = 0x7e42;

constexpr double adam_beta1 = 0.9;
constexpr double adam_beta2 = 0.999;
constexpr double adam_eps = 1e-8;

nlohmann::json config_without_epochs(nlohmann::json j) {
    if (j.contains("train") && j["train"].contains("epochs")) j["train"].erase("epochs");
    return j;
}

}  // namespace

double lr_at(long long step, const train_config& cfg) {
    if (step < 0) throw invalid_argument("lr_at: negative step");
    const long long spe = cfg.steps_per_epoch();
    const long long warmup = static_cast<long long>(cfg.warmup_epochs) * spe;
    const long long decay = static_cast<long long>(cfg.decay_epochs) * spe;
    if (step < warmup)
        return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * static_cast<double>(step) / static_cast<double>(warmup);
    const long long d = step - warmup;
    if (d < decay)
        return cfg.lr_end + 0.5 * (cfg.lr_peak - cfg.lr_end) *
                                (1.0 + std::cos(std::numbers::pi * static_cast<double>(d) / static_cast<double>(decay)));
    return cfg.lr_end;
}

void ema_update(num::ftensor& shadow, const num::ftensor& raw, double decay) {
    if (!shadow.same_shape(raw)) throw invalid_argument("ema_update: shape mismatch");
    const float d = static_cast<float>(decay);
    const float c = static_cast<float>(1.0 - decay);
    for (std::size_t i = 0; i < shadow.numel(); ++i) shadow[i] = d * shadow[i] + c * raw[i];
}

train_result train_model(const run_config& rc, const std::string& out_dir, const std::string& resume_path) {
    rc.validate();
    std::filesystem::create_directories(out_dir);
    const std::string metrics_path = out_dir + "/metrics.csv";
    const std::string ckpt_path = out_dir + "/checkpoint.nbp";

    auto m = build_model(rc);
    std::vector<num::ftensor*> params;
    m.params.w.for_each([&](const std::string&, num::ftensor& t) { params.push_back(&t); });
    const std::size_t n_params = params.size();

    checkpoint ck;
    ck.config = to_json(rc);
    ck.ema = m.params;  // EMA shadow starts at the initialization
    ck.adam_m.assign(n_params, {});
    ck.adam_v.assign(n_params, {});
    for (std::size_t i = 0; i < n_params; ++i) {
        ck.adam_m[i] = num::ftensor(params[i]->shape());
        ck.adam_v[i] = num::ftensor(params[i]->shape());
    }

    const long long spe = rc.train.steps_per_epoch();
    const long long total_steps = static_cast<long long>(rc.train.epochs) * spe;
    long long start_step = 0;

    if (!resume_path.empty()) {
        checkpoint prev = load_checkpoint(resume_path);
        if (config_without_epochs(prev.config) != config_without_epochs(ck.config))
            throw invalid_argument("resume: checkpoint config does not match (only train.epochs may change)");
        if (prev.global_step >= total_steps) {
            std::fprintf(stderr, "resume: run already finished at step %lld (total %lld); nothing to do\n",
                         prev.global_step, total_steps);
            train_result r;
            r.final = std::move(prev);
            r.checkpoint_path = resume_path;
            r.metrics_path = metrics_path;
            r.resumed_noop = true;
            return r;
        }
        start_step = prev.global_step;
        m.params = prev.params;
        ck.ema = prev.ema;
        ck.adam_m = std::move(prev.adam_m);
        ck.adam_v = std::move(prev.adam_v);
        params.clear();
        m.params.w.for_each([&](const std::string&, num::ftensor& t) { params.push_back(&t); });
    }

    std::ofstream metrics;
    if (start_step == 0 || !std::filesystem::exists(metrics_path)) {
        metrics.open(metrics_path, std::ios::binary);
        if (!metrics) throw io_error("cannot open '" + metrics_path + "' for writing");
        metrics << "step,epoch,lr,train_loss,wall_time_ms\n";
    } else {
        metrics.open(metrics_path, std::ios::binary | std::ios::app);
        if (!metrics) throw io_error("cannot open '" + metrics_path + "' for appending");
    }

    std::vector<num::ftensor*> ema_params;
    ck.ema.w.for_each([&](const std::string&, num::ftensor& t) { ema_params.push_back(&t); });

    const auto spec = rc.dataset.kernel_spec();
    const auto t_start = std::chrono::steady_clock::now();
    char row[160];

    for (long long step = start_step; step < total_steps; ++step) {
        // fresh tasks and draws, derived statelessly from (seed, step, i)
        std::vector<data::task> batch;
        std::vector<model::noise_draw<float>> draws;
        batch.reserve(static_cast<std::size_t>(rc.train.batch_size));
        draws.reserve(static_cast<std::size_t>(rc.train.batch_size));
        for (int i = 0; i < rc.train.batch_size; ++i) {
            const auto idx = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(rc.train.batch_size) +
                             static_cast<std::uint64_t>(i);
            batch.push_back(data::sample_gp_task(rc.dataset.task, spec,
                                                 derive_seed(rc.train.seed, train_task_stream, idx)));
            rng_t nrng(derive_seed(rc.train.seed, train_noise_stream, idx));
            draws.push_back(model::draw_noise<float>(batch.back(), m.schedule, nrng));
        }

        model::loss_and_grads<float> lg;
        try {
            lg = model::training_loss_fixed(batch, m, draws, rc.train.loss, true);
        } catch (const numeric_error& e) {
            throw numeric_error("training aborted at step " + std::to_string(step) + ": " + e.what());
        }
        if (!std::isfinite(lg.loss))
            throw numeric_error("training aborted at step " + std::to_string(step) + ": non-finite loss");

        // global-norm clip
        double norm2 = 0.0;
        for (const auto& g : lg.grads)
            for (std::size_t k = 0; k < g.numel(); ++k) norm2 += static_cast<double>(g[k]) * g[k];
        const double norm = std::sqrt(norm2);
        const float clip = norm > rc.train.grad_clip ? static_cast<float>(rc.train.grad_clip / norm) : 1.0f;

        const double lr = lr_at(step, rc.train);
        const double k = static_cast<double>(step + 1);
        const double bc1 = 1.0 - std::pow(adam_beta1, k);
        const double bc2 = 1.0 - std::pow(adam_beta2, k);
        for (std::size_t p = 0; p < n_params; ++p) {
            auto& mt = ck.adam_m[p];
            auto& vt = ck.adam_v[p];
            auto& w = *params[p];
            const auto& g = lg.grads[p];
            for (std::size_t j = 0; j < w.numel(); ++j) {
                const double gj = static_cast<double>(g[j]) * clip;
                mt[j] = static_cast<float>(adam_beta1 * mt[j] + (1.0 - adam_beta1) * gj);
                vt[j] = static_cast<float>(adam_beta2 * vt[j] + (1.0 - adam_beta2) * gj * gj);
                const double mhat = mt[j] / bc1;
                const double vhat = vt[j] / bc2;
                w[j] = static_cast<float>(w[j] - lr * mhat / (std::sqrt(vhat) + adam_eps));
            }
            ema_update(*ema_params[p], w, rc.train.ema_decay);
        }

        if (step % rc.train.log_every == 0) {
            const double wall =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
            std::snprintf(row, sizeof row, "%lld,%lld,%.17g,%.17g,%.3f\n", step, step / spe, lr, lg.loss, wall);
            metrics << row;
        }
    }
    metrics.flush();
    if (!metrics) throw io_error("write failed for '" + metrics_path + "'");

    ck.global_step = total_steps;
    ck.params = m.params;
    ck.rng_state = "seed=" + std::to_string(rc.train.seed) + ";step=" + std::to_string(total_steps);
    save_checkpoint(ck, ckpt_path);

    // config echo alongside the run artefacts
    std::ofstream cfg(out_dir + "/config.json", std::ios::binary);
    cfg << to_json(rc).dump(2) << '\n';

    train_result r;
    r.final = std::move(ck);
    r.checkpoint_path = ckpt_path;
    r.metrics_path = metrics_path;
    return r;
}

}  // namespace nbp::io
