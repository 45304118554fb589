#ifndef NBP_RUNCONFIG_HPP
#define NBP_RUNCONFIG_HPP

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "nbp/diffusion.hpp"
#include "nbp/schedule.hpp"
#include "nbp/synthdata.hpp"

namespace nbp::io {

struct train_config {
    int epochs = 100;
    int tasks_per_epoch = 1024;
    int batch_size = 32;
    double lr_start = 2e-5;
    double lr_peak = 1e-3;
    double lr_end = 1e-5;
    int warmup_epochs = 20;
    int decay_epochs = 200;
    double ema_decay = 0.995;
    std::uint64_t seed = 42;
    model::loss_kind loss = model::loss_kind::l2;
    int log_every = 1;
    double grad_clip = 10.0;

    void validate() const;
    int steps_per_epoch() const { return tasks_per_epoch / batch_size; }
};

struct eval_protocol {
    int n_samples = 128;
    int repaint = 5;
    std::uint64_t seed = 7;
    void validate() const;
};

struct data_config {
    data::gp_task_config task;
    data::kernel_kind kernel = data::kernel_kind::squared_exponential;
    std::optional<double> lengthscale;  // absent: sqrt(D)/4
    int n_tasks = 16;                   // task-file size for gen-data / eval

    data::kernel_spec kernel_spec() const {
        return {kernel, lengthscale ? *lengthscale : data::default_lengthscale(task.d_x)};
    }
    void validate() const;
};

struct diffusion_flags {
    bool bridge_enabled = true;
    model::alignment_kind alignment = model::alignment_kind::identity;
    bool literal_gamma_init = false;
    num::dtensor affine_matrix;  // custom_affine only, d_y x d_x
    num::dtensor affine_bias;    // custom_affine only, d_y
};

// One JSON document with a schema version; unknown keys are rejected at
// every level and the version is checked on load.
struct run_config {
    static constexpr int schema_version = 1;
    sched::schedule_config schedule;
    model::denoiser_config denoiser;
    diffusion_flags diffusion;
    data_config dataset;
    train_config train;
    eval_protocol eval;
    std::string label = "run";

    void validate() const;
};

run_config parse_run_config(const nlohmann::json& j);
run_config load_run_config(const std::string& path);
nlohmann::json to_json(const run_config& rc);

// Schedule honors bridge_enabled by forcing gamma to zero when disabled;
// denoiser weights are initialized from train.seed.
model::diffusion_model<float> build_model(const run_config& rc);

}  // namespace nbp::io

#endif
