#ifndef NBP_TRAINER_HPP
#define NBP_TRAINER_HPP

#include <string>

#include "nbp/checkpoint.hpp"
#include "nbp/runconfig.hpp"

namespace nbp::io {

// Linear warmup from lr_start to lr_peak, cosine decay to lr_end, then
// constant. Continuous at the warmup/decay boundary.
double lr_at(long long step, const train_config& cfg);

// shadow <- decay * shadow + (1 - decay) * raw, elementwise.
void ema_update(num::ftensor& shadow, const num::ftensor& raw, double decay);

struct train_result {
    checkpoint final;
    std::string checkpoint_path;
    std::string metrics_path;
    bool resumed_noop = false;  // resume on a finished run
};

// Runs the optimization loop: Adam (0.9 / 0.999 / 1e-8), global-norm clip,
// EMA after every step, metrics CSV rows every log_every steps. All
// randomness is derived statelessly from (seed, step, task index), so a
// resumed run reproduces the uninterrupted metrics log.
train_result train_model(const run_config& rc, const std::string& out_dir, const std::string& resume_path = "");

}  // namespace nbp::io

#endif
