#ifndef NBP_CHECKPOINT_HPP
#define NBP_CHECKPOINT_HPP

#include <string>
#include <vector>

#include "json.hpp"
#include "nbp/denoiser.hpp"

namespace nbp::io {

// Trained-weight snapshot: raw parameters, EMA shadow parameters, optimizer
// moments, step counter and RNG bookkeeping, plus the full config echo.
// On disk: 8-byte magic "NBPCKPT1", a little-endian u64 manifest length, the
// manifest JSON (format version, config, named-array index with
// shape/offset/dtype) and one contiguous little-endian float32 blob.
struct checkpoint {
    static constexpr int format_version = 1;
    nlohmann::json config;  // run_config echo
    long long global_step = 0;
    std::string rng_state;  // base-seed bookkeeping; draws are derived per step
    model::denoiser_params<float> params;
    model::denoiser_params<float> ema;
    std::vector<num::ftensor> adam_m;  // registry order
    std::vector<num::ftensor> adam_v;
};

void save_checkpoint(const checkpoint& c, const std::string& path);
checkpoint load_checkpoint(const std::string& path);

}  // namespace nbp::io

#endif
