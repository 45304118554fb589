#ifndef NBP_COMMON_HPP
#define NBP_COMMON_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace nbp {

// Error surface. These map 1:1 onto the C API status codes and the CLI
// exit codes (1 validation, 2 numerical, 3 I/O).
struct invalid_argument : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using rng_t = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from (base seed, stream tag, index).
// Stateless, so any step of a run can be reproduced without replaying
// earlier draws.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(seed ^ (0xa076'1d64'78bd'642full * stream)) + index);
}

}  // namespace nbp

#endif
