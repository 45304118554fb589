#ifndef NBP_TASKIO_HPP
#define NBP_TASKIO_HPP

#include <string>
#include <vector>

#include "nbp/runconfig.hpp"
#include "nbp/synthdata.hpp"

namespace nbp::io {

// Line-delimited records, one task per line: seed, config echo, flattened
// x, y and the context mask.
void write_tasks(const std::string& path, const std::vector<data::task>& tasks, const data_config& cfg);
std::vector<data::task> read_tasks(const std::string& path);

// Deterministic task set for a config: task i uses derive_seed(seed, "task", i).
std::vector<data::task> generate_tasks(const data_config& cfg, std::uint64_t seed, int n_tasks);

}  // namespace nbp::io

#endif
