#include "nbp/taskio.hpp"

#include <fstream>

namespace nbp::io {

namespace {
constexpr std::uint64_t task_stream = 0x7a5d;
}

std::vector<data::task> generate_tasks(const data_config& cfg, std::uint64_t seed, int n_tasks) {
    cfg.validate();
    std::vector<data::task> tasks;
    tasks.reserve(static_cast<std::size_t>(n_tasks));
    const auto spec = cfg.kernel_spec();
    for (int i = 0; i < n_tasks; ++i)
        tasks.push_back(data::sample_gp_task(cfg.task, spec, derive_seed(seed, task_stream, static_cast<std::uint64_t>(i))));
    return tasks;
}

void write_tasks(const std::string& path, const std::vector<data::task>& tasks, const data_config& cfg) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open task file '" + path + "' for writing");
    for (const auto& tk : tasks) {
        nlohmann::json j;
        j["seed"] = tk.seed;
        j["config"] = {{"d_x", cfg.task.d_x},
                       {"n_target", cfg.task.n_target},
                       {"noise_sigma", cfg.task.noise_sigma},
                       {"mask_mode", to_string(cfg.task.mask)},
                       {"n_channels", cfg.task.n_channels}};
        j["kernel"] = {{"kind", to_string(tk.kernel.kind)}, {"lengthscale", tk.kernel.lengthscale}};
        j["n"] = tk.x.shape()[0];
        j["d_x"] = tk.x.shape()[1];
        j["d_y"] = tk.y.shape()[1];
        j["x"] = std::vector<double>(tk.x.data(), tk.x.data() + tk.x.numel());
        j["y"] = std::vector<double>(tk.y.data(), tk.y.data() + tk.y.numel());
        j["mask"] = tk.context_mask;
        f << j.dump() << '\n';
    }
    if (!f) throw io_error("write failed for task file '" + path + "'");
}

std::vector<data::task> read_tasks(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open task file '" + path + "'");
    std::vector<data::task> tasks;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw invalid_argument("task file '" + path + "' line " + std::to_string(lineno) + ": " + e.what());
        }
        data::task tk;
        tk.seed = j.at("seed").get<std::uint64_t>();
        tk.kernel.kind = data::kernel_kind_from_string(j.at("kernel").at("kind").get<std::string>());
        tk.kernel.lengthscale = j.at("kernel").at("lengthscale").get<double>();
        const auto n = j.at("n").get<std::size_t>();
        const auto d_x = j.at("d_x").get<std::size_t>();
        const auto d_y = j.at("d_y").get<std::size_t>();
        auto xs = j.at("x").get<std::vector<double>>();
        auto ys = j.at("y").get<std::vector<double>>();
        if (xs.size() != n * d_x || ys.size() != n * d_y)
            throw invalid_argument("task file '" + path + "' line " + std::to_string(lineno) +
                                   ": array sizes do not match n/d");
        tk.x = num::dtensor({n, d_x}, std::move(xs));
        tk.y = num::dtensor({n, d_y}, std::move(ys));
        tk.context_mask = j.at("mask").get<std::vector<std::uint8_t>>();
        if (tk.context_mask.size() != n)
            throw invalid_argument("task file '" + path + "' line " + std::to_string(lineno) + ": bad mask length");
        tasks.push_back(std::move(tk));
    }
    if (tasks.empty()) throw invalid_argument("task file '" + path + "' contains no tasks");
    return tasks;
}

}  // namespace nbp::io
