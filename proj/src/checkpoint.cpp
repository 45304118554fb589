#include "nbp/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "nbp/runconfig.hpp"

namespace nbp::io {

namespace {

constexpr char magic[8] = {'N', 'B', 'P', 'C', 'K', 'P', 'T', '1'};

struct array_entry {
    std::string name;
    const num::ftensor* t;
};

void collect(const checkpoint& c, std::vector<array_entry>& out) {
    c.params.w.for_each([&](const std::string& n, const num::ftensor& t) { out.push_back({"param/" + n, &t}); });
    c.ema.w.for_each([&](const std::string& n, const num::ftensor& t) { out.push_back({"ema/" + n, &t}); });
    std::size_t i = 0;
    c.params.w.for_each([&](const std::string& n, const num::ftensor&) {
        out.push_back({"adam_m/" + n, &c.adam_m[i]});
        out.push_back({"adam_v/" + n, &c.adam_v[i]});
        ++i;
    });
}

}  // namespace

void save_checkpoint(const checkpoint& c, const std::string& path) {
    if (c.adam_m.size() != c.adam_v.size()) throw invalid_argument("checkpoint: moment lists differ in size");

    std::vector<array_entry> arrays;
    collect(c, arrays);

    nlohmann::json manifest;
    manifest["format_version"] = checkpoint::format_version;
    manifest["config"] = c.config;
    manifest["global_step"] = c.global_step;
    manifest["rng_state"] = c.rng_state;
    nlohmann::json index = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& a : arrays) {
        index.push_back({{"name", a.name}, {"shape", a.t->shape()}, {"dtype", "f32"}, {"offset", offset}});
        offset += a.t->numel() * sizeof(float);
    }
    manifest["arrays"] = index;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open checkpoint '" + path + "' for writing");
    const std::string mjson = manifest.dump();
    const std::uint64_t mlen = mjson.size();
    f.write(magic, sizeof magic);
    f.write(reinterpret_cast<const char*>(&mlen), sizeof mlen);
    f.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
    for (const auto& a : arrays)
        f.write(reinterpret_cast<const char*>(a.t->data()),
                static_cast<std::streamsize>(a.t->numel() * sizeof(float)));
    if (!f) throw io_error("write failed for checkpoint '" + path + "'");
}

checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open checkpoint '" + path + "'");
    char m[8];
    f.read(m, sizeof m);
    if (!f || std::memcmp(m, magic, sizeof magic) != 0)
        throw invalid_argument("checkpoint: '" + path + "' is not a checkpoint file");
    std::uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), sizeof mlen);
    std::string mjson(mlen, '\0');
    f.read(mjson.data(), static_cast<std::streamsize>(mlen));
    if (!f) throw io_error("checkpoint: truncated manifest in '" + path + "'");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mjson);
    } catch (const nlohmann::json::exception& e) {
        throw invalid_argument(std::string("checkpoint: bad manifest JSON: ") + e.what());
    }
    if (manifest.at("format_version").get<int>() != checkpoint::format_version)
        throw invalid_argument("checkpoint: unsupported format version");

    checkpoint c;
    c.config = manifest.at("config");
    c.global_step = manifest.at("global_step").get<long long>();
    c.rng_state = manifest.at("rng_state").get<std::string>();

    // rebuild parameter layout from the config echo, then fill from the blob
    const run_config rc = parse_run_config(c.config);
    c.params = model::init_denoiser<float>(rc.denoiser, 0);
    c.ema = model::init_denoiser<float>(rc.denoiser, 0);
    std::size_t n_params = 0;
    c.params.w.for_each([&](const std::string&, const num::ftensor&) { ++n_params; });
    c.adam_m.assign(n_params, {});
    c.adam_v.assign(n_params, {});
    {
        std::size_t i = 0;
        c.params.w.for_each([&](const std::string&, const num::ftensor& t) {
            c.adam_m[i] = num::ftensor(t.shape());
            c.adam_v[i] = num::ftensor(t.shape());
            ++i;
        });
    }

    std::vector<array_entry> arrays;
    collect(c, arrays);
    const auto& index = manifest.at("arrays");
    if (index.size() != arrays.size()) throw invalid_argument("checkpoint: array index does not match config");

    const std::streampos blob_start = f.tellg();
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        const auto& e = index[i];
        if (e.at("name").get<std::string>() != arrays[i].name)
            throw invalid_argument("checkpoint: unexpected array '" + e.at("name").get<std::string>() + "'");
        if (e.at("dtype").get<std::string>() != "f32") throw invalid_argument("checkpoint: unsupported dtype");
        const auto shape = e.at("shape").get<std::vector<std::size_t>>();
        if (shape != arrays[i].t->shape()) throw invalid_argument("checkpoint: shape mismatch for " + arrays[i].name);
        f.seekg(blob_start + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
        auto* dst = const_cast<num::ftensor*>(arrays[i].t);
        f.read(reinterpret_cast<char*>(dst->data()), static_cast<std::streamsize>(dst->numel() * sizeof(float)));
    }
    if (!f) throw io_error("checkpoint: truncated blob in '" + path + "'");
    return c;
}

}  // namespace nbp::io
