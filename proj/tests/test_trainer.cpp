#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nbp/trainer.hpp"

using namespace nbp;
using namespace nbp::io;

namespace {

run_config tiny_config(std::uint64_t seed = 42) {
    run_config rc;
    rc.schedule = {sched::schedule_kind::linear, 20, 1e-3, 0.3, false};
    rc.denoiser = {1, 8, 2, 8};
    rc.dataset.task.n_context_lo = 1;
    rc.dataset.task.n_context_hi = 3;
    rc.dataset.task.n_target = 6;
    rc.train.epochs = 2;
    rc.train.tasks_per_epoch = 8;
    rc.train.batch_size = 4;
    rc.train.warmup_epochs = 1;
    rc.train.decay_epochs = 2;
    rc.train.seed = seed;
    rc.label = "tiny";
    return rc;
}

std::string tmpdir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("nbp_trainer_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// metrics CSV without the wall-time column (wall time is physical, not
// reproducible)
std::string strip_wall(const std::string& csv) {
    std::stringstream in(csv), out;
    std::string line;
    while (std::getline(in, line)) {
        const auto pos = line.rfind(',');
        out << line.substr(0, pos) << '\n';
    }
    return out.str();
}

}  // namespace

TEST_CASE("lr schedule: endpoints, peak, midpoint, continuity, tail") {
    train_config cfg;
    cfg.tasks_per_epoch = 1024;
    cfg.batch_size = 32;  // 32 steps per epoch
    const long long spe = cfg.steps_per_epoch();
    const long long warmup = 20 * spe, decay = 200 * spe;

    CHECK(lr_at(0, cfg) == doctest::Approx(2e-5).epsilon(1e-12));
    CHECK(lr_at(warmup, cfg) == doctest::Approx(1e-3).epsilon(1e-12));
    CHECK(lr_at(warmup + decay / 2, cfg) == doctest::Approx(1e-5 + 0.5 * (1e-3 - 1e-5)).epsilon(1e-12));
    CHECK(lr_at(warmup + decay, cfg) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(lr_at(warmup + decay + 12345, cfg) == doctest::Approx(1e-5).epsilon(1e-12));
    // continuity at the warmup/decay boundary
    CHECK(lr_at(warmup - 1, cfg) == doctest::Approx(lr_at(warmup, cfg)).epsilon(1e-2));
    CHECK_THROWS_AS(lr_at(-1, cfg), invalid_argument);
}

TEST_CASE("ema update: endpoints and geometric convergence") {
    num::ftensor shadow({3}, {1.0f, 2.0f, 3.0f});
    num::ftensor raw({3}, {5.0f, 5.0f, 5.0f});

    auto s0 = shadow;
    ema_update(s0, raw, 0.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(s0[i] == raw[i]);

    auto s1 = shadow;
    ema_update(s1, raw, 1.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(s1[i] == shadow[i]);

    auto sk = shadow;
    const double decay = 0.9;
    for (int k = 1; k <= 25; ++k) {
        ema_update(sk, raw, decay);
        for (std::size_t i = 0; i < 3; ++i) {
            const double residual = std::pow(decay, k) * (shadow[i] - raw[i]);
            CHECK(sk[i] == doctest::Approx(raw[i] + residual).epsilon(1e-4));
        }
    }

    num::ftensor bad({2});
    CHECK_THROWS_AS(ema_update(bad, raw, 0.5), invalid_argument);
}

TEST_CASE("zero-epoch run: checkpoint equals initialization, metrics empty") {
    auto rc = tiny_config();
    rc.train.epochs = 0;
    const auto dir = tmpdir("zero");
    auto res = train_model(rc, dir);
    CHECK(res.final.global_step == 0);
    auto init = model::init_denoiser<float>(rc.denoiser, rc.train.seed);
    std::size_t i = 0;
    std::vector<const num::ftensor*> got;
    res.final.params.w.for_each([&](const std::string&, const num::ftensor& t) { got.push_back(&t); });
    init.w.for_each([&](const std::string&, const num::ftensor& t) {
        for (std::size_t k = 0; k < t.numel(); ++k) CHECK((*got[i])[k] == t[k]);
        ++i;
    });
    CHECK(read_file(dir + "/metrics.csv") == "step,epoch,lr,train_loss,wall_time_ms\n");
}

TEST_CASE("fixed seed: two runs produce identical metrics logs") {
    auto rc = tiny_config(7);
    const auto d1 = tmpdir("det1"), d2 = tmpdir("det2");
    train_model(rc, d1);
    train_model(rc, d2);
    CHECK(strip_wall(read_file(d1 + "/metrics.csv")) == strip_wall(read_file(d2 + "/metrics.csv")));
    CHECK(strip_wall(read_file(d1 + "/metrics.csv")).find("\n0,0,") != std::string::npos);
}

TEST_CASE("training reduces the loss on an easy config") {
    auto rc = tiny_config(3);
    rc.train.epochs = 50;
    rc.train.tasks_per_epoch = 32;
    rc.train.batch_size = 8;
    rc.train.warmup_epochs = 5;
    rc.train.decay_epochs = 45;
    rc.train.lr_peak = 3e-3;
    const auto dir = tmpdir("loss");
    train_model(rc, dir);
    const auto csv = read_file(dir + "/metrics.csv");
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line);  // header
    std::vector<double> losses;
    while (std::getline(ss, line)) {
        std::stringstream ls(line);
        std::string cell;
        for (int c = 0; c < 4; ++c) std::getline(ls, cell, ',');
        losses.push_back(std::stod(cell));
    }
    REQUIRE(losses.size() > 40);
    auto mean_over = [&](std::size_t lo, std::size_t hi) {
        double s = 0;
        for (std::size_t i = lo; i < hi; ++i) s += losses[i];
        return s / static_cast<double>(hi - lo);
    };
    const double head = mean_over(0, 10);
    const double tail = mean_over(losses.size() - 10, losses.size());
    // untrained zero-head model starts at mean(eps^2), about 1
    CHECK(head > 0.5);
    CHECK(tail < 0.9 * head);
}

TEST_CASE("checkpoint round-trip is exact") {
    auto rc = tiny_config(11);
    const auto dir = tmpdir("rt");
    auto res = train_model(rc, dir);
    auto loaded = load_checkpoint(res.checkpoint_path);
    CHECK(loaded.global_step == res.final.global_step);
    CHECK(loaded.config == res.final.config);

    std::vector<const num::ftensor*> a, b;
    res.final.params.w.for_each([&](const std::string&, const num::ftensor& t) { a.push_back(&t); });
    loaded.params.w.for_each([&](const std::string&, const num::ftensor& t) { b.push_back(&t); });
    res.final.ema.w.for_each([&](const std::string&, const num::ftensor& t) { a.push_back(&t); });
    loaded.ema.w.for_each([&](const std::string&, const num::ftensor& t) { b.push_back(&t); });
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i]->shape() == b[i]->shape());
        for (std::size_t k = 0; k < a[i]->numel(); ++k) CHECK((*a[i])[k] == (*b[i])[k]);
    }
    for (std::size_t i = 0; i < res.final.adam_m.size(); ++i)
        for (std::size_t k = 0; k < res.final.adam_m[i].numel(); ++k) {
            CHECK(res.final.adam_m[i][k] == loaded.adam_m[i][k]);
            CHECK(res.final.adam_v[i][k] == loaded.adam_v[i][k]);
        }
}

TEST_CASE("resume reproduces the uninterrupted run") {
    auto rc4 = tiny_config(13);
    rc4.train.epochs = 4;
    const auto full_dir = tmpdir("full");
    auto full = train_model(rc4, full_dir);

    auto rc2 = rc4;
    rc2.train.epochs = 2;
    const auto part_dir = tmpdir("part");
    auto part = train_model(rc2, part_dir);
    auto resumed = train_model(rc4, part_dir, part.checkpoint_path);

    CHECK(strip_wall(read_file(full_dir + "/metrics.csv")) == strip_wall(read_file(part_dir + "/metrics.csv")));

    std::vector<const num::ftensor*> a, b;
    full.final.params.w.for_each([&](const std::string&, const num::ftensor& t) { a.push_back(&t); });
    resumed.final.params.w.for_each([&](const std::string&, const num::ftensor& t) { b.push_back(&t); });
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < a[i]->numel(); ++k) CHECK((*a[i])[k] == (*b[i])[k]);
}

TEST_CASE("resume on a finished run is a no-op with a message") {
    auto rc = tiny_config(17);
    const auto dir = tmpdir("noop");
    auto res = train_model(rc, dir);
    auto again = train_model(rc, dir, res.checkpoint_path);
    CHECK(again.resumed_noop);
    CHECK(again.final.global_step == res.final.global_step);
}

TEST_CASE("resume rejects a mismatched config") {
    auto rc = tiny_config(19);
    const auto dir = tmpdir("mismatch");
    auto res = train_model(rc, dir);
    auto other = rc;
    other.denoiser.hidden = 16;
    other.denoiser.t_embed_dim = 16;
    CHECK_THROWS_AS(train_model(other, dir, res.checkpoint_path), invalid_argument);
}
