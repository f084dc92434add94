// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "uncol/config.hpp"
#include "uncol/io.hpp"
#include "uncol/rng.hpp"
#include "uncol/trainer.hpp"
#include "uncol/uapl.hpp"

#include <fstream>

using namespace uncol;
using uncol::testing::scratch_dir;
using uncol::testing::toy_config;

namespace {

ProbMap random_probs(Rng& rng, int C, int H, int W) {
    ProbMap p(C, H, W);
    for (std::size_t i = 0; i < p.pixels(); ++i) {
        double t = 0;
        for (int c = 0; c < C; ++c) t += p.at(c, i) = rng.uniform(0.01, 1.0);
        for (int c = 0; c < C; ++c) p.at(c, i) /= t;
    }
    return p;
}

void corrupt_tail(const std::filesystem::path& p) {
    const std::string s = read_text(p);
    write_text(p, s.substr(0, s.size() - 3));
}

}  // namespace

TEST_CASE("scene round-trip is exact") {
    const auto dir = scratch_dir("io_scene");
    const RunConfig c = toy_config();
    for (std::uint64_t seed : {0ull, 17ull, 123456789ull}) {
        const Scene s = gen_scene(seed, c.task_domain, c.classes, 24, 40);
        const auto path = dir / ("s" + std::to_string(seed) + ".bin");
        write_scene(path, s);
        CHECK(std::filesystem::exists(path.string() + ".json"));
        CHECK(read_scene(path) == s);
    }
    const auto p = dir / "s17.bin";
    corrupt_tail(p);
    CHECK_THROWS_AS(read_scene(p), IoError);
    write_text(p, "XXXXjunk");
    CHECK_THROWS_AS(read_scene(p), IoError);
    CHECK_THROWS_AS(read_scene(dir / "missing.bin"), IoError);
}

TEST_CASE("fusion round-trip keeps the excluded set") {
    const auto dir = scratch_dir("io_fusion");
    Rng rng(4);
    const ProbMap a = random_probs(rng, 5, 6, 7), b = random_probs(rng, 5, 6, 7);
    const FusionResult f = fuse(a, b, entropy_map(a), entropy_map(b), 0.8);
    REQUIRE(f.omega_star.count() > 0);
    REQUIRE(f.omega_star.count() < a.pixels());
    write_fusion(dir / "f.bin", f);
    const FusionResult r = read_fusion(dir / "f.bin");
    CHECK(r.p_tilde == f.p_tilde);
    CHECK(r.omega_star.bits == f.omega_star.bits);
    CHECK(r.weights == f.weights);
    for (std::size_t i = 0; i < a.pixels(); ++i) {
        if (f.omega_star.bits[i]) CHECK(r.y_tilde.labels[i] == f.y_tilde.labels[i]);
    }
    corrupt_tail(dir / "f.bin");
    CHECK_THROWS_AS(read_fusion(dir / "f.bin"), IoError);
}

TEST_CASE("checkpoint files round-trip groups and metadata") {
    const auto dir = scratch_dir("io_ckpt");
    Rng rng(8);
    CheckpointFile ck;
    ck.groups["student"] = {{"a.w", ng::Array(3, 4)}, {"b", ng::Array(1, 2)}};
    ck.groups["ema"] = {{"a.w", ng::Array(3, 4)}};
    for (auto& [_, g] : ck.groups)
        for (auto& [__, arr] : g)
            for (double& v : arr.data) v = rng.normal();
    ck.meta = {{"iteration", 7}, {"note", "x"}};
    save_checkpoint(dir / "ck", ck);
    const CheckpointFile r = load_checkpoint(dir / "ck");
    CHECK(r.groups == ck.groups);
    CHECK(r.meta.at("iteration") == 7);
    CHECK(r.meta.at("note") == "x");

    corrupt_tail(dir / "ck.bin");
    CHECK_THROWS_AS(load_checkpoint(dir / "ck"), IoError);
    write_text(dir / "ck.json", "{\"format\": \"other\"}");
    CHECK_THROWS_AS(load_checkpoint(dir / "ck"), IoError);
}

TEST_CASE("training checkpoint keeps counters and hashes") {
    const auto dir = scratch_dir("io_train_ckpt");
    const RunConfig c = toy_config();
    Checkpoint ck = initial_checkpoint(c);
    ck.iteration = 3;
    ck.omega_empty = 5;
    ck.stage = 2;
    save_training_checkpoint(dir / "t", ck, c);
    CHECK(load_training_checkpoint(dir / "t") == ck);
    CHECK(ck.config_hash == c.hash());
}

TEST_CASE("config rejects unknown keys and bad values") {
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"stage1_iter", 10}}), doctest::Contains("stage1_iter"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"method", "fixmatch"}}), doctest::Contains("fixmatch"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"stage1_iters", "ten"}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"stage1_iters", -4}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"layer_map", {{1, 2, 3}}}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::array()), ConfigError);
    // Layer indices beyond the networks are a validation error.
    CHECK_THROWS_AS(RunConfig::from_json({{"layer_map", {{9, 12}}}}), std::exception);
}

TEST_CASE("config echo round-trips and defaults are filled in") {
    const RunConfig d = RunConfig::from_json(nlohmann::json::object());
    const nlohmann::json j = d.to_json();
    CHECK(j.at("student_blocks") == 4);
    CHECK(j.at("teacher_blocks") == 12);
    CHECK(j.at("method") == "uncol");
    CHECK(RunConfig::from_json(j).to_json() == j);
    CHECK(RunConfig::from_json(j).hash() == d.hash());

    const RunConfig c = toy_config();
    CHECK(RunConfig::from_json(c.to_json()).to_json() == c.to_json());
    CHECK(c.hash() != d.hash());
    RunConfig e = c;
    e.seed += 1;
    CHECK(e.hash() != c.hash());
}

TEST_CASE("config load names the missing or malformed file") {
    const auto dir = scratch_dir("io_config_load");
    CHECK_THROWS_WITH_AS(RunConfig::load((dir / "nope.json").string()), doctest::Contains("nope.json"), ConfigError);
    write_text(dir / "bad.json", "{ not json");
    CHECK_THROWS_WITH_AS(RunConfig::load((dir / "bad.json").string()), doctest::Contains("bad.json"), ConfigError);
    write_text(dir / "ok.json", toy_config().to_json().dump());
    CHECK(RunConfig::load((dir / "ok.json").string()).to_json() == toy_config().to_json());
}
