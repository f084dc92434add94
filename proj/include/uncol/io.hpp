// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary containers: scenes ("UNCL" + JSON sidecar), fusion results and
// parameter checkpoints (flat little-endian f64 blob + JSON manifest).

#pragma once

#include "uncol/numgrad.hpp"
#include "uncol/synthdata.hpp"
#include "uncol/uapl.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace uncol {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kSceneFormatVersion = 1;

nlohmann::json domain_to_json(const DomainParams& p);
DomainParams domain_from_json(const nlohmann::json& j);

// Writes path (binary) and path + ".json" (domain params, seed).
void write_scene(const std::filesystem::path& path, const Scene& scene);
Scene read_scene(const std::filesystem::path& path);

// Header "UNCF", version, H, W, C; p_tilde f64, y_tilde u8 (255 outside
// omega_star), weights f64.
void write_fusion(const std::filesystem::path& path, const FusionResult& fusion);
FusionResult read_fusion(const std::filesystem::path& path);

// Named groups of arrays ("student", "ema", "teacher") plus free-form
// metadata. Arrays are stored in group then name order.
struct CheckpointFile {
    std::map<std::string, ng::ParamBundle> groups;
    nlohmann::json meta = nlohmann::json::object();
};

// Writes <stem>.bin and <stem>.json.
void save_checkpoint(const std::filesystem::path& stem, const CheckpointFile& ck);
CheckpointFile load_checkpoint(const std::filesystem::path& stem);

// Whole-file helpers.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace uncol
