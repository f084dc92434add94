// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small configurations shared by the training-level tests.

#pragma once

#include "uncol/config.hpp"
#include "uncol/nets.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace uncol::testing {

// 32x32 scenes, two-block student, four-block teacher, a handful of scenes.
inline RunConfig toy_config(Method method = Method::UnCoL) {
    nlohmann::json j = {{"height", 32},          {"width", 32},           {"n_labeled", 4},
                        {"n_unlabeled", 8},      {"n_val", 2},            {"n_test", 3},
                        {"n_teacher", 40},       {"n_teacher_val", 4},    {"student_blocks", 2},
                        {"student_dim", 16},     {"teacher_blocks", 4},   {"teacher_dim", 24},
                        {"decoder_hidden", 8},   {"layer_map", {{1, 2}, {2, 4}}},
                        {"stage1_iters", 12},    {"stage2_iters", 8},     {"checkpoint_every", 4},
                        {"teacher_max_iters", 20}, {"teacher_eval_every", 10}, {"teacher_dice_target", 0.0}};
    j["method"] = method_name(method);
    return RunConfig::from_json(j);
}

// Untrained but fixed teacher matching toy_config.
inline TeacherModel toy_teacher(const RunConfig& c) { return TeacherModel(c.teacher, init_teacher(c.teacher, 99)); }

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("uncol_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace uncol::testing
