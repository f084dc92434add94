// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run-directory orchestration shared by the command-line tool and the
// benchmark harness.
//
// <out>/teacher/   teacher.{bin,json}, summary.json
// <out>/stage1/    config.json, resolved-config.json, trace.csv,
//                  checkpoints/, summary.json
// <out>/stage2/    same layout as stage1
// <out>/eval/      metrics.json, metrics.csv, reliability.csv, risk_coverage.csv
// <out>/report/    plot-data CSVs

#pragma once

#include "uncol/config.hpp"
#include "uncol/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace uncol {

void save_teacher(const std::filesystem::path& stem, const TeacherModel& teacher, const nlohmann::json& meta);
TeacherModel load_teacher(const std::filesystem::path& stem);

struct TeacherBuild {
    TeacherModel model;
    nlohmann::json summary;
};

// Trains the surrogate on the shifted teacher corpus and reports its Dice on
// held-out teacher scenes and on the task validation split.
TeacherBuild build_teacher(const RunConfig& config);

// Loads config.teacher_checkpoint, or <out>/teacher/teacher if that exists,
// or trains and saves a new surrogate there.
TeacherModel obtain_teacher(const RunConfig& config, const std::optional<std::filesystem::path>& out);

nlohmann::json evaluation_json(const Evaluation& e);

// Runs one stage into dir (created), writing the files listed above, and
// returns the final checkpoint. The starting checkpoint is resumed if it is
// part way through the stage; trace rows already written are kept.
Checkpoint run_stage_dir(const RunConfig& config, int stage, const TeacherModel* teacher, const Corpus& corpus,
                         Checkpoint start, const std::filesystem::path& dir);

// Path stem of a stage's final checkpoint.
std::filesystem::path final_checkpoint(const std::filesystem::path& stage_dir);

// Test-set evaluation of a checkpoint into dir.
nlohmann::json run_eval_dir(const RunConfig& config, const Checkpoint& ck, const Corpus& corpus,
                            const std::filesystem::path& dir);

// Emits plot-data CSVs under <run>/report. Throws IoError if the run is
// incomplete.
nlohmann::json write_report(const std::filesystem::path& run_dir);

}  // namespace uncol
