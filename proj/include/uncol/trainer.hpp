// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training: labeled pretraining with teacher distillation, then
// semi-supervised fine-tuning with fused pseudo-labels and an EMA teacher.

#pragma once

#include "uncol/config.hpp"
#include "uncol/evalkit.hpp"
#include "uncol/nets.hpp"
#include "uncol/objectives.hpp"
#include "uncol/uapl.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

namespace uncol {

// Training state between iterations. Per-iteration randomness is derived from
// (seed, stage, iteration), so this is all that resuming needs.
struct Checkpoint {
    int stage = 1;
    int iteration = 0;  // completed iterations within the stage
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    ng::ParamBundle student;
    ng::ParamBundle ema;
    int omega_empty = 0;

    bool operator==(const Checkpoint&) const = default;
};

Checkpoint initial_checkpoint(const RunConfig& config);
// Stage-2 start: same parameters and EMA state, iteration counter reset.
Checkpoint begin_stage2(const Checkpoint& stage1_end);

void save_training_checkpoint(const std::filesystem::path& stem, const Checkpoint& ck, const RunConfig& config);
Checkpoint load_training_checkpoint(const std::filesystem::path& stem);

struct TraceRow {
    int stage = 1;
    int iteration = 0;
    double loss = 0.0;
    double sup = 0.0;
    double vis = 0.0;
    double sem = 0.0;
    double pseudo = 0.0;
    double alpha = 0.0;      // weight on distillation (stage 1) or L_vis (stage 2)
    double tau = 0.0;
    double omega_frac = 0.0; // mean Omega* coverage of the unlabeled batch
    int omega_empty = 0;     // samples with an empty supervised pseudo region
};

void write_trace_header(std::ostream& os);
void write_trace_row(std::ostream& os, const TraceRow& row);

struct StageHooks {
    std::function<void(const TraceRow&)> on_row;
    // Called every checkpoint_every iterations, at the end, and before an abort.
    std::function<void(const Checkpoint&)> on_checkpoint;
};

// Thrown on a non-finite loss; carries the last consistent state.
class TrainingAborted : public NumericalError {
public:
    TrainingAborted(const std::string& what, Checkpoint last) : NumericalError(what), last_(std::move(last)) {}
    const Checkpoint& last() const noexcept { return last_; }

private:
    Checkpoint last_;
};

struct StageResult {
    Checkpoint checkpoint;
    std::vector<TraceRow> trace;
};

// Labeled-only stage. teacher == nullptr trains without distillation, with the
// adapter self-conditioned (the baselines' first stage). Runs until
// start.iteration == config.stage1_iters, or for max_steps iterations if given.
StageResult run_stage1(const RunConfig& config, const TeacherModel* teacher, std::span<const Scene> labeled,
                       Checkpoint start, const StageHooks& hooks = {}, std::optional<int> max_steps = std::nullopt);

// Semi-supervised stage. The method in config selects the pseudo-label source:
// fused dual-teacher (uncol), EMA-only (mean_teacher), or none (supervised
// continues labeled-only training for stage2_iters).
StageResult run_stage2(const RunConfig& config, const TeacherModel* teacher, std::span<const Scene> labeled,
                       std::span<const UnlabeledScene> unlabeled, Checkpoint start, const StageHooks& hooks = {},
                       std::optional<int> max_steps = std::nullopt);

struct Inference {
    LabelMask mask;
    ProbMap probs;
    UncMap uncertainty;
};

// Prompt-free prediction with the adapter attending to the student's own
// features.
Inference infer(const StudentModel& student, const ImageGrid& image);

struct Evaluation {
    MetricReport metrics;
    CalibReport calibration;
};

Evaluation evaluate_student(const StudentModel& student, std::span<const Scene> scenes);

StudentModel student_of(const RunConfig& config, const Checkpoint& ck);

}  // namespace uncol
