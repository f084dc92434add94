// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frozen prompt-conditioned teacher surrogate, prompt-free student with a
// cross-attention knowledge adapter, width projections and the EMA teacher.

#pragma once

#include "uncol/numgrad.hpp"
#include "uncol/synthdata.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace uncol {

// C x H x W class probabilities, stored pixel-major: data[(y * W + x) * C + c].
struct ProbMap {
    int classes = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    ProbMap() = default;
    ProbMap(int c, int h, int w)
        : classes(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    std::size_t pixels() const noexcept { return static_cast<std::size_t>(height) * width; }
    double at(int c, std::size_t pixel) const { return data[pixel * classes + c]; }
    double& at(int c, std::size_t pixel) { return data[pixel * classes + c]; }
    std::span<const double> row(std::size_t pixel) const {
        return {data.data() + pixel * classes, static_cast<std::size_t>(classes)};
    }
    // (H*W) x C view for graph constants.
    ng::Array as_array() const;
    static ProbMap from_array(const ng::Array& a, int height, int width);
    bool operator==(const ProbMap&) const = default;
};

// Argmax per pixel, ties to the lowest class index.
LabelMask argmax_labels(const ProbMap& p);

struct EncoderConfig {
    int n_blocks = 4;
    int dim = 32;
    int patch = 8;
    int ffn_mult = 2;
};

struct StudentConfig {
    EncoderConfig encoder{4, 32, 8, 2};
    int classes = 5;
    // Width of the teacher features the adapter and projections target.
    int teacher_dim = 64;
    int decoder_hidden = 16;
};

struct TeacherConfig {
    EncoderConfig encoder{12, 64, 8, 1};
    int classes = 5;
    int decoder_hidden = 16;
};

int token_count(int height, int width, int patch);

ng::ParamBundle init_student(const StudentConfig& config, std::uint64_t seed);
ng::ParamBundle init_teacher(const TeacherConfig& config, std::uint64_t seed);

// FNV-1a over names, shapes and the raw bytes of every array.
std::uint64_t param_hash(const ng::ParamBundle& params);

// Graph-level forward passes. -------------------------------------------

struct StudentGraph {
    std::vector<ng::Var> layers;  // block outputs h_1 .. h_L
    ng::Var kv_self;              // psi'(h_L), detached; self-conditioning input
    ng::Var adapter_attention;    // cross-attention output before the residual
    ng::Var fused;                // h_L + adapter attention
    ng::Var logits;
    ng::Var probs;                // (H*W) x C
};

// kv == nullptr conditions the adapter on the student's own psi'(h_L).
StudentGraph student_graph(ng::Graph& g, const ng::Bound& p, const StudentConfig& config, const ImageGrid& image,
                           const ng::Array* kv);

// Width projection psi / psi' (two-layer FFN) under the given name prefix.
ng::Var project(ng::Graph& g, const ng::Bound& p, const std::string& prefix, ng::Var x);

inline const std::string kPsiVisual = "psi";
inline const std::string kPsiSemantic = "psi_sem";

struct TeacherGraph {
    std::vector<ng::Var> layers;  // h^T_1 .. h^T_{L_T}
    ng::Var z_fuse;
    ng::Var probs;
};

TeacherGraph teacher_graph(ng::Graph& g, const ng::Bound& p, const TeacherConfig& config, const ImageGrid& image,
                           std::span<const BoxPrompt> prompts);
std::vector<ng::Var> teacher_encoder_graph(ng::Graph& g, const ng::Bound& p, const TeacherConfig& config,
                                           const ImageGrid& image);

// Value-level models. ----------------------------------------------------

struct TeacherOutputs {
    std::vector<ng::Array> layers;
    ng::Array z_fuse;
    ProbMap probs;
};

class TeacherModel {
public:
    TeacherModel(TeacherConfig config, ng::ParamBundle params);

    const TeacherConfig& config() const noexcept { return config_; }
    const ng::ParamBundle& params() const noexcept { return params_; }
    std::uint64_t hash() const { return param_hash(params_); }

    // Validates prompts; throws std::invalid_argument on an invalid box.
    TeacherOutputs forward(const ImageGrid& image, std::span<const BoxPrompt> prompts) const;
    // Block outputs only; these do not depend on the prompt.
    std::vector<ng::Array> encode(const ImageGrid& image) const;

private:
    TeacherConfig config_;
    ng::ParamBundle params_;
};

struct StudentOutputs {
    std::vector<ng::Array> layers;
    ng::Array kv_self;
    ng::Array fused;
    ProbMap probs;
};

struct StudentModel {
    StudentConfig config;
    ng::ParamBundle params;

    StudentOutputs forward(const ImageGrid& image, const ng::Array* kv) const;
    // Prompt-free path: the adapter attends to the student's own features.
    StudentOutputs forward(const ImageGrid& image) const { return forward(image, nullptr); }
};

struct EmaTeacher {
    ng::ParamBundle params;
    double momentum = 0.99;
};

// theta_s <- mu * theta_s + (1 - mu) * theta for every scalar.
void ema_update(ng::ParamBundle& ema, const ng::ParamBundle& student, double momentum);

void validate_prompts(std::span<const BoxPrompt> prompts, int classes, int height, int width);

// Teacher surrogate pretraining. -----------------------------------------

struct TeacherTrainSpec {
    int max_iters = 2000;
    int batch = 4;
    double lr = 2e-3;  // Adam step size
    double weight_decay = 1e-4;
    double jitter_frac = 20.0 / 256.0;
    double dice_target = 0.85;
    int eval_every = 100;
    std::uint64_t seed = 7;
};

struct TeacherTrainResult {
    TeacherModel model;
    double val_dice = 0.0;  // mean foreground Dice in [0, 1]
    int iterations = 0;
    std::vector<double> loss_trace;
};

class TeacherTrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Trains on train_scenes with jittered ground-truth box prompts and CE+Dice
// until the mean foreground Dice on val_scenes reaches the target.
TeacherTrainResult pretrain_teacher_surrogate(std::span<const Scene> train_scenes, std::span<const Scene> val_scenes,
                                              const TeacherConfig& config, const TeacherTrainSpec& spec);

// Mean foreground Dice (fraction) of the teacher under jittered GT boxes.
double teacher_dice(const TeacherModel& teacher, std::span<const Scene> scenes, double jitter_frac,
                    std::uint64_t seed);

}  // namespace uncol
