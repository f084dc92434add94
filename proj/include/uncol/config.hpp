// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat JSON run configuration. Every key is optional; unset keys take the
// defaults below and unknown keys are rejected.

#pragma once

#include "uncol/distill.hpp"
#include "uncol/nets.hpp"
#include "uncol/synthdata.hpp"

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace uncol {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Method { UnCoL, Supervised, MeanTeacher };

std::string method_name(Method m);
Method parse_method(const std::string& s);

struct RunConfig {
    std::uint64_t seed = 0;
    Method method = Method::UnCoL;

    // Data.
    int classes = 5;
    int height = 64;
    int width = 64;
    int n_labeled = 10;
    int n_unlabeled = 90;
    int n_val = 10;
    int n_test = 20;
    int n_teacher = 400;
    int n_teacher_val = 40;
    std::uint64_t teacher_seed = 1000;
    DomainParams task_domain = default_task_domain();
    DomainParams teacher_domain = default_teacher_domain();

    // Optimisation.
    int stage1_iters = 1500;
    int stage2_iters = 1500;
    int stage1_batch = 4;
    int stage2_labeled_batch = 2;
    int stage2_unlabeled_batch = 2;
    double lr = 0.01;
    double weight_decay = 1e-4;
    double ema_momentum = 0.99;

    // Objectives.
    double lambda_vis = 0.1;
    double lambda_pseudo = 0.5;
    double tau_base = 0.75;
    double tau_span = 0.25;
    bool stage2_vis_scheduled = true;
    bool tau_restart = true;
    LayerMap layer_map;

    // Mixing and prompts.
    double mix_ratio = 0.6;
    int mix_grid = 4;
    double jitter_frac = 20.0 / 256.0;

    // Networks.
    StudentConfig student;
    TeacherConfig teacher;

    // Teacher surrogate.
    int teacher_max_iters = 2000;
    int teacher_batch = 4;
    double teacher_lr = 2e-3;
    double teacher_dice_target = 0.85;
    int teacher_eval_every = 100;
    std::uint64_t teacher_init_seed = 7;
    std::string teacher_checkpoint;  // empty: train the surrogate in the run

    int checkpoint_every = 500;

    static DomainParams default_task_domain();
    static DomainParams default_teacher_domain();

    // Throws ConfigError on unknown keys, wrong types or invalid values.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
    nlohmann::json to_json() const;
    void validate() const;
    // FNV-1a of the canonical JSON dump.
    std::uint64_t hash() const;

    CorpusSpec corpus_spec() const;
    TeacherTrainSpec teacher_train_spec() const;
};

}  // namespace uncol
