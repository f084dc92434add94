// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Uncertainty-aware pseudo-labels from two teachers: normalized entropy maps,
// threshold masks, uncertainty-weighted fusion and the masked hybrid loss.

#pragma once

#include "uncol/nets.hpp"
#include "uncol/numgrad.hpp"
#include "uncol/synthdata.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace uncol {

// Entropy / log C per pixel, in [0, 1].
struct UncMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;
};

struct ConfMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> bits;

    std::size_t count() const noexcept;
};

struct FusionResult {
    ProbMap p_tilde;
    LabelMask y_tilde;
    ConfMask omega_star;
    // Generalized-teacher weight per pixel: the exponential weight where both
    // teachers are confident, 1 or 0 where only one is, 0 when excluded.
    std::vector<double> weights;
};

// Rows must be on the simplex within 1e-9.
UncMap entropy_map(const ProbMap& p);
double normalized_entropy(std::span<const double> row);

ConfMask confidence_mask(const UncMap& u, double tau);

FusionResult fuse(const ProbMap& pG, const ProbMap& pS, const UncMap& uG, const UncMap& uS, double tau);

// Single-teacher variant: the teacher's own prediction on its confident set.
FusionResult single_teacher_pseudo(const ProbMap& p, const UncMap& u, double tau);

struct PseudoLoss {
    ng::Var loss;     // invalid when the supervised region is empty
    bool empty = false;
};

// CE + soft Dice against y_tilde restricted to omega_star.
PseudoLoss pseudo_loss(ng::Graph& g, ng::Var student_probs, const FusionResult& fusion);

}  // namespace uncol
