// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dual-path feature distillation: mapped intermediate layers through psi, and
// the student's last layer through psi' against the fused prompt features.

#pragma once

#include "uncol/numgrad.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace uncol {

// 1-based (student layer, teacher layer) pairs.
struct LayerMap {
    std::vector<std::pair<int, int>> pairs{{1, 4}, {2, 8}, {3, 12}};

    std::size_t size() const noexcept { return pairs.size(); }
    // Throws std::invalid_argument unless both index sequences are strictly
    // increasing and within [1, student_layers] / [1, teacher_layers].
    void validate(int student_layers, int teacher_layers) const;
};

// Mean over pairs of the per-entry mean squared error between psi(h^S_k) and
// the constant teacher feature. teacher_feats holds all teacher block outputs.
ng::Var visual_loss(ng::Graph& g, const ng::Bound& params, std::span<const ng::Var> student_feats,
                    std::span<const ng::Array> teacher_feats, const LayerMap& map,
                    const std::string& psi = "psi");

// Per-entry mean squared error between psi'(h_last) and the constant z_fuse.
ng::Var semantic_loss(ng::Graph& g, const ng::Bound& params, ng::Var h_last, const ng::Array& z_fuse,
                      const std::string& psi_sem = "psi_sem");

ng::Var distill_loss(ng::Graph& g, ng::Var vis, ng::Var sem);
inline double distill_loss(double vis, double sem) { return vis + sem; }

}  // namespace uncol
