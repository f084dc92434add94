// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference check of every training loss and both stage objectives
// on a small randomly initialised student.

#pragma once

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>

namespace uncol {

struct GradSuiteReport {
    // Loss name -> worst relative error over all seeds and parameters.
    std::map<std::string, double> worst;
    int seeds = 0;
    double tolerance = 0.0;
    bool pass = false;
    // Coordinates shifted so that no finite-difference stencil crosses a
    // relu or log-clamp kink, and cases where that did not converge.
    int moved = 0;
    int unsettled = 0;

    nlohmann::json to_json() const;
};

// Losses: sup, vis, sem, pseudo, stage1, stage2. 8x8 images, 3 classes.
// Each case is first moved off piecewise kinks (see moved), then checked
// with plain central differences.
GradSuiteReport run_grad_suite(int seeds, std::uint64_t base_seed = 0, double step = 1e-4, double tol = 1e-4);

}  // namespace uncol
