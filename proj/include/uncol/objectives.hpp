// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Segmentation losses, ramp-up schedules, stage objectives and plain SGD.

#pragma once

#include "uncol/numgrad.hpp"
#include "uncol/synthdata.hpp"

#include <span>
#include <stdexcept>

namespace uncol {

inline constexpr double kDiceSmooth = 1e-5;

// Gaussian ramp-up exp(-5 (1 - t / t_max)^2).
double gamma_rampup(double t, double t_max);
double alpha_weight(double t, double t_max, double lambda_vis);
double tau_threshold(double t, double t_max, double tau_base = 0.75, double tau_span = 0.25);

struct Schedule {
    double t_max = 1500;
    double lambda_vis = 0.1;
    double lambda_pseudo = 0.5;
    double tau_base = 0.75;
    double tau_span = 0.25;

    double gamma(double t) const { return gamma_rampup(t, t_max); }
    double alpha(double t) const { return alpha_weight(t, t_max, lambda_vis); }
    double tau(double t) const { return tau_threshold(t, t_max, tau_base, tau_span); }
};

// Mean CE over the region plus soft Dice (averaged over all classes) restricted
// to the region. probs is (H*W) x C; region entries are 0/1 per pixel.
// Returns nullopt-equivalent invalid Var when the region is empty.
ng::Var segmentation_loss(ng::Graph& g, ng::Var probs, std::span<const std::uint8_t> labels,
                          std::span<const std::uint8_t> region, int classes);

// CE + Dice over all pixels (or a sub-region for mixed inputs).
ng::Var supervised_loss(ng::Graph& g, ng::Var probs, const LabelMask& label, int classes,
                        const LabelMask* region = nullptr);

// L_pre = L_sup + alpha (L_vis + L_sem)
ng::Var stage1_objective(ng::Graph& g, ng::Var sup, ng::Var vis, ng::Var sem, double alpha);
double stage1_objective(double sup, double vis, double sem, double alpha);

// L_fine = L_sup + lambda_pseudo L_pseudo + lambda_vis L_vis; any of pseudo/vis
// may be an invalid Var (absent term).
ng::Var stage2_objective(ng::Graph& g, ng::Var sup, ng::Var pseudo, ng::Var vis, double lambda_pseudo,
                         double lambda_vis);
double stage2_objective(double sup, double pseudo, double vis, double lambda_pseudo, double lambda_vis);

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// theta <- theta - lr (g + wd theta). Throws NumericalError on a non-finite
// gradient, naming the parameter.
void sgd_step(ng::ParamBundle& params, const ng::ParamBundle& grads, double lr, double weight_decay);

}  // namespace uncol
