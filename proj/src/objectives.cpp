// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/objectives.hpp"

#include <cmath>
#include <string>

namespace uncol {

using ng::Array;
using ng::Graph;
using ng::Var;

namespace {

void check_time(double t, double t_max) {
    if (!(t_max > 0.0)) throw std::invalid_argument("schedule: t_max must be positive");
    if (!(t >= 0.0 && t <= t_max)) {
        throw std::invalid_argument("schedule: t=" + std::to_string(t) + " outside [0, " + std::to_string(t_max) + "]");
    }
}

}  // namespace

double gamma_rampup(double t, double t_max) {
    check_time(t, t_max);
    const double r = 1.0 - t / t_max;
    return std::exp(-5.0 * r * r);
}

double alpha_weight(double t, double t_max, double lambda_vis) { return lambda_vis * gamma_rampup(t, t_max); }

double tau_threshold(double t, double t_max, double tau_base, double tau_span) {
    return tau_base + tau_span * gamma_rampup(t, t_max);
}

Var segmentation_loss(Graph& g, Var probs, std::span<const std::uint8_t> labels, std::span<const std::uint8_t> region,
                      int classes) {
    const Array& p = g.value(probs);
    const std::size_t n = p.rows();
    const std::size_t C = static_cast<std::size_t>(classes);
    if (p.cols() != C || labels.size() != n || region.size() != n) {
        throw ng::ShapeError(ng::OpKind::Mul, "probs " + p.shape_str() + " labels " + std::to_string(labels.size()) +
                                                  " region " + std::to_string(region.size()));
    }
    Array onehot(n, C);
    Array mask(n, 1);
    Array ysum(1, C);
    double count = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= C) {
            throw std::invalid_argument("segmentation_loss: class index " + std::to_string(labels[i]) +
                                        " >= " + std::to_string(C));
        }
        if (!region[i]) continue;
        onehot(i, labels[i]) = 1.0;
        mask.data[i] = 1.0;
        ysum.data[labels[i]] += 1.0;
        count += 1.0;
    }
    if (count == 0.0) return Var{};

    const Var y = g.constant(std::move(onehot));
    const Var ce = g.scale(g.sum(g.mul(g.log(probs), y)), -1.0 / count);

    const Var eps = g.constant(Array::scalar(kDiceSmooth));
    const Var inter = g.sum(g.mul(probs, y), 0);
    const Var psum = g.sum(g.mul(probs, g.constant(std::move(mask))), 0);
    const Var num = g.add(g.scale(inter, 2.0), eps);
    const Var den = g.add(g.add(psum, g.constant(std::move(ysum))), eps);
    const Var ratio = g.exp(g.sub(g.log(num), g.log(den)));
    const Var dice = g.sub(g.constant(Array::scalar(1.0)), g.mean(ratio));
    return g.add(ce, dice);
}

Var supervised_loss(Graph& g, Var probs, const LabelMask& label, int classes, const LabelMask* region) {
    std::vector<std::uint8_t> all;
    std::span<const std::uint8_t> reg;
    if (region) {
        if (region->size() != label.size()) throw std::invalid_argument("supervised_loss: region size mismatch");
        reg = region->labels;
    } else {
        all.assign(label.size(), 1);
        reg = all;
    }
    return segmentation_loss(g, probs, label.labels, reg, classes);
}

Var stage1_objective(Graph& g, Var sup, Var vis, Var sem, double alpha) {
    return g.add(sup, g.scale(g.add(vis, sem), alpha));
}

double stage1_objective(double sup, double vis, double sem, double alpha) { return sup + alpha * (vis + sem); }

Var stage2_objective(Graph& g, Var sup, Var pseudo, Var vis, double lambda_pseudo, double lambda_vis) {
    Var total = sup;
    auto add_term = [&](Var term, double w) {
        if (!term.valid()) return;
        const Var scaled = g.scale(term, w);
        total = total.valid() ? g.add(total, scaled) : scaled;
    };
    add_term(pseudo, lambda_pseudo);
    add_term(vis, lambda_vis);
    if (!total.valid()) total = g.constant(Array::scalar(0.0));
    return total;
}

double stage2_objective(double sup, double pseudo, double vis, double lambda_pseudo, double lambda_vis) {
    return sup + lambda_pseudo * pseudo + lambda_vis * vis;
}

void sgd_step(ng::ParamBundle& params, const ng::ParamBundle& grads, double lr, double weight_decay) {
    if (!ng::congruent(params, grads)) throw std::invalid_argument("sgd_step: gradient bundle is not congruent");
    for (const auto& [name, g] : grads) {
        if (!g.all_finite()) throw NumericalError("sgd_step: non-finite gradient for " + name);
    }
    auto it = grads.begin();
    for (auto& [name, theta] : params) {
        const Array& g = (it++)->second;
        for (std::size_t i = 0; i < theta.size(); ++i)
            theta.data[i] -= lr * (g.data[i] + weight_decay * theta.data[i]);
    }
}

}  // namespace uncol
