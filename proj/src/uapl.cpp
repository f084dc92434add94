// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/uapl.hpp"

#include "uncol/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uncol {

std::size_t ConfMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

double normalized_entropy(std::span<const double> row) {
    const std::size_t C = row.size();
    if (C < 2) throw std::invalid_argument("entropy_map: need at least 2 classes");
    double total = 0.0, h = 0.0;
    for (double p : row) {
        if (p < -1e-9) throw std::invalid_argument("entropy_map: negative probability");
        total += p;
        if (p > 0.0) h -= p * std::log(p);
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("entropy_map: row is off the simplex");
    return std::clamp(h / std::log(static_cast<double>(C)), 0.0, 1.0);
}

UncMap entropy_map(const ProbMap& p) {
    UncMap u{p.height, p.width, std::vector<double>(p.pixels())};
    for (std::size_t i = 0; i < p.pixels(); ++i) u.values[i] = normalized_entropy(p.row(i));
    return u;
}

ConfMask confidence_mask(const UncMap& u, double tau) {
    ConfMask m{u.height, u.width, std::vector<std::uint8_t>(u.values.size())};
    for (std::size_t i = 0; i < u.values.size(); ++i) m.bits[i] = u.values[i] <= tau ? 1 : 0;
    return m;
}

namespace {

std::uint8_t argmax_row(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
        if (row[c] > row[best]) best = c;
    return static_cast<std::uint8_t>(best);
}

FusionResult blank(const ProbMap& like) {
    FusionResult r;
    r.p_tilde = ProbMap(like.classes, like.height, like.width);
    r.y_tilde = LabelMask(like.height, like.width, 0);
    r.omega_star = ConfMask{like.height, like.width, std::vector<std::uint8_t>(like.pixels(), 0)};
    r.weights.assign(like.pixels(), 0.0);
    return r;
}

}  // namespace

FusionResult fuse(const ProbMap& pG, const ProbMap& pS, const UncMap& uG, const UncMap& uS, double tau) {
    const std::size_t n = pG.pixels();
    if (pG.classes != pS.classes || pG.height != pS.height || pG.width != pS.width || uG.values.size() != n ||
        uS.values.size() != n) {
        throw std::invalid_argument("fuse: probability and uncertainty maps differ in shape");
    }
    const ConfMask mG = confidence_mask(uG, tau);
    const ConfMask mS = confidence_mask(uS, tau);
    FusionResult r = blank(pG);
    const std::size_t C = static_cast<std::size_t>(pG.classes);
    for (std::size_t i = 0; i < n; ++i) {
        const bool g = mG.bits[i] != 0, s = mS.bits[i] != 0;
        if (!g && !s) continue;
        double wg = g ? 1.0 : 0.0;
        if (g && s) {
            const double eg = std::exp(-uG.values[i]);
            const double es = std::exp(-uS.values[i]);
            wg = eg / (eg + es);
        }
        for (std::size_t c = 0; c < C; ++c) {
            double v;
            if (g && s) v = wg * pG.data[i * C + c] + (1.0 - wg) * pS.data[i * C + c];
            else if (g) v = pG.data[i * C + c];
            else v = pS.data[i * C + c];
            r.p_tilde.data[i * C + c] = v;
        }
        r.weights[i] = wg;
        r.omega_star.bits[i] = 1;
        r.y_tilde.labels[i] = argmax_row(r.p_tilde.row(i));
    }
    return r;
}

FusionResult single_teacher_pseudo(const ProbMap& p, const UncMap& u, double tau) {
    if (u.values.size() != p.pixels()) throw std::invalid_argument("single_teacher_pseudo: shape mismatch");
    const ConfMask m = confidence_mask(u, tau);
    FusionResult r = blank(p);
    const std::size_t C = static_cast<std::size_t>(p.classes);
    for (std::size_t i = 0; i < p.pixels(); ++i) {
        if (!m.bits[i]) continue;
        std::copy_n(p.data.begin() + static_cast<std::ptrdiff_t>(i * C), C,
                    r.p_tilde.data.begin() + static_cast<std::ptrdiff_t>(i * C));
        r.omega_star.bits[i] = 1;
        r.y_tilde.labels[i] = argmax_row(p.row(i));
    }
    return r;
}

PseudoLoss pseudo_loss(ng::Graph& g, ng::Var student_probs, const FusionResult& fusion) {
    PseudoLoss out;
    out.loss = segmentation_loss(g, student_probs, fusion.y_tilde.labels, fusion.omega_star.bits,
                                 fusion.p_tilde.classes);
    out.empty = !out.loss.valid();
    return out;
}

}  // namespace uncol
