// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/distill.hpp"

#include "uncol/nets.hpp"

#include <stdexcept>

namespace uncol {

using ng::Var;

void LayerMap::validate(int student_layers, int teacher_layers) const {
    if (pairs.empty()) throw std::invalid_argument("LayerMap: no layer pairs");
    int last_s = 0, last_t = 0;
    for (const auto& [s, t] : pairs) {
        if (s <= last_s || s > student_layers || t <= last_t || t > teacher_layers) {
            throw std::invalid_argument("LayerMap: pair (" + std::to_string(s) + "," + std::to_string(t) +
                                        ") breaks ordering or bounds " + std::to_string(student_layers) + "/" +
                                        std::to_string(teacher_layers));
        }
        last_s = s;
        last_t = t;
    }
}

namespace {

void check_tokens(const ng::Array& student, const ng::Array& teacher, const char* what) {
    if (student.rows() != teacher.rows()) {
        throw ng::ShapeError(ng::OpKind::Mse, std::string(what) + ": token count " + std::to_string(student.rows()) +
                                                  " vs " + std::to_string(teacher.rows()));
    }
}

}  // namespace

Var visual_loss(ng::Graph& g, const ng::Bound& params, std::span<const Var> student_feats,
                std::span<const ng::Array> teacher_feats, const LayerMap& map, const std::string& psi) {
    if (map.pairs.empty()) throw std::invalid_argument("visual_loss: empty layer map");
    Var total;
    for (const auto& [s, t] : map.pairs) {
        if (s < 1 || s > static_cast<int>(student_feats.size()) || t < 1 || t > static_cast<int>(teacher_feats.size())) {
            throw std::invalid_argument("visual_loss: layer pair (" + std::to_string(s) + "," + std::to_string(t) +
                                        ") out of range");
        }
        const Var hs = student_feats[static_cast<std::size_t>(s - 1)];
        const ng::Array& ht = teacher_feats[static_cast<std::size_t>(t - 1)];
        check_tokens(g.value(hs), ht, "visual_loss");
        const Var term = g.mse(project(g, params, psi, hs), g.constant_ref(ht));
        total = total.valid() ? g.add(total, term) : term;
    }
    return g.scale(total, 1.0 / static_cast<double>(map.pairs.size()));
}

Var semantic_loss(ng::Graph& g, const ng::Bound& params, Var h_last, const ng::Array& z_fuse,
                  const std::string& psi_sem) {
    check_tokens(g.value(h_last), z_fuse, "semantic_loss");
    return g.mse(project(g, params, psi_sem, h_last), g.constant_ref(z_fuse));
}

Var distill_loss(ng::Graph& g, Var vis, Var sem) { return g.add(vis, sem); }

}  // namespace uncol
