// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/gradsuite.hpp"

#include "uncol/distill.hpp"
#include "uncol/nets.hpp"
#include "uncol/objectives.hpp"
#include "uncol/parallel.hpp"
#include "uncol/rng.hpp"
#include "uncol/uapl.hpp"

#include <algorithm>
#include <vector>

namespace uncol {

using ng::Array;
using ng::Var;

nlohmann::json GradSuiteReport::to_json() const {
    nlohmann::json losses = nlohmann::json::object();
    for (const auto& [name, err] : worst) losses[name] = {{"max_rel_error", err}, {"pass", err <= tolerance}};
    return {{"seeds", seeds},   {"tolerance", tolerance}, {"pass", pass},
            {"losses", losses}, {"moved_off_kinks", moved}, {"unsettled_cases", unsettled}};
}

namespace {

constexpr int kSide = 8;
constexpr int kClasses = 3;

struct ToyCase {
    StudentConfig config;
    ng::ParamBundle params;
    ImageGrid image;
    LabelMask label;
    LabelMask sup_region;
    std::vector<Array> teacher_layers;
    Array z_fuse;
    FusionResult fusion;
    LayerMap map{{{1, 2}, {2, 4}}};
};

ProbMap random_probs(Rng& rng) {
    ProbMap p(kClasses, kSide, kSide);
    for (std::size_t i = 0; i < p.pixels(); ++i) {
        double total = 0.0;
        for (int c = 0; c < kClasses; ++c) total += (p.at(c, i) = std::exp(2.0 * rng.normal()));
        for (int c = 0; c < kClasses; ++c) p.at(c, i) /= total;
    }
    return p;
}

ToyCase make_case(std::uint64_t seed) {
    ToyCase tc;
    tc.config.encoder = EncoderConfig{2, 8, 4, 2};
    tc.config.classes = kClasses;
    tc.config.teacher_dim = 8;
    tc.config.decoder_hidden = 6;
    tc.params = init_student(tc.config, seed);
    Rng rng(derive_seed(seed, 0x70F));
    tc.image = ImageGrid(kSide, kSide);
    for (double& v : tc.image.pixels) v = rng.uniform();
    tc.label = LabelMask(kSide, kSide);
    tc.sup_region = LabelMask(kSide, kSide);
    for (std::size_t i = 0; i < tc.label.size(); ++i) {
        tc.label.labels[i] = static_cast<std::uint8_t>(rng.uniform_int(0, kClasses - 1));
        tc.sup_region.labels[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    const std::size_t N = static_cast<std::size_t>(token_count(kSide, kSide, tc.config.encoder.patch));
    for (int l = 0; l < 4; ++l) {
        Array a(N, 8);
        for (double& v : a.data) v = rng.normal();
        tc.teacher_layers.push_back(std::move(a));
    }
    tc.z_fuse = Array(N, 8);
    for (double& v : tc.z_fuse.data) v = rng.normal();
    const ProbMap pG = random_probs(rng), pS = random_probs(rng);
    tc.fusion = fuse(pG, pS, entropy_map(pG), entropy_map(pS), 0.8);
    // Keep the pseudo region disjoint from the supervised one, as in mixing.
    for (std::size_t i = 0; i < tc.label.size(); ++i)
        if (tc.sup_region.labels[i]) tc.fusion.omega_star.bits[i] = 0;
    return tc;
}

std::uint64_t kink_signature(const ng::ScalarFn& f, const ng::ParamBundle& p) {
    ng::Graph g(false);
    f(g, ng::bind(g, p));
    return g.kink_signature();
}

// The central difference estimates the derivative only where f is smooth on
// [x - h, x + h]. Coordinates whose stencil flips a relu or log clamp are
// moved by 3h, repeating until no stencil does. Returns the number of moves,
// or -1 if some stencil still straddles a kink after the last round.
int settle_kinks(const ng::ScalarFn& f, ng::ParamBundle& params, double step) {
    int moved = 0;
    for (int round = 0; round < 6; ++round) {
        std::uint64_t base = kink_signature(f, params);
        bool clean = true;
        for (auto& [name, arr] : params) {
            for (double& v : arr.data) {
                const double orig = v;
                v = orig + step;
                const std::uint64_t up = kink_signature(f, params);
                v = orig - step;
                const std::uint64_t down = kink_signature(f, params);
                v = orig;
                if (up == base && down == base) continue;
                v = orig + 3.0 * step;
                base = kink_signature(f, params);
                ++moved;
                clean = false;
            }
        }
        if (clean) return moved;
    }
    return -1;
}

}  // namespace

GradSuiteReport run_grad_suite(int seeds, std::uint64_t base_seed, double step, double tol) {
    const std::vector<std::string> names{"sup", "vis", "sem", "pseudo", "stage1", "stage2"};
    std::vector<std::map<std::string, double>> per_seed(static_cast<std::size_t>(seeds));
    std::vector<int> moves(per_seed.size(), 0);
    parallel_for(per_seed.size(), [&](std::size_t s) {
        ToyCase tc = make_case(derive_seed(base_seed, 0x6C, s));
        // Every loss at once, so one settled point serves all of them.
        const ng::ScalarFn all = [&](ng::Graph& g, const ng::Bound& b) -> Var {
            const StudentGraph sg = student_graph(g, b, tc.config, tc.image, &tc.z_fuse);
            Var total = supervised_loss(g, sg.probs, tc.label, kClasses);
            total = g.add(total, supervised_loss(g, sg.probs, tc.label, kClasses, &tc.sup_region));
            total = g.add(total, visual_loss(g, b, sg.layers, tc.teacher_layers, tc.map));
            total = g.add(total, semantic_loss(g, b, sg.layers.back(), tc.z_fuse));
            const Var pseudo = pseudo_loss(g, sg.probs, tc.fusion).loss;
            return pseudo.valid() ? g.add(total, pseudo) : total;
        };
        moves[s] = settle_kinks(all, tc.params, step);
        for (const std::string& name : names) {
            const ng::ScalarFn f = [&](ng::Graph& g, const ng::Bound& b) -> Var {
                const StudentGraph sg = student_graph(g, b, tc.config, tc.image, &tc.z_fuse);
                auto vis = [&] { return visual_loss(g, b, sg.layers, tc.teacher_layers, tc.map); };
                auto sem = [&] { return semantic_loss(g, b, sg.layers.back(), tc.z_fuse); };
                auto pseudo = [&] { return pseudo_loss(g, sg.probs, tc.fusion).loss; };
                if (name == "sup") return supervised_loss(g, sg.probs, tc.label, kClasses);
                if (name == "vis") return vis();
                if (name == "sem") return sem();
                if (name == "pseudo") return pseudo();
                if (name == "stage1") {
                    return stage1_objective(g, supervised_loss(g, sg.probs, tc.label, kClasses), vis(), sem(), 0.37);
                }
                return stage2_objective(g, supervised_loss(g, sg.probs, tc.label, kClasses, &tc.sup_region),
                                        pseudo(), vis(), 0.5, 0.1);
            };
            per_seed[s][name] = ng::grad_check(f, tc.params, step, tol).worst;
        }
    });
    GradSuiteReport r;
    r.seeds = seeds;
    r.tolerance = tol;
    for (int m : moves) {
        if (m < 0) ++r.unsettled;
        else r.moved += m;
    }
    for (const auto& name : names) {
        double w = 0.0;
        for (const auto& m : per_seed) w = std::max(w, m.at(name));
        r.worst[name] = w;
    }
    r.pass = std::all_of(r.worst.begin(), r.worst.end(), [&](const auto& kv) { return kv.second <= tol; });
    return r;
}

}  // namespace uncol
