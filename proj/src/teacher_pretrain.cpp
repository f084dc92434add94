// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/evalkit.hpp"
#include "uncol/nets.hpp"
#include "uncol/objectives.hpp"
#include "uncol/parallel.hpp"
#include "uncol/rng.hpp"

#include <cmath>
#include <string>

namespace uncol {

namespace {

using ng::Array;
using ng::ParamBundle;

// Adam state for the surrogate only; the student uses plain SGD.
struct Adam {
    ParamBundle m, v;
    int t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void step(ParamBundle& params, const ParamBundle& grads, double lr, double wd) {
        if (m.empty()) {
            for (const auto& [name, a] : params) {
                m[name] = Array(a.shape, std::vector<double>(a.size(), 0.0));
                v[name] = m[name];
            }
        }
        ++t;
        const double c1 = 1.0 - std::pow(beta1, t), c2 = 1.0 - std::pow(beta2, t);
        for (auto& [name, p] : params) {
            const Array& g = grads.at(name);
            Array& mm = m[name];
            Array& vv = v[name];
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = g.data[i] + wd * p.data[i];
                if (!std::isfinite(gi)) throw NumericalError("teacher pretraining: non-finite gradient in " + name);
                mm.data[i] = beta1 * mm.data[i] + (1.0 - beta1) * gi;
                vv.data[i] = beta2 * vv.data[i] + (1.0 - beta2) * gi * gi;
                p.data[i] -= lr * (mm.data[i] / c1) / (std::sqrt(vv.data[i] / c2) + eps);
            }
        }
    }
};

double sample_dice(const LabelMask& pred, const LabelMask& gt, int classes) {
    const OverlapScores s = overlap_metrics(pred, gt, classes);
    double total = 0.0;
    int n = 0;
    for (int c = 1; c < classes; ++c) {
        bool present = false;
        for (std::size_t i = 0; i < gt.size() && !present; ++i) present = gt.labels[i] == c || pred.labels[i] == c;
        if (!present) continue;
        total += s.dsc[static_cast<std::size_t>(c - 1)] / 100.0;
        ++n;
    }
    return n ? total / n : 1.0;
}

}  // namespace

double teacher_dice(const TeacherModel& teacher, std::span<const Scene> scenes, double jitter_frac,
                    std::uint64_t seed) {
    std::vector<double> dice(scenes.size());
    const int C = teacher.config().classes;
    parallel_for(scenes.size(), [&](std::size_t i) {
        const Scene& s = scenes[i];
        const auto prompts = prompts_for_mask(s.label, C, jitter_frac, derive_seed(seed, 0xD1CE, i));
        const TeacherOutputs out = teacher.forward(s.image, prompts);
        dice[i] = sample_dice(argmax_labels(out.probs), s.label, C);
    });
    double total = 0.0;
    for (double d : dice) total += d;
    return scenes.empty() ? 0.0 : total / static_cast<double>(scenes.size());
}

TeacherTrainResult pretrain_teacher_surrogate(std::span<const Scene> train_scenes, std::span<const Scene> val_scenes,
                                              const TeacherConfig& config, const TeacherTrainSpec& spec) {
    if (train_scenes.empty() || val_scenes.empty()) {
        throw std::invalid_argument("pretrain_teacher_surrogate: empty train or validation corpus");
    }
    ParamBundle params = init_teacher(config, spec.seed);
    Adam opt;
    std::vector<double> trace;
    const int C = config.classes;
    const std::size_t B = static_cast<std::size_t>(spec.batch);
    double best = 0.0;
    for (int it = 0; it < spec.max_iters; ++it) {
        Rng rng(derive_seed(spec.seed, 0xBA7C, static_cast<std::uint64_t>(it)));
        std::vector<std::size_t> pick(B);
        for (auto& k : pick) k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(train_scenes.size()) - 1));
        std::vector<ParamBundle> grads(B);
        std::vector<double> losses(B);
        parallel_for(B, [&](std::size_t j) {
            const Scene& s = train_scenes[pick[j]];
            const auto prompts = prompts_for_mask(
                s.label, C, spec.jitter_frac, derive_seed(spec.seed, 0x960B, static_cast<std::uint64_t>(it) * B + j));
            ng::Graph g;
            const ng::Bound b = ng::bind(g, params);
            const TeacherGraph tg = teacher_graph(g, b, config, s.image, prompts);
            const ng::Var loss = supervised_loss(g, tg.probs, s.label, C);
            g.backward(loss);
            losses[j] = g.scalar(loss);
            grads[j] = ng::collect_grads(g, b);
        });
        ParamBundle mean = grads[0];
        double loss = losses[0];
        for (std::size_t j = 1; j < B; ++j) {
            loss += losses[j];
            for (auto& [name, a] : mean)
                for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += grads[j].at(name).data[i];
        }
        for (auto& [name, a] : mean)
            for (double& x : a.data) x /= static_cast<double>(B);
        loss /= static_cast<double>(B);
        if (!std::isfinite(loss)) throw NumericalError("teacher pretraining: non-finite loss at iteration " + std::to_string(it));
        trace.push_back(loss);
        opt.step(params, mean, spec.lr, spec.weight_decay);

        if ((it + 1) % spec.eval_every == 0 || it + 1 == spec.max_iters) {
            TeacherModel candidate(config, params);
            const double dice = teacher_dice(candidate, val_scenes, spec.jitter_frac, spec.seed);
            best = std::max(best, dice);
            if (dice >= spec.dice_target) {
                return TeacherTrainResult{std::move(candidate), dice, it + 1, std::move(trace)};
            }
        }
    }
    throw TeacherTrainingError("teacher surrogate reached validation Dice " + std::to_string(best) + " < target " +
                               std::to_string(spec.dice_target) + " within " + std::to_string(spec.max_iters) +
                               " iterations; raise max_iters or the learning rate, or soften the teacher corpus");
}

}  // namespace uncol
