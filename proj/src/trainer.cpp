// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/trainer.hpp"

#include "uncol/distill.hpp"
#include "uncol/io.hpp"
#include "uncol/objectives.hpp"
#include "uncol/parallel.hpp"
#include "uncol/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

namespace uncol {

using ng::Array;
using ng::ParamBundle;
using nlohmann::json;

Checkpoint initial_checkpoint(const RunConfig& config) {
    Checkpoint ck;
    ck.stage = 1;
    ck.seed = config.seed;
    ck.config_hash = config.hash();
    ck.student = init_student(config.student, derive_seed(config.seed, 0x5EED));
    ck.ema = ck.student;
    return ck;
}

Checkpoint begin_stage2(const Checkpoint& stage1_end) {
    Checkpoint ck = stage1_end;
    ck.stage = 2;
    ck.iteration = 0;
    ck.omega_empty = 0;
    return ck;
}

void save_training_checkpoint(const std::filesystem::path& stem, const Checkpoint& ck, const RunConfig& config) {
    CheckpointFile f;
    f.groups["student"] = ck.student;
    f.groups["ema"] = ck.ema;
    f.meta = {{"stage", ck.stage},
              {"iteration", ck.iteration},
              {"seed", ck.seed},
              {"config_hash", ck.config_hash},
              {"omega_empty", ck.omega_empty},
              {"rng", {{"engine", "mt19937_64"}, {"seed", ck.seed}, {"stream", ck.stage}, {"next_index", ck.iteration}}},
              {"config", config.to_json()}};
    save_checkpoint(stem, f);
}

Checkpoint load_training_checkpoint(const std::filesystem::path& stem) {
    const CheckpointFile f = load_checkpoint(stem);
    Checkpoint ck;
    try {
        ck.stage = f.meta.at("stage").get<int>();
        ck.iteration = f.meta.at("iteration").get<int>();
        ck.seed = f.meta.at("seed").get<std::uint64_t>();
        ck.config_hash = f.meta.at("config_hash").get<std::uint64_t>();
        ck.omega_empty = f.meta.at("omega_empty").get<int>();
        ck.student = f.groups.at("student");
        ck.ema = f.groups.at("ema");
    } catch (const std::exception& e) {
        throw IoError("training checkpoint '" + stem.string() + "': " + e.what());
    }
    return ck;
}

void write_trace_header(std::ostream& os) {
    os << "stage,iteration,loss,sup,vis,sem,pseudo,alpha,tau,omega_frac,omega_empty\n";
}

void write_trace_row(std::ostream& os, const TraceRow& r) {
    os << std::setprecision(17) << r.stage << ',' << r.iteration << ',' << r.loss << ',' << r.sup << ',' << r.vis << ','
       << r.sem << ',' << r.pseudo << ',' << r.alpha << ',' << r.tau << ',' << r.omega_frac << ',' << r.omega_empty
       << '\n';
}

namespace {

struct SampleOut {
    ParamBundle grads;
    double loss = 0.0, sup = 0.0, vis = 0.0, sem = 0.0, pseudo = 0.0;
    bool pseudo_empty = false;
};

Schedule schedule_for(const RunConfig& c, int t_max) {
    Schedule s;
    s.t_max = t_max;
    s.lambda_vis = c.lambda_vis;
    s.lambda_pseudo = c.lambda_pseudo;
    s.tau_base = c.tau_base;
    s.tau_span = c.tau_span;
    return s;
}

// Sums per-sample gradients in index order and divides by the count.
ParamBundle mean_grads(std::vector<SampleOut>& outs) {
    ParamBundle mean = std::move(outs[0].grads);
    for (std::size_t j = 1; j < outs.size(); ++j)
        for (auto& [name, a] : mean) {
            const Array& g = outs[j].grads.at(name);
            for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += g.data[i];
        }
    const double inv = 1.0 / static_cast<double>(outs.size());
    for (auto& [name, a] : mean)
        for (double& x : a.data) x *= inv;
    return mean;
}

std::size_t pick(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
}

void apply_update(const RunConfig& config, Checkpoint& ck, std::vector<SampleOut>& outs, TraceRow& row,
                  const StageHooks& hooks) {
    double loss = 0.0, sup = 0.0, vis = 0.0, sem = 0.0, pseudo = 0.0;
    for (const SampleOut& o : outs) {
        loss += o.loss;
        sup += o.sup;
        vis += o.vis;
        sem += o.sem;
        pseudo += o.pseudo;
    }
    const double n = static_cast<double>(outs.size());
    row.loss = loss / n;
    row.sup = sup / n;
    row.vis = vis / n;
    row.sem = sem / n;
    row.pseudo = pseudo / n;
    auto abort = [&](const std::string& why) {
        if (hooks.on_checkpoint) hooks.on_checkpoint(ck);
        throw TrainingAborted("stage " + std::to_string(ck.stage) + " iteration " + std::to_string(ck.iteration) +
                                  ": " + why,
                              ck);
    };
    if (!std::isfinite(row.loss)) abort("non-finite loss");
    const ParamBundle grads = mean_grads(outs);
    ParamBundle next = ck.student;
    try {
        sgd_step(next, grads, config.lr, config.weight_decay);
    } catch (const NumericalError& e) {
        abort(e.what());
    }
    ck.student = std::move(next);
    ema_update(ck.ema, ck.student, config.ema_momentum);
    ++ck.iteration;
}

void finish_iteration(const RunConfig& config, const Checkpoint& ck, int total, const TraceRow& row,
                      StageResult& result, const StageHooks& hooks) {
    result.trace.push_back(row);
    if (hooks.on_row) hooks.on_row(row);
    if (hooks.on_checkpoint && (ck.iteration % config.checkpoint_every == 0 || ck.iteration == total)) {
        hooks.on_checkpoint(ck);
    }
}

int stop_at(int start, int total, std::optional<int> max_steps) {
    return max_steps ? std::min(total, start + std::max(0, *max_steps)) : total;
}

// Labeled pairs mixed with each other; teacher-guided when teacher != nullptr.
StageResult labeled_stage(const RunConfig& config, const TeacherModel* teacher, std::span<const Scene> labeled,
                          Checkpoint ck, const StageHooks& hooks, std::optional<int> max_steps, int total) {
    if (labeled.size() < 2) throw std::invalid_argument("training needs at least 2 labeled scenes");
    const int C = config.classes;
    const Schedule sched = schedule_for(config, total);
    const std::size_t B = static_cast<std::size_t>(config.stage1_batch);
    StageResult result;
    const int end = stop_at(ck.iteration, total, max_steps);
    while (ck.iteration < end) {
        const int t = ck.iteration;
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(ck.stage), static_cast<std::uint64_t>(t)));
        struct Plan {
            std::size_t dst, src;
            std::uint64_t mix_seed, prompt_seed;
        };
        std::vector<Plan> plan(B);
        for (Plan& p : plan) {
            p.dst = pick(rng, labeled.size());
            p.src = pick(rng, labeled.size() - 1);
            if (p.src >= p.dst) ++p.src;
            p.mix_seed = rng.next();
            p.prompt_seed = rng.next();
        }
        const double alpha = teacher ? sched.alpha(t) : 0.0;
        std::vector<SampleOut> outs(B);
        parallel_for(B, [&](std::size_t j) {
            const Scene& dst = labeled[plan[j].dst];
            const Scene& src = labeled[plan[j].src];
            const MixResult mix = copy_paste_mix(src.image, src.label, dst.image, dst.label, config.mix_grid,
                                                 config.mix_ratio, plan[j].mix_seed);
            ng::Graph g;
            const ng::Bound b = ng::bind(g, ck.student);
            SampleOut& o = outs[j];
            ng::Var objective;
            TeacherOutputs to;  // aliased by graph constants until backward
            if (teacher) {
                const auto prompts = prompts_for_mask(mix.label, C, config.jitter_frac, plan[j].prompt_seed);
                to = teacher->forward(mix.image, prompts);
                const StudentGraph sg = student_graph(g, b, config.student, mix.image, &to.z_fuse);
                const ng::Var sup = supervised_loss(g, sg.probs, mix.label, C);
                const ng::Var vis = visual_loss(g, b, sg.layers, to.layers, config.layer_map);
                const ng::Var sem = semantic_loss(g, b, sg.layers.back(), to.z_fuse);
                objective = stage1_objective(g, sup, vis, sem, alpha);
                o.sup = g.scalar(sup);
                o.vis = g.scalar(vis);
                o.sem = g.scalar(sem);
            } else {
                const StudentGraph sg = student_graph(g, b, config.student, mix.image, nullptr);
                objective = supervised_loss(g, sg.probs, mix.label, C);
                o.sup = g.scalar(objective);
            }
            o.loss = g.scalar(objective);
            g.backward(objective);
            o.grads = ng::collect_grads(g, b);
        });
        TraceRow row;
        row.stage = ck.stage;
        row.iteration = t;
        row.alpha = alpha;
        row.tau = sched.tau(t);
        apply_update(config, ck, outs, row, hooks);
        finish_iteration(config, ck, total, row, result, hooks);
    }
    result.checkpoint = std::move(ck);
    return result;
}

}  // namespace

StageResult run_stage1(const RunConfig& config, const TeacherModel* teacher, std::span<const Scene> labeled,
                       Checkpoint start, const StageHooks& hooks, std::optional<int> max_steps) {
    if (start.stage != 1) throw std::invalid_argument("run_stage1: checkpoint is not a stage-1 state");
    if (config.method != Method::UnCoL) teacher = nullptr;
    else if (!teacher) throw std::invalid_argument("run_stage1: uncol needs a teacher");
    return labeled_stage(config, teacher, labeled, std::move(start), hooks, max_steps, config.stage1_iters);
}

StageResult run_stage2(const RunConfig& config, const TeacherModel* teacher, std::span<const Scene> labeled,
                       std::span<const UnlabeledScene> unlabeled, Checkpoint ck, const StageHooks& hooks,
                       std::optional<int> max_steps) {
    if (ck.stage != 2) throw std::invalid_argument("run_stage2: checkpoint is not a stage-2 state");
    if (config.method == Method::Supervised) {
        return labeled_stage(config, nullptr, labeled, std::move(ck), hooks, max_steps, config.stage2_iters);
    }
    const bool uncol = config.method == Method::UnCoL;
    if (uncol && !teacher) throw std::invalid_argument("run_stage2: uncol needs a teacher");
    if (labeled.empty() || unlabeled.empty()) throw std::invalid_argument("run_stage2: empty labeled or unlabeled pool");
    const int C = config.classes;
    const int total = config.stage2_iters;
    const Schedule sched = schedule_for(config, total);
    const Schedule global = schedule_for(config, config.stage1_iters + config.stage2_iters);
    const std::size_t BL = static_cast<std::size_t>(config.stage2_labeled_batch);
    const std::size_t BU = static_cast<std::size_t>(config.stage2_unlabeled_batch);
    const std::size_t P = std::max(BL, BU);
    const std::size_t npix = static_cast<std::size_t>(config.height) * config.width;
    StageResult result;
    const int end = stop_at(ck.iteration, total, max_steps);
    while (ck.iteration < end) {
        const int t = ck.iteration;
        Rng rng(derive_seed(config.seed, 2, static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> li(BL), ui(BU);
        for (auto& i : li) i = pick(rng, labeled.size());
        for (auto& i : ui) i = pick(rng, unlabeled.size());
        std::vector<std::uint64_t> u_prompt(BU), mix_seed(P), m_prompt(P);
        for (auto& s : u_prompt) s = rng.next();
        for (std::size_t k = 0; k < P; ++k) {
            mix_seed[k] = rng.next();
            m_prompt[k] = rng.next();
        }
        const double tau = config.tau_restart ? sched.tau(t) : global.tau(std::min(config.stage1_iters + t, config.stage1_iters + total));
        const double lambda_vis = !uncol ? 0.0 : config.stage2_vis_scheduled ? sched.alpha(t) : config.lambda_vis;
        const StudentModel ema{config.student, ck.ema};

        // (a) Pseudo-labels on the unmixed unlabeled images.
        std::vector<FusionResult> fusion(BU);
        parallel_for(BU, [&](std::size_t u) {
            const ImageGrid& img = unlabeled[ui[u]].image;
            const ProbMap pS = ema.forward(img).probs;
            const UncMap uS = entropy_map(pS);
            if (uncol) {
                const auto prompts = prompts_for_mask(argmax_labels(pS), C, config.jitter_frac, u_prompt[u]);
                const ProbMap pG = teacher->forward(img, prompts).probs;
                fusion[u] = fuse(pG, pS, entropy_map(pG), uS, tau);
            } else {
                fusion[u] = single_teacher_pseudo(pS, uS, tau);
            }
        });

        // (b)-(d) Mixed pairs, alternating the paste direction.
        std::vector<SampleOut> outs(P);
        parallel_for(P, [&](std::size_t k) {
            const Scene& L = labeled[li[k % BL]];
            const ImageGrid& U = unlabeled[ui[k % BU]].image;
            const FusionResult& F = fusion[k % BU];
            const bool into_labeled = (static_cast<std::size_t>(t) + k) % 2 == 0;
            const MixResult mix = into_labeled
                                      ? copy_paste_mix(U, F.y_tilde, L.image, L.label, config.mix_grid,
                                                       config.mix_ratio, mix_seed[k])
                                      : copy_paste_mix(L.image, L.label, U, F.y_tilde, config.mix_grid,
                                                       config.mix_ratio, mix_seed[k]);
            LabelMask sup_region(config.height, config.width, 0);
            std::vector<std::uint8_t> pseudo_region(npix, 0);
            for (std::size_t i = 0; i < npix; ++i) {
                const bool from_src = mix.patch_mask.labels[i] != 0;
                const bool labeled_origin = into_labeled ? !from_src : from_src;
                sup_region.labels[i] = labeled_origin ? 1 : 0;
                pseudo_region[i] = !labeled_origin && F.omega_star.bits[i] ? 1 : 0;
            }

            std::vector<Array> teacher_layers;
            Array kv;
            const Array* kv_ptr = nullptr;
            if (into_labeled) {
                if (uncol) {
                    const auto prompts = prompts_for_mask(mix.label, C, config.jitter_frac, m_prompt[k]);
                    TeacherOutputs to = teacher->forward(mix.image, prompts);
                    kv = std::move(to.z_fuse);
                    kv_ptr = &kv;
                    teacher_layers = std::move(to.layers);
                }
            } else {
                kv = ema.forward(mix.image).kv_self;
                kv_ptr = &kv;
                if (uncol) teacher_layers = teacher->encode(mix.image);
            }

            ng::Graph g;
            const ng::Bound b = ng::bind(g, ck.student);
            const StudentGraph sg = student_graph(g, b, config.student, mix.image, kv_ptr);
            SampleOut& o = outs[k];
            const ng::Var sup = supervised_loss(g, sg.probs, mix.label, C, &sup_region);
            const ng::Var pseudo = segmentation_loss(g, sg.probs, mix.label.labels, pseudo_region, C);
            o.pseudo_empty = !pseudo.valid();
            ng::Var vis;
            if (uncol) vis = visual_loss(g, b, sg.layers, teacher_layers, config.layer_map);
            const ng::Var objective = stage2_objective(g, sup, pseudo, vis, config.lambda_pseudo, lambda_vis);
            o.sup = g.scalar(sup);
            o.pseudo = pseudo.valid() ? g.scalar(pseudo) : 0.0;
            o.vis = vis.valid() ? g.scalar(vis) : 0.0;
            o.loss = g.scalar(objective);
            g.backward(objective);
            o.grads = ng::collect_grads(g, b);
        });

        TraceRow row;
        row.stage = 2;
        row.iteration = t;
        row.alpha = lambda_vis;
        row.tau = tau;
        double cover = 0.0;
        for (const FusionResult& f : fusion) cover += static_cast<double>(f.omega_star.count()) / static_cast<double>(npix);
        row.omega_frac = cover / static_cast<double>(BU);
        for (const SampleOut& o : outs) row.omega_empty += o.pseudo_empty ? 1 : 0;
        ck.omega_empty += row.omega_empty;
        apply_update(config, ck, outs, row, hooks);
        finish_iteration(config, ck, total, row, result, hooks);
    }
    result.checkpoint = std::move(ck);
    return result;
}

Inference infer(const StudentModel& student, const ImageGrid& image) {
    Inference r;
    r.probs = student.forward(image).probs;
    r.mask = argmax_labels(r.probs);
    r.uncertainty = entropy_map(r.probs);
    return r;
}

Evaluation evaluate_student(const StudentModel& student, std::span<const Scene> scenes) {
    std::vector<LabelMask> preds(scenes.size()), gts(scenes.size());
    std::vector<ProbMap> probs(scenes.size());
    parallel_for(scenes.size(), [&](std::size_t i) {
        Inference r = infer(student, scenes[i].image);
        preds[i] = std::move(r.mask);
        probs[i] = std::move(r.probs);
        gts[i] = scenes[i].label;
    });
    Evaluation e;
    e.metrics = evaluate_segmentation(preds, gts, student.config.classes);
    e.calibration = calibration(probs, gts);
    return e;
}

StudentModel student_of(const RunConfig& config, const Checkpoint& ck) { return StudentModel{config.student, ck.student}; }

}  // namespace uncol
