// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/pipeline.hpp"

#include "uncol/io.hpp"
#include "uncol/objectives.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace uncol {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

json teacher_config_json(const TeacherConfig& c) {
    return {{"blocks", c.encoder.n_blocks}, {"dim", c.encoder.dim},       {"patch", c.encoder.patch},
            {"ffn_mult", c.encoder.ffn_mult}, {"classes", c.classes}, {"decoder_hidden", c.decoder_hidden}};
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace

void save_teacher(const fs::path& stem, const TeacherModel& teacher, const json& meta) {
    CheckpointFile f;
    f.groups["teacher"] = teacher.params();
    f.meta = meta;
    f.meta["teacher_config"] = teacher_config_json(teacher.config());
    f.meta["param_hash"] = hex64(teacher.hash());
    save_checkpoint(stem, f);
}

TeacherModel load_teacher(const fs::path& stem) {
    const CheckpointFile f = load_checkpoint(stem);
    TeacherConfig c;
    try {
        const json& j = f.meta.at("teacher_config");
        c.encoder.n_blocks = j.at("blocks").get<int>();
        c.encoder.dim = j.at("dim").get<int>();
        c.encoder.patch = j.at("patch").get<int>();
        c.encoder.ffn_mult = j.at("ffn_mult").get<int>();
        c.classes = j.at("classes").get<int>();
        c.decoder_hidden = j.at("decoder_hidden").get<int>();
        return TeacherModel(c, f.groups.at("teacher"));
    } catch (const std::exception& e) {
        throw IoError("teacher checkpoint '" + stem.string() + "': " + e.what());
    }
}

TeacherBuild build_teacher(const RunConfig& config) {
    const CorpusSpec spec = config.corpus_spec();
    const auto train = make_teacher_corpus(spec, config.teacher_domain, 0, config.n_teacher);
    const auto val = make_teacher_corpus(spec, config.teacher_domain, config.n_teacher, config.n_teacher_val);
    TeacherTrainResult r = pretrain_teacher_surrogate(train, val, config.teacher, config.teacher_train_spec());
    const Corpus corpus = make_corpus(spec, config.task_domain, config.teacher_domain);
    const double task_dice = teacher_dice(r.model, corpus.val, config.jitter_frac, config.teacher_init_seed);
    json summary = {{"iterations", r.iterations},
                    {"teacher_val_dice", r.val_dice},
                    {"task_val_dice", task_dice},
                    {"final_loss", r.loss_trace.empty() ? 0.0 : r.loss_trace.back()},
                    {"param_hash", hex64(r.model.hash())}};
    return TeacherBuild{std::move(r.model), std::move(summary)};
}

TeacherModel obtain_teacher(const RunConfig& config, const std::optional<fs::path>& out) {
    if (!config.teacher_checkpoint.empty()) return load_teacher(config.teacher_checkpoint);
    if (out) {
        const fs::path stem = *out / "teacher" / "teacher";
        if (fs::exists(stem.string() + ".json")) return load_teacher(stem);
    }
    TeacherBuild b = build_teacher(config);
    if (out) {
        fs::create_directories(*out / "teacher");
        save_teacher(*out / "teacher" / "teacher", b.model, b.summary);
        write_json(*out / "teacher" / "summary.json", b.summary);
    }
    return std::move(b.model);
}

json evaluation_json(const Evaluation& e) {
    return {{"segmentation", to_json(e.metrics)}, {"calibration", to_json(e.calibration)}};
}

fs::path final_checkpoint(const fs::path& stage_dir) { return stage_dir / "checkpoints" / "final"; }

Checkpoint run_stage_dir(const RunConfig& config, int stage, const TeacherModel* teacher, const Corpus& corpus,
                         Checkpoint start, const fs::path& dir) {
    fs::create_directories(dir / "checkpoints");
    const json resolved = config.to_json();
    write_json(dir / "config.json", resolved);
    write_json(dir / "resolved-config.json", resolved);

    // Keep trace rows from before the resume point.
    const fs::path trace_path = dir / "trace.csv";
    std::string kept;
    if (start.iteration > 0 && fs::exists(trace_path)) {
        std::istringstream in(read_text(trace_path));
        std::string line;
        std::getline(in, line);
        kept = line + "\n";
        while (std::getline(in, line)) {
            const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
            if (c1 == std::string::npos || c2 == std::string::npos) break;
            if (std::stoi(line.substr(c1 + 1, c2 - c1 - 1)) >= start.iteration) break;
            kept += line + "\n";
        }
    }
    std::ofstream trace(trace_path, std::ios::binary | std::ios::trunc);
    if (!trace) throw IoError("cannot open '" + trace_path.string() + "'");
    if (kept.empty()) write_trace_header(trace);
    else trace << kept;

    StageHooks hooks;
    hooks.on_row = [&](const TraceRow& r) {
        write_trace_row(trace, r);
        trace.flush();
    };
    hooks.on_checkpoint = [&](const Checkpoint& ck) {
        std::ostringstream name;
        name << "iter_" << std::setw(6) << std::setfill('0') << ck.iteration;
        save_training_checkpoint(dir / "checkpoints" / name.str(), ck, config);
    };

    StageResult r = stage == 1 ? run_stage1(config, teacher, corpus.labeled, std::move(start), hooks)
                               : run_stage2(config, teacher, corpus.labeled, corpus.unlabeled, std::move(start), hooks);
    trace.close();
    save_training_checkpoint(final_checkpoint(dir), r.checkpoint, config);

    const Evaluation val = evaluate_student(student_of(config, r.checkpoint), corpus.val);
    const Evaluation test = evaluate_student(student_of(config, r.checkpoint), corpus.test);
    json summary = {{"stage", stage},
                    {"method", method_name(config.method)},
                    {"seed", config.seed},
                    {"iterations", r.checkpoint.iteration},
                    {"final_loss", r.trace.empty() ? 0.0 : r.trace.back().loss},
                    {"omega_empty", r.checkpoint.omega_empty},
                    {"student_hash", hex64(param_hash(r.checkpoint.student))},
                    {"ema_hash", hex64(param_hash(r.checkpoint.ema))},
                    {"config_hash", hex64(config.hash())},
                    {"val_mean_dsc", val.metrics.mean_dsc},
                    {"test", evaluation_json(test)}};
    if (teacher) summary["teacher_hash"] = hex64(teacher->hash());
    write_json(dir / "summary.json", summary);
    return std::move(r.checkpoint);
}

json run_eval_dir(const RunConfig& config, const Checkpoint& ck, const Corpus& corpus, const fs::path& dir) {
    fs::create_directories(dir);
    const Evaluation e = evaluate_student(student_of(config, ck), corpus.test);
    const json j = evaluation_json(e);
    write_json(dir / "metrics.json", j);
    {
        std::ofstream os(dir / "metrics.csv", std::ios::binary);
        write_metric_csv(os, e.metrics);
    }
    {
        std::ofstream os(dir / "reliability.csv", std::ios::binary);
        write_reliability_csv(os, e.calibration);
    }
    {
        // Full-resolution curves run to |test pixels| points; keep a 1001-point grid.
        std::ofstream os(dir / "risk_coverage.csv", std::ios::binary);
        os << "coverage,risk\n" << std::setprecision(17);
        const std::size_t n = e.calibration.coverage.size() - 1;
        for (std::size_t i = 0; i <= 1000; ++i) {
            const std::size_t k = (i * n + 500) / 1000;
            os << e.calibration.coverage[k] << ',' << e.calibration.risk[k] << '\n';
        }
    }
    return j;
}

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace

json write_report(const fs::path& run_dir) {
    const fs::path s1 = run_dir / "stage1", s2 = run_dir / "stage2", ev = run_dir / "eval";
    for (const fs::path& p : {s1 / "trace.csv", s1 / "resolved-config.json", s2 / "trace.csv", ev / "reliability.csv",
                              ev / "risk_coverage.csv"}) {
        if (!fs::exists(p)) throw IoError("incomplete run: missing '" + p.string() + "'");
    }
    const fs::path out = run_dir / "report";
    fs::create_directories(out);

    const auto t1 = read_csv(s1 / "trace.csv");
    const auto t2 = read_csv(s2 / "trace.csv");
    // trace columns: stage,iteration,loss,sup,vis,sem,pseudo,alpha,tau,omega_frac,omega_empty
    std::ostringstream losses;
    losses << "stage,iteration,loss,sup,vis,sem,pseudo\n";
    for (const auto* t : {&t1, &t2})
        for (std::size_t i = 1; i < t->size(); ++i) {
            const auto& r = (*t)[i];
            losses << r[0] << ',' << r[1] << ',' << r[2] << ',' << r[3] << ',' << r[4] << ',' << r[5] << ',' << r[6]
                   << '\n';
        }
    write_text(out / "losses.csv", losses.str());

    const RunConfig config = RunConfig::from_json(json::parse(read_text(s1 / "resolved-config.json")));
    std::ostringstream sched;
    sched << "stage,t,t_over_tmax,gamma,alpha,tau\n" << std::setprecision(17);
    for (int stage = 1; stage <= 2; ++stage) {
        const int tmax = stage == 1 ? config.stage1_iters : config.stage2_iters;
        for (int t = 0; t <= tmax; ++t) {
            sched << stage << ',' << t << ',' << static_cast<double>(t) / tmax << ',' << gamma_rampup(t, tmax) << ','
                  << alpha_weight(t, tmax, config.lambda_vis) << ','
                  << tau_threshold(t, tmax, config.tau_base, config.tau_span) << '\n';
        }
    }
    write_text(out / "schedules.csv", sched.str());

    std::ostringstream omega;
    omega << "iteration,tau,omega_frac,omega_empty\n";
    for (std::size_t i = 1; i < t2.size(); ++i) {
        const auto& r = t2[i];
        omega << r[1] << ',' << r[8] << ',' << r[9] << ',' << r[10] << '\n';
    }
    write_text(out / "omega_coverage.csv", omega.str());

    write_text(out / "reliability.csv", read_text(ev / "reliability.csv"));
    write_text(out / "risk_coverage.csv", read_text(ev / "risk_coverage.csv"));
    return {{"report", out.string()},
            {"files", {"losses.csv", "schedules.csv", "omega_coverage.csv", "reliability.csv", "risk_coverage.csv"}}};
}

}  // namespace uncol
