// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/cli.hpp"

#include "uncol/config.hpp"
#include "uncol/gradsuite.hpp"
#include "uncol/io.hpp"
#include "uncol/pipeline.hpp"
#include "uncol/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>

namespace uncol {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "uncol-run";
    std::optional<int> iters;
    bool resume = false;
    int seeds = 20;
};

RunConfig resolve(const Options& o, const std::string& command) {
    RunConfig c = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.iters) {
        if (*o.iters < 1) throw ConfigError("--iters must be positive");
        if (command == "stage1") c.stage1_iters = *o.iters;
        else if (command == "stage2") c.stage2_iters = *o.iters;
        else if (command == "pretrain-teacher") c.teacher_max_iters = *o.iters;
    }
    c.validate();
    return c;
}

Corpus corpus_for(const RunConfig& c) { return make_corpus(c.corpus_spec(), c.task_domain, c.teacher_domain); }

std::string numbered(int i) {
    std::ostringstream ss;
    ss << std::setw(4) << std::setfill('0') << i;
    return ss.str();
}

json gen_data(const RunConfig& c, const fs::path& out) {
    const Corpus corpus = corpus_for(c);
    const fs::path root = out / "data";
    auto dump = [&](const std::string& split, const std::vector<Scene>& scenes) {
        fs::create_directories(root / split);
        for (std::size_t i = 0; i < scenes.size(); ++i)
            write_scene(root / split / (numbered(static_cast<int>(i)) + ".uncl"), scenes[i]);
    };
    dump("teacher", corpus.teacher);
    dump("labeled", corpus.labeled);
    dump("val", corpus.val);
    dump("test", corpus.test);
    // Unlabeled images are stored with an all-background label; their ground
    // truth goes to a separate directory used only by audits.
    std::vector<Scene> unlabeled, withheld;
    for (std::size_t i = 0; i < corpus.unlabeled.size(); ++i) {
        Scene s;
        s.image = corpus.unlabeled[i].image;
        s.label = LabelMask(s.image.height, s.image.width, 0);
        s.seed = corpus.unlabeled[i].seed;
        s.params = c.task_domain;
        s.classes = c.classes;
        unlabeled.push_back(s);
        s.label = corpus.withheld[i];
        withheld.push_back(std::move(s));
    }
    dump("unlabeled", unlabeled);
    dump("withheld", withheld);
    return {{"data", root.string()},
            {"teacher", corpus.teacher.size()},
            {"labeled", corpus.labeled.size()},
            {"unlabeled", corpus.unlabeled.size()},
            {"val", corpus.val.size()},
            {"test", corpus.test.size()}};
}

const TeacherModel* teacher_if_needed(const RunConfig& c, const fs::path& out, std::optional<TeacherModel>& slot) {
    if (c.method != Method::UnCoL) return nullptr;
    slot.emplace(obtain_teacher(c, out));
    return &*slot;
}

// Latest intermediate checkpoint of the same configuration, if any.
std::optional<Checkpoint> latest_checkpoint(const fs::path& dir, const RunConfig& c, int total) {
    if (!fs::exists(dir)) return std::nullopt;
    std::optional<Checkpoint> best;
    for (const auto& e : fs::directory_iterator(dir)) {
        const fs::path p = e.path();
        if (p.extension() != ".json" || p.stem().string().rfind("iter_", 0) != 0) continue;
        Checkpoint ck = load_training_checkpoint(p.parent_path() / p.stem());
        if (ck.config_hash != c.hash() || ck.iteration >= total) continue;
        if (!best || ck.iteration > best->iteration) best = std::move(ck);
    }
    return best;
}

json stage_command(const RunConfig& c, int stage, const Options& o) {
    const fs::path out = o.out;
    std::optional<TeacherModel> slot;
    const TeacherModel* teacher = teacher_if_needed(c, out, slot);
    const Corpus corpus = corpus_for(c);
    const fs::path dir = out / (stage == 1 ? "stage1" : "stage2");
    Checkpoint start;
    if (stage == 1) {
        start = initial_checkpoint(c);
    } else {
        const fs::path prev = final_checkpoint(out / "stage1");
        if (!fs::exists(prev.string() + ".json")) {
            throw IoError("stage2 needs a stage-1 checkpoint at '" + prev.string() + ".json'; run stage1 first");
        }
        start = begin_stage2(load_training_checkpoint(prev));
    }
    start.config_hash = c.hash();
    if (o.resume) {
        if (auto ck = latest_checkpoint(dir / "checkpoints", c, stage == 1 ? c.stage1_iters : c.stage2_iters)) {
            start = std::move(*ck);
        }
    }
    const int resumed_from = start.iteration;
    run_stage_dir(c, stage, teacher, corpus, std::move(start), dir);
    json summary = json::parse(read_text(dir / "summary.json"));
    return {{"stage", stage},
            {"dir", dir.string()},
            {"resumed_from", resumed_from},
            {"iterations", summary["iterations"]},
            {"final_loss", summary["final_loss"]},
            {"omega_empty", summary["omega_empty"]},
            {"test_mean_dsc", summary["test"]["segmentation"]["mean_dsc"]}};
}

json eval_command(const RunConfig& c, const Options& o) {
    const fs::path out = o.out;
    fs::path stem = final_checkpoint(out / "stage2");
    if (!fs::exists(stem.string() + ".json")) stem = final_checkpoint(out / "stage1");
    if (!fs::exists(stem.string() + ".json")) throw IoError("no trained checkpoint under '" + out.string() + "'");
    const Checkpoint ck = load_training_checkpoint(stem);
    const json j = run_eval_dir(c, ck, corpus_for(c), out / "eval");
    return {{"checkpoint", stem.string()},
            {"mean_dsc", j["segmentation"]["mean_dsc"]},
            {"mean_jaccard", j["segmentation"]["mean_jaccard"]},
            {"mean_hd95", j["segmentation"]["mean_hd95"]},
            {"mean_asd", j["segmentation"]["mean_asd"]},
            {"auroc", j["calibration"]["auroc"]},
            {"ece", j["calibration"]["ece"]}};
}

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--seed", o.seed, "Seed override");
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--iters", o.iters, "Iteration override for the command's stage");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Semi-supervised segmentation with a prompted teacher and an EMA teacher", "uncol"};
    app.require_subcommand(1);
    Options o;
    struct Cmd {
        const char* name;
        const char* help;
    };
    const Cmd cmds[] = {
        {"gen-data", "Write the synthetic corpus under <out>/data"},
        {"pretrain-teacher", "Train the prompted teacher surrogate into <out>/teacher"},
        {"stage1", "Labeled pretraining into <out>/stage1"},
        {"stage2", "Semi-supervised fine-tuning into <out>/stage2"},
        {"eval", "Evaluate the latest checkpoint on the test split into <out>/eval"},
        {"gradcheck", "Finite-difference check of every loss"},
        {"report", "Write plot-data CSVs for a completed run into <out>/report"},
    };
    for (const Cmd& c : cmds) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        add_common(sub, o);
        if (std::string(c.name) == "stage1" || std::string(c.name) == "stage2") {
            sub->add_flag("--resume", o.resume, "Continue from the latest matching intermediate checkpoint");
        }
        if (std::string(c.name) == "gradcheck") sub->add_option("--seeds", o.seeds, "Random toy cases")->capture_default_str();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 1;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    json summary = {{"command", command}};
    try {
        const RunConfig c = resolve(o, command);
        const fs::path dir = o.out;
        fs::create_directories(dir);
        if (command != "report") write_text(dir / "resolved-config.json", c.to_json().dump(2) + "\n");
        if (command == "gen-data") {
            summary["result"] = gen_data(c, dir);
        } else if (command == "pretrain-teacher") {
            TeacherBuild b = build_teacher(c);
            fs::create_directories(dir / "teacher");
            save_teacher(dir / "teacher" / "teacher", b.model, b.summary);
            write_text(dir / "teacher" / "summary.json", b.summary.dump(2) + "\n");
            summary["result"] = b.summary;
        } else if (command == "stage1" || command == "stage2") {
            summary["result"] = stage_command(c, command == "stage1" ? 1 : 2, o);
        } else if (command == "eval") {
            summary["result"] = eval_command(c, o);
        } else if (command == "gradcheck") {
            const GradSuiteReport r = run_grad_suite(o.seeds, c.seed);
            summary["result"] = r.to_json();
            write_text(dir / "gradcheck.json", r.to_json().dump(2) + "\n");
            if (!r.pass) {
                summary["status"] = "failed";
                out << summary.dump() << "\n";
                err << "error: gradient check exceeded tolerance\n";
                return 2;
            }
        } else if (command == "report") {
            summary["result"] = write_report(dir);
        }
    } catch (const NumericalError& e) {
        summary["status"] = "numerical_failure";
        summary["error"] = e.what();
        out << summary.dump() << "\n";
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        summary["status"] = "error";
        summary["error"] = e.what();
        out << summary.dump() << "\n";
        err << "error: " << e.what() << "\n";
        return 1;
    }
    summary["status"] = "ok";
    out << summary.dump() << "\n";
    return 0;
}

}  // namespace uncol
