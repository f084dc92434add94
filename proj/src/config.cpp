// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/config.hpp"

#include <fstream>
#include <functional>
#include <type_traits>
#include <vector>

namespace uncol {

using nlohmann::json;

std::string method_name(Method m) {
    switch (m) {
        case Method::UnCoL: return "uncol";
        case Method::Supervised: return "supervised";
        case Method::MeanTeacher: return "mean_teacher";
    }
    return "uncol";
}

Method parse_method(const std::string& s) {
    if (s == "uncol") return Method::UnCoL;
    if (s == "supervised") return Method::Supervised;
    if (s == "mean_teacher") return Method::MeanTeacher;
    throw ConfigError("method: expected uncol, supervised or mean_teacher, got '" + s + "'");
}

DomainParams RunConfig::default_task_domain() {
    DomainParams d;
    d.class_means = {0.2, 0.45, 0.6, 0.75, 0.9};
    d.noise_std = 0.1;
    d.deform_amp = 0.25;
    return d;
}

DomainParams RunConfig::default_teacher_domain() {
    DomainParams d;
    d.class_means = {0.15, 0.4, 0.55, 0.7, 0.85};
    d.noise_std = 0.08;
    d.deform_amp = 0.35;
    d.intensity_jitter = 0.05;
    return d;
}

namespace {

struct Field {
    std::string key;
    std::function<json(const RunConfig&)> get;
    std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
T read_value(const std::string& key, const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(key + ": expected a boolean");
        return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(key + ": expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
            if (v.is_number_unsigned() || v.get<std::int64_t>() >= 0) return v.get<T>();
            throw ConfigError(key + ": expected a non-negative integer");
        } else {
            return v.get<T>();
        }
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(key + ": expected a number");
        return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(key + ": expected a string");
        return v.get<std::string>();
    } else {
        if (!v.is_array()) throw ConfigError(key + ": expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(key + ": expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
}

template <typename T, typename Proj>
Field field(std::string key, Proj proj) {
    return Field{key, [proj](const RunConfig& c) { return json(proj(const_cast<RunConfig&>(c))); },
                 [proj, key](RunConfig& c, const json& v) { proj(c) = read_value<T>(key, v); }};
}

#define UNCOL_FIELD(type, key, expr) field<type>(key, [](RunConfig& c) -> type& { return expr; })

void add_domain(std::vector<Field>& f, const std::string& prefix, DomainParams RunConfig::* member) {
    auto d = [member](RunConfig& c) -> DomainParams& { return c.*member; };
    f.push_back(field<int>(prefix + "max_shapes", [d](RunConfig& c) -> int& { return d(c).max_shapes; }));
    f.push_back(field<std::vector<double>>(prefix + "class_means",
                                           [d](RunConfig& c) -> std::vector<double>& { return d(c).class_means; }));
    f.push_back(field<double>(prefix + "noise_std", [d](RunConfig& c) -> double& { return d(c).noise_std; }));
    f.push_back(field<double>(prefix + "deform_amp", [d](RunConfig& c) -> double& { return d(c).deform_amp; }));
    f.push_back(
        field<double>(prefix + "intensity_jitter", [d](RunConfig& c) -> double& { return d(c).intensity_jitter; }));
    f.push_back(field<double>(prefix + "radius_min", [d](RunConfig& c) -> double& { return d(c).radius_min; }));
    f.push_back(field<double>(prefix + "radius_max", [d](RunConfig& c) -> double& { return d(c).radius_max; }));
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f{
            UNCOL_FIELD(std::uint64_t, "seed", c.seed),
            UNCOL_FIELD(int, "classes", c.classes),
            UNCOL_FIELD(int, "height", c.height),
            UNCOL_FIELD(int, "width", c.width),
            UNCOL_FIELD(int, "n_labeled", c.n_labeled),
            UNCOL_FIELD(int, "n_unlabeled", c.n_unlabeled),
            UNCOL_FIELD(int, "n_val", c.n_val),
            UNCOL_FIELD(int, "n_test", c.n_test),
            UNCOL_FIELD(int, "n_teacher", c.n_teacher),
            UNCOL_FIELD(int, "n_teacher_val", c.n_teacher_val),
            UNCOL_FIELD(std::uint64_t, "teacher_seed", c.teacher_seed),
            UNCOL_FIELD(int, "stage1_iters", c.stage1_iters),
            UNCOL_FIELD(int, "stage2_iters", c.stage2_iters),
            UNCOL_FIELD(int, "stage1_batch", c.stage1_batch),
            UNCOL_FIELD(int, "stage2_labeled_batch", c.stage2_labeled_batch),
            UNCOL_FIELD(int, "stage2_unlabeled_batch", c.stage2_unlabeled_batch),
            UNCOL_FIELD(double, "lr", c.lr),
            UNCOL_FIELD(double, "weight_decay", c.weight_decay),
            UNCOL_FIELD(double, "ema_momentum", c.ema_momentum),
            UNCOL_FIELD(double, "lambda_vis", c.lambda_vis),
            UNCOL_FIELD(double, "lambda_pseudo", c.lambda_pseudo),
            UNCOL_FIELD(double, "tau_base", c.tau_base),
            UNCOL_FIELD(double, "tau_span", c.tau_span),
            UNCOL_FIELD(bool, "stage2_vis_scheduled", c.stage2_vis_scheduled),
            UNCOL_FIELD(bool, "tau_restart", c.tau_restart),
            UNCOL_FIELD(double, "mix_ratio", c.mix_ratio),
            UNCOL_FIELD(int, "mix_grid", c.mix_grid),
            UNCOL_FIELD(double, "jitter_frac", c.jitter_frac),
            UNCOL_FIELD(int, "student_blocks", c.student.encoder.n_blocks),
            UNCOL_FIELD(int, "student_dim", c.student.encoder.dim),
            UNCOL_FIELD(int, "student_ffn_mult", c.student.encoder.ffn_mult),
            UNCOL_FIELD(int, "teacher_blocks", c.teacher.encoder.n_blocks),
            UNCOL_FIELD(int, "teacher_dim", c.teacher.encoder.dim),
            UNCOL_FIELD(int, "teacher_ffn_mult", c.teacher.encoder.ffn_mult),
            UNCOL_FIELD(int, "patch", c.student.encoder.patch),
            UNCOL_FIELD(int, "decoder_hidden", c.student.decoder_hidden),
            UNCOL_FIELD(int, "teacher_max_iters", c.teacher_max_iters),
            UNCOL_FIELD(int, "teacher_batch", c.teacher_batch),
            UNCOL_FIELD(double, "teacher_lr", c.teacher_lr),
            UNCOL_FIELD(double, "teacher_dice_target", c.teacher_dice_target),
            UNCOL_FIELD(int, "teacher_eval_every", c.teacher_eval_every),
            UNCOL_FIELD(std::uint64_t, "teacher_init_seed", c.teacher_init_seed),
            UNCOL_FIELD(std::string, "teacher_checkpoint", c.teacher_checkpoint),
            UNCOL_FIELD(int, "checkpoint_every", c.checkpoint_every),
        };
        add_domain(f, "task_", &RunConfig::task_domain);
        add_domain(f, "teacher_domain_", &RunConfig::teacher_domain);
        return f;
    }();
    return table;
}

#undef UNCOL_FIELD

// Derived fields that mirror shared settings across the two networks.
void sync_networks(RunConfig& c) {
    c.student.classes = c.classes;
    c.teacher.classes = c.classes;
    c.teacher.encoder.patch = c.student.encoder.patch;
    c.teacher.decoder_hidden = c.student.decoder_hidden;
    c.student.teacher_dim = c.teacher.encoder.dim;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    RunConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "method") {
            if (!value.is_string()) throw ConfigError("method: expected a string");
            c.method = parse_method(value.get<std::string>());
            continue;
        }
        if (key == "layer_map") {
            if (!value.is_array()) throw ConfigError("layer_map: expected an array of [student, teacher] pairs");
            c.layer_map.pairs.clear();
            for (const auto& pr : value) {
                if (!pr.is_array() || pr.size() != 2 || !pr[0].is_number_integer() || !pr[1].is_number_integer()) {
                    throw ConfigError("layer_map: expected an array of [student, teacher] pairs");
                }
                c.layer_map.pairs.emplace_back(pr[0].get<int>(), pr[1].get<int>());
            }
            continue;
        }
        bool found = false;
        for (const Field& f : fields()) {
            if (f.key == key) {
                f.set(c, value);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("config: unknown key '" + key + "'");
    }
    sync_networks(c);
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

json RunConfig::to_json() const {
    json j = json::object();
    j["method"] = method_name(method);
    json pairs = json::array();
    for (const auto& [s, t] : layer_map.pairs) pairs.push_back({s, t});
    j["layer_map"] = pairs;
    for (const Field& f : fields()) j[f.key] = f.get(*this);
    return j;
}

void RunConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(classes >= 2 && classes <= 255, "classes must lie in [2, 255]");
    require(height >= 16 && width >= 16, "height and width must be at least 16");
    require(n_labeled >= 2, "n_labeled must be at least 2");
    require(n_unlabeled >= 1 && n_val >= 1 && n_test >= 1, "split sizes must be positive");
    require(n_teacher_val >= 1, "n_teacher_val must be positive");
    require(stage1_iters >= 1 && stage2_iters >= 1, "stage iteration counts must be positive");
    require(stage1_batch >= 1 && stage2_labeled_batch >= 1 && stage2_unlabeled_batch >= 1,
            "batch sizes must be at least 1");
    require(lr > 0.0 && weight_decay >= 0.0, "lr must be positive and weight_decay non-negative");
    require(ema_momentum >= 0.0 && ema_momentum < 1.0, "ema_momentum must lie in [0, 1)");
    require(lambda_vis >= 0.0 && lambda_pseudo >= 0.0, "loss weights must be non-negative");
    require(mix_ratio > 0.0 && mix_ratio < 1.0, "mix_ratio must lie in (0, 1)");
    require(mix_grid >= 1 && height % mix_grid == 0 && width % mix_grid == 0,
            "mix_grid must divide height and width");
    require(jitter_frac >= 0.0 && jitter_frac < 0.5, "jitter_frac must lie in [0, 0.5)");
    require(student.encoder.patch >= 1 && height % student.encoder.patch == 0 && width % student.encoder.patch == 0,
            "patch must divide height and width");
    require(static_cast<int>(task_domain.class_means.size()) == classes &&
                static_cast<int>(teacher_domain.class_means.size()) == classes,
            "class_means must list one mean per class");
    require(teacher_batch >= 1 && teacher_max_iters >= 1 && teacher_eval_every >= 1 && teacher_lr > 0.0,
            "teacher training settings must be positive");
    require(checkpoint_every >= 1, "checkpoint_every must be positive");
    try {
        layer_map.validate(student.encoder.n_blocks, teacher.encoder.n_blocks);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

std::uint64_t RunConfig::hash() const {
    const std::string s = to_json().dump();
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001B3ull;
    }
    return h;
}

CorpusSpec RunConfig::corpus_spec() const {
    CorpusSpec s;
    s.split = SplitSpec{n_labeled, n_unlabeled, n_val, n_test, seed};
    s.classes = classes;
    s.height = height;
    s.width = width;
    s.n_teacher = n_teacher;
    s.teacher_seed = teacher_seed;
    return s;
}

TeacherTrainSpec RunConfig::teacher_train_spec() const {
    TeacherTrainSpec s;
    s.max_iters = teacher_max_iters;
    s.batch = teacher_batch;
    s.lr = teacher_lr;
    s.weight_decay = weight_decay;
    s.jitter_frac = jitter_frac;
    s.dice_target = teacher_dice_target;
    s.eval_every = teacher_eval_every;
    s.seed = teacher_init_seed;
    return s;
}

}  // namespace uncol
