// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/synthdata.hpp"

#include "uncol/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace uncol {

namespace {

constexpr int kMaxAttempts = 64;
constexpr double kMinCoverage = 0.05;
constexpr double kMaxCoverage = 0.60;
constexpr int kHarmonics = 3;

struct Blob {
    double cy, cx, radius;
    double amp[kHarmonics];
    double phase[kHarmonics];
    int class_id;
};

bool inside(const Blob& b, double y, double x) {
    const double dy = y - b.cy, dx = x - b.cx;
    const double r = std::sqrt(dy * dy + dx * dx);
    const double theta = std::atan2(dy, dx);
    double scale = 1.0;
    for (int k = 0; k < kHarmonics; ++k) scale += b.amp[k] * std::cos((k + 2) * theta + b.phase[k]);
    return r <= b.radius * scale;
}

Scene try_scene(std::uint64_t seed, int attempt, const DomainParams& params, int classes, int height, int width) {
    Rng rng(derive_seed(seed, 0x5CE4E, static_cast<std::uint64_t>(attempt)));
    Scene s;
    s.seed = seed;
    s.params = params;
    s.classes = classes;
    s.label = LabelMask(height, width, 0);
    s.image = ImageGrid(height, width, 0.0);

    const int max_fg = std::clamp(params.max_shapes, 1, classes - 1);
    const int n_present = static_cast<int>(rng.uniform_int(1, max_fg));
    std::vector<int> ids(static_cast<std::size_t>(classes - 1));
    std::iota(ids.begin(), ids.end(), 1);
    for (int i = 0; i < n_present; ++i) {
        const auto j = rng.uniform_int(i, static_cast<std::int64_t>(ids.size()) - 1);
        std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
    }

    const double side = std::min(height, width);
    std::vector<Blob> blobs;
    for (int i = 0; i < n_present; ++i) {
        Blob b{};
        b.class_id = ids[static_cast<std::size_t>(i)];
        b.radius = rng.uniform(params.radius_min, params.radius_max) * side;
        const double margin = std::min(b.radius, 0.45 * side);
        b.cy = rng.uniform(margin, height - margin);
        b.cx = rng.uniform(margin, width - margin);
        for (int k = 0; k < kHarmonics; ++k) {
            b.amp[k] = params.deform_amp * rng.uniform() / (k + 1);
            b.phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        }
        blobs.push_back(b);
    }
    for (const Blob& b : blobs) {
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                if (inside(b, y + 0.5, x + 0.5)) s.label.at(y, x) = static_cast<std::uint8_t>(b.class_id);
    }

    const double offset = params.intensity_jitter > 0.0
                              ? rng.uniform(-params.intensity_jitter, params.intensity_jitter)
                              : 0.0;
    for (std::size_t i = 0; i < s.image.size(); ++i) {
        const double mean = params.class_means[s.label.labels[i]] + offset;
        const double noise = params.noise_std > 0.0 ? params.noise_std * rng.normal() : 0.0;
        s.image.pixels[i] = std::clamp(mean + noise, 0.0, 1.0);
    }
    return s;
}

}  // namespace

double foreground_fraction(const LabelMask& label) {
    if (label.size() == 0) return 0.0;
    const auto fg = std::count_if(label.labels.begin(), label.labels.end(), [](std::uint8_t v) { return v != 0; });
    return static_cast<double>(fg) / static_cast<double>(label.size());
}

Scene gen_scene(std::uint64_t seed, const DomainParams& params, int classes, int height, int width) {
    if (classes < 2) throw DataError("gen_scene: need at least 2 classes");
    if (height < 16 || width < 16) throw DataError("gen_scene: image must be at least 16x16");
    if (static_cast<int>(params.class_means.size()) != classes) {
        throw DataError("gen_scene: class_means has " + std::to_string(params.class_means.size()) +
                        " entries for " + std::to_string(classes) + " classes");
    }
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Scene s = try_scene(seed, attempt, params, classes, height, width);
        const double cov = foreground_fraction(s.label);
        if (cov >= kMinCoverage && cov <= kMaxCoverage) return s;
    }
    throw DataError("gen_scene: coverage outside [0.05, 0.60] after " + std::to_string(kMaxAttempts) +
                    " attempts for seed " + std::to_string(seed));
}

SeedRange task_seed_range(const SplitSpec& split) {
    const auto total = static_cast<std::uint64_t>(split.n_labeled + split.n_unlabeled + split.n_val + split.n_test);
    return {split.seed << 20, total};
}

SeedRange teacher_seed_range(std::uint64_t teacher_seed, int n_teacher) {
    return {(teacher_seed << 20) + (1ull << 19), static_cast<std::uint64_t>(n_teacher)};
}

std::vector<Scene> make_teacher_corpus(const CorpusSpec& spec, const DomainParams& teacher_params, int offset,
                                       int count) {
    const SeedRange range = teacher_seed_range(spec.teacher_seed, spec.n_teacher);
    if (count < 0) count = spec.n_teacher - offset;
    std::vector<Scene> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = offset; i < offset + count; ++i) {
        out.push_back(gen_scene(range.first + static_cast<std::uint64_t>(i), teacher_params, spec.classes,
                                spec.height, spec.width));
    }
    return out;
}

Corpus make_corpus(const CorpusSpec& spec, const DomainParams& task_params, const DomainParams& teacher_params) {
    const SplitSpec& sp = spec.split;
    if (sp.n_labeled < 1 || sp.n_unlabeled < 0 || sp.n_val < 0 || sp.n_test < 0) {
        throw DataError("make_corpus: split counts must be non-negative and n_labeled >= 1");
    }
    if (sp.n_unlabeled < sp.n_labeled) throw DataError("make_corpus: expected n_unlabeled >= n_labeled");
    if (spec.n_teacher < 10 * sp.n_labeled) {
        throw DataError("make_corpus: teacher corpus must hold at least 10x the labeled split");
    }
    const SeedRange task = task_seed_range(sp);
    const SeedRange teach = teacher_seed_range(spec.teacher_seed, spec.n_teacher);
    if (task.count >= (1ull << 19) || teach.count >= (1ull << 19) || task.overlaps(teach)) {
        throw DataError("make_corpus: overlapping seed ranges between task and teacher corpora");
    }

    Corpus c;
    c.teacher = make_teacher_corpus(spec, teacher_params);
    std::uint64_t next = task.first;
    auto gen = [&] { return gen_scene(next++, task_params, spec.classes, spec.height, spec.width); };
    for (int i = 0; i < sp.n_labeled; ++i) c.labeled.push_back(gen());
    for (int i = 0; i < sp.n_unlabeled; ++i) {
        Scene s = gen();
        c.unlabeled.push_back(UnlabeledScene{std::move(s.image), s.seed});
        c.withheld.push_back(std::move(s.label));
    }
    for (int i = 0; i < sp.n_val; ++i) c.val.push_back(gen());
    for (int i = 0; i < sp.n_test; ++i) c.test.push_back(gen());
    return c;
}

// ---------------------------------------------------------------- mixing

int mixed_patch_count(int grid, double ratio) {
    const int total = grid * grid;
    // The small slack keeps exact products such as 0.25 * 16 from rounding up.
    return std::clamp(static_cast<int>(std::ceil(ratio * total - 1e-9)), 0, total);
}

LabelMask patch_mask(int height, int width, int grid, double ratio, std::uint64_t seed) {
    if (grid < 1 || height % grid != 0 || width % grid != 0) {
        throw DataError("copy_paste_mix: " + std::to_string(height) + "x" + std::to_string(width) +
                        " is not divisible by grid " + std::to_string(grid));
    }
    if (!(ratio > 0.0 && ratio < 1.0)) throw DataError("copy_paste_mix: ratio must lie in (0, 1)");
    const int total = grid * grid;
    const int k = mixed_patch_count(grid, ratio);
    std::vector<int> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0x313C));
    for (int i = 0; i < k; ++i) {
        const auto j = rng.uniform_int(i, total - 1);
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    LabelMask mask(height, width, 0);
    const int ph = height / grid, pw = width / grid;
    for (int i = 0; i < k; ++i) {
        const int py = order[static_cast<std::size_t>(i)] / grid;
        const int px = order[static_cast<std::size_t>(i)] % grid;
        for (int y = py * ph; y < (py + 1) * ph; ++y)
            for (int x = px * pw; x < (px + 1) * pw; ++x) mask.at(y, x) = 1;
    }
    return mask;
}

MixResult copy_paste_mix(const ImageGrid& src_image, const LabelMask& src_label, const ImageGrid& dst_image,
                         const LabelMask& dst_label, int grid, double ratio, std::uint64_t seed) {
    const int H = dst_image.height, W = dst_image.width;
    if (src_image.height != H || src_image.width != W || src_label.height != H || src_label.width != W ||
        dst_label.height != H || dst_label.width != W) {
        throw DataError("copy_paste_mix: src and dst dimensions differ");
    }
    MixResult out;
    out.patch_mask = patch_mask(H, W, grid, ratio, seed);
    out.image = ImageGrid(H, W);
    out.image.pixels = apply_patch_mask<double>(out.patch_mask, src_image.pixels, dst_image.pixels);
    out.label = LabelMask(H, W);
    out.label.labels = apply_patch_mask<std::uint8_t>(out.patch_mask, src_label.labels, dst_label.labels);
    return out;
}

// ---------------------------------------------------------------- prompts

BoxPrompt tight_box(const LabelMask& label, int class_id) {
    int y0 = label.height, x0 = label.width, y1 = -1, x1 = -1;
    for (int y = 0; y < label.height; ++y) {
        for (int x = 0; x < label.width; ++x) {
            if (label.at(y, x) != class_id) continue;
            y0 = std::min(y0, y);
            x0 = std::min(x0, x);
            y1 = std::max(y1, y);
            x1 = std::max(x1, x);
        }
    }
    if (y1 < 0) throw DataError("synth_box_prompt: class " + std::to_string(class_id) + " absent from mask");
    return {y0, x0, y1 + 1, x1 + 1, class_id};
}

BoxPrompt synth_box_prompt(const LabelMask& label, int class_id, double jitter_frac, std::uint64_t seed) {
    const BoxPrompt tight = tight_box(label, class_id);
    if (jitter_frac <= 0.0) return tight;
    const int H = label.height, W = label.width;
    const int sy = static_cast<int>(std::floor(jitter_frac * H));
    const int sx = static_cast<int>(std::floor(jitter_frac * W));
    Rng rng(derive_seed(seed, 0xB0C5, static_cast<std::uint64_t>(class_id)));
    BoxPrompt b = tight;
    b.y0 += static_cast<int>(rng.uniform_int(-sy, sy));
    b.x0 += static_cast<int>(rng.uniform_int(-sx, sx));
    b.y1 += static_cast<int>(rng.uniform_int(-sy, sy));
    b.x1 += static_cast<int>(rng.uniform_int(-sx, sx));
    const int cy = (tight.y0 + tight.y1 - 1) / 2;
    const int cx = (tight.x0 + tight.x1 - 1) / 2;
    b.y0 = std::clamp(std::min(b.y0, cy), 0, H - 1);
    b.x0 = std::clamp(std::min(b.x0, cx), 0, W - 1);
    b.y1 = std::clamp(std::max(b.y1, cy + 1), 1, H);
    b.x1 = std::clamp(std::max(b.x1, cx + 1), 1, W);
    return b;
}

BoxPrompt full_image_box(int height, int width, int class_id) { return {0, 0, height, width, class_id}; }

std::vector<BoxPrompt> prompts_for_mask(const LabelMask& label, int classes, double jitter_frac, std::uint64_t seed) {
    std::vector<bool> present(static_cast<std::size_t>(classes), false);
    for (auto v : label.labels)
        if (v < classes) present[v] = true;
    std::vector<BoxPrompt> out;
    for (int c = 1; c < classes; ++c)
        if (present[static_cast<std::size_t>(c)]) out.push_back(synth_box_prompt(label, c, jitter_frac, seed));
    if (out.empty()) {
        for (int c = 1; c < classes; ++c) out.push_back(full_image_box(label.height, label.width, c));
    }
    return out;
}

}  // namespace uncol
