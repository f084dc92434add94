// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic 2D multi-class scenes, dataset splits, copy-paste mixing
// and bounding-box prompt synthesis.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uncol {

struct ImageGrid {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;

    ImageGrid() = default;
    ImageGrid(int h, int w, double fill = 0.0)
        : height(h), width(w), pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

    double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const noexcept { return pixels.size(); }
    bool operator==(const ImageGrid&) const = default;
};

struct LabelMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> labels;

    LabelMask() = default;
    LabelMask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), labels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

    std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const noexcept { return labels.size(); }
    bool operator==(const LabelMask&) const = default;
};

// Generator knobs. Class means index by class id (0 = background).
struct DomainParams {
    int max_shapes = 4;
    std::vector<double> class_means{0.2, 0.45, 0.6, 0.75, 0.9};
    double noise_std = 0.1;
    double deform_amp = 0.25;
    // Per-scene uniform offset in [-jitter, +jitter] added to every class mean.
    double intensity_jitter = 0.0;
    // Blob base radius, as a fraction of min(H, W).
    double radius_min = 0.08;
    double radius_max = 0.2;

    bool operator==(const DomainParams&) const = default;
};

struct Scene {
    ImageGrid image;
    LabelMask label;
    std::uint64_t seed = 0;
    DomainParams params;
    int classes = 0;

    bool operator==(const Scene&) const = default;
};

// An unlabeled training view: the label is not part of the type.
struct UnlabeledScene {
    ImageGrid image;
    std::uint64_t seed = 0;
};

struct SplitSpec {
    int n_labeled = 10;
    int n_unlabeled = 90;
    int n_val = 10;
    int n_test = 20;
    std::uint64_t seed = 0;
};

struct BoxPrompt {
    int y0 = 0;
    int x0 = 0;
    int y1 = 0;  // exclusive
    int x1 = 0;  // exclusive
    int class_id = 0;

    bool valid_for(int height, int width) const noexcept {
        return 0 <= y0 && y0 < y1 && y1 <= height && 0 <= x0 && x0 < x1 && x1 <= width;
    }
    bool contains(int y, int x) const noexcept { return y0 <= y && y < y1 && x0 <= x && x < x1; }
    bool operator==(const BoxPrompt&) const = default;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Scene with between 1 and C-1 foreground blobs covering 5%..60% of pixels.
Scene gen_scene(std::uint64_t seed, const DomainParams& params, int classes, int height, int width);

double foreground_fraction(const LabelMask& label);

struct Corpus {
    std::vector<Scene> teacher;
    std::vector<Scene> labeled;
    std::vector<UnlabeledScene> unlabeled;
    std::vector<Scene> val;
    std::vector<Scene> test;
    // Ground truth of the unlabeled split, kept apart from the training view
    // for audits and pseudo-label quality reports only.
    std::vector<LabelMask> withheld;
};

struct CorpusSpec {
    SplitSpec split;
    int classes = 5;
    int height = 64;
    int width = 64;
    int n_teacher = 400;
    std::uint64_t teacher_seed = 1000;
};

// Seed block assigned to task scenes and to the teacher corpus.
struct SeedRange {
    std::uint64_t first = 0;
    std::uint64_t count = 0;
    bool overlaps(const SeedRange& o) const noexcept {
        return first < o.first + o.count && o.first < first + count;
    }
};

SeedRange task_seed_range(const SplitSpec& split);
SeedRange teacher_seed_range(std::uint64_t teacher_seed, int n_teacher);

Corpus make_corpus(const CorpusSpec& spec, const DomainParams& task_params, const DomainParams& teacher_params);
// Teacher corpus only (scenes seeded from the teacher block).
std::vector<Scene> make_teacher_corpus(const CorpusSpec& spec, const DomainParams& teacher_params, int offset = 0,
                                       int count = -1);

struct MixResult {
    ImageGrid image;
    LabelMask label;
    // 1 where the pixel was copied from src.
    LabelMask patch_mask;
};

int mixed_patch_count(int grid, double ratio);

// Copies ceil(ratio * grid^2) of the grid x grid patches from src into dst.
MixResult copy_paste_mix(const ImageGrid& src_image, const LabelMask& src_label, const ImageGrid& dst_image,
                         const LabelMask& dst_label, int grid, double ratio, std::uint64_t seed);

// Builds only the patch mask used by copy_paste_mix for the same arguments.
LabelMask patch_mask(int height, int width, int grid, double ratio, std::uint64_t seed);

// Per-pixel select: mask ? src : dst.
template <typename T>
std::vector<T> apply_patch_mask(const LabelMask& mask, std::span<const T> src, std::span<const T> dst) {
    if (src.size() != mask.size() || dst.size() != mask.size()) {
        throw DataError("apply_patch_mask: field size does not match mask");
    }
    std::vector<T> out(dst.begin(), dst.end());
    for (std::size_t i = 0; i < out.size(); ++i)
        if (mask.labels[i]) out[i] = src[i];
    return out;
}

// Tight box around class_id with each edge shifted by jitter; the shifted box
// always keeps the tight box's center pixel.
BoxPrompt tight_box(const LabelMask& label, int class_id);
BoxPrompt synth_box_prompt(const LabelMask& label, int class_id, double jitter_frac, std::uint64_t seed);
BoxPrompt full_image_box(int height, int width, int class_id);

// One box per foreground class present in label; when no foreground class is
// present, full-image boxes for every foreground class.
std::vector<BoxPrompt> prompts_for_mask(const LabelMask& label, int classes, double jitter_frac, std::uint64_t seed);

}  // namespace uncol
