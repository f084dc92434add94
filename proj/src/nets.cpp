// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/nets.hpp"

#include "uncol/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

namespace uncol {

using ng::Array;
using ng::Bound;
using ng::Graph;
using ng::ParamBundle;
using ng::Var;

// ---------------------------------------------------------------- ProbMap

Array ProbMap::as_array() const {
    return Array::matrix(pixels(), static_cast<std::size_t>(classes), data);
}

ProbMap ProbMap::from_array(const Array& a, int height, int width) {
    if (a.rows() != static_cast<std::size_t>(height) * width) {
        throw std::invalid_argument("ProbMap::from_array: " + a.shape_str() + " does not cover " +
                                    std::to_string(height) + "x" + std::to_string(width));
    }
    ProbMap p;
    p.classes = static_cast<int>(a.cols());
    p.height = height;
    p.width = width;
    p.data = a.data;
    return p;
}

LabelMask argmax_labels(const ProbMap& p) {
    LabelMask out(p.height, p.width);
    for (std::size_t i = 0; i < p.pixels(); ++i) {
        int best = 0;
        for (int c = 1; c < p.classes; ++c)
            if (p.at(c, i) > p.at(best, i)) best = c;
        out.labels[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

int token_count(int height, int width, int patch) {
    if (patch <= 0 || height % patch != 0 || width % patch != 0) {
        throw std::invalid_argument("token_count: " + std::to_string(height) + "x" + std::to_string(width) +
                                    " is not divisible by patch " + std::to_string(patch));
    }
    return (height / patch) * (width / patch);
}

// ---------------------------------------------------------------- geometry

namespace {

struct Upsample {
    std::vector<std::uint32_t> index[4];
    Array weight[4];  // (H*W) x 1
};

struct GeometryKey {
    int h, w, patch, dim;
    auto operator<=>(const GeometryKey&) const = default;
};

class GeometryCache {
public:
    std::shared_ptr<const Array> positions(int h, int w, int patch, int dim) {
        std::lock_guard lock(mu_);
        auto& slot = pos_[GeometryKey{h, w, patch, dim}];
        if (!slot) slot = std::make_shared<const Array>(make_positions(h, w, patch, dim));
        return slot;
    }
    std::shared_ptr<const Upsample> upsample(int h, int w, int patch) {
        std::lock_guard lock(mu_);
        auto& slot = up_[GeometryKey{h, w, patch, 0}];
        if (!slot) slot = std::make_shared<const Upsample>(make_upsample(h, w, patch));
        return slot;
    }

private:
    static Array make_positions(int h, int w, int patch, int dim) {
        const int gh = h / patch, gw = w / patch;
        Array pos(static_cast<std::size_t>(gh * gw), static_cast<std::size_t>(dim));
        const int half = dim / 2;
        for (int r = 0; r < gh; ++r) {
            for (int c = 0; c < gw; ++c) {
                const std::size_t t = static_cast<std::size_t>(r * gw + c);
                for (int k = 0; k < dim; ++k) {
                    const bool use_row = k < half;
                    const int j = use_row ? k : k - half;
                    const int span = use_row ? half : dim - half;
                    const double freq = std::pow(64.0, -static_cast<double>(j / 2 * 2) / std::max(span, 1));
                    const double coord = use_row ? r : c;
                    const double v = (j % 2 == 0) ? std::sin(coord * freq) : std::cos(coord * freq);
                    pos(t, static_cast<std::size_t>(k)) = 0.5 * v;
                }
            }
        }
        return pos;
    }

    static Upsample make_upsample(int h, int w, int patch) {
        const int gh = h / patch, gw = w / patch;
        Upsample up;
        for (auto& wt : up.weight) wt = Array(static_cast<std::size_t>(h * w), 1);
        for (auto& ix : up.index) ix.resize(static_cast<std::size_t>(h * w));
        for (int y = 0; y < h; ++y) {
            const double fy = std::clamp((y + 0.5) / patch - 0.5, 0.0, static_cast<double>(gh - 1));
            const int y0 = static_cast<int>(std::floor(fy));
            const int y1 = std::min(y0 + 1, gh - 1);
            const double ay = fy - y0;
            for (int x = 0; x < w; ++x) {
                const double fx = std::clamp((x + 0.5) / patch - 0.5, 0.0, static_cast<double>(gw - 1));
                const int x0 = static_cast<int>(std::floor(fx));
                const int x1 = std::min(x0 + 1, gw - 1);
                const double ax = fx - x0;
                const std::size_t p = static_cast<std::size_t>(y * w + x);
                const int ids[4] = {y0 * gw + x0, y0 * gw + x1, y1 * gw + x0, y1 * gw + x1};
                const double wts[4] = {(1 - ay) * (1 - ax), (1 - ay) * ax, ay * (1 - ax), ay * ax};
                for (int k = 0; k < 4; ++k) {
                    up.index[k][p] = static_cast<std::uint32_t>(ids[k]);
                    up.weight[k].data[p] = wts[k];
                }
            }
        }
        return up;
    }

    std::mutex mu_;
    std::map<GeometryKey, std::shared_ptr<const Array>> pos_;
    std::map<GeometryKey, std::shared_ptr<const Upsample>> up_;
};

GeometryCache& geometry() {
    static GeometryCache cache;
    return cache;
}

Array patch_tokens(const ImageGrid& img, int patch) {
    const int gh = img.height / patch, gw = img.width / patch;
    Array t(static_cast<std::size_t>(gh * gw), static_cast<std::size_t>(patch * patch));
    for (int r = 0; r < gh; ++r)
        for (int c = 0; c < gw; ++c)
            for (int dy = 0; dy < patch; ++dy)
                for (int dx = 0; dx < patch; ++dx)
                    t(static_cast<std::size_t>(r * gw + c), static_cast<std::size_t>(dy * patch + dx)) =
                        img.at(r * patch + dy, c * patch + dx) - 0.5;
    return t;
}

constexpr int kPixelFeatures = 9;

// 3x3 replicate-padded neighbourhood per pixel plus optional extra columns.
Array pixel_features(const ImageGrid& img, const std::vector<BoxPrompt>* boxes, int classes) {
    const int extra = boxes ? classes - 1 : 0;
    const std::size_t cols = static_cast<std::size_t>(kPixelFeatures + extra);
    Array f(img.size(), cols);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const std::size_t p = static_cast<std::size_t>(y * img.width + x);
            int k = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = std::clamp(y + dy, 0, img.height - 1);
                    const int xx = std::clamp(x + dx, 0, img.width - 1);
                    f(p, static_cast<std::size_t>(k++)) = img.at(yy, xx) - 0.5;
                }
            if (boxes) {
                for (const BoxPrompt& b : *boxes)
                    if (b.contains(y, x)) f(p, static_cast<std::size_t>(kPixelFeatures + b.class_id - 1)) = 1.0;
            }
        }
    }
    return f;
}

void fill_normal(Array& a, Rng& rng, double stddev) {
    for (auto& v : a.data) v = stddev * rng.normal();
}

void add_linear(ParamBundle& p, Rng& rng, const std::string& name, int in, int out, double gain = 1.0,
                bool bias = true) {
    Array w(static_cast<std::size_t>(in), static_cast<std::size_t>(out));
    fill_normal(w, rng, gain / std::sqrt(static_cast<double>(in)));
    p[name + ".w"] = std::move(w);
    if (bias) p[name + ".b"] = Array(1, static_cast<std::size_t>(out), 0.0);
}

void add_layernorm(ParamBundle& p, const std::string& name, int dim) {
    p[name + ".g"] = Array(1, static_cast<std::size_t>(dim), 1.0);
    p[name + ".b"] = Array(1, static_cast<std::size_t>(dim), 0.0);
}

std::string block_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "enc.block%02d", i);
    return buf;
}

void add_encoder(ParamBundle& p, Rng& rng, const EncoderConfig& enc) {
    const int D = enc.dim;
    const double resid = 1.0 / std::sqrt(2.0 * enc.n_blocks);
    add_linear(p, rng, "enc.patch", enc.patch * enc.patch, D);
    for (int i = 0; i < enc.n_blocks; ++i) {
        const std::string b = block_name(i);
        add_layernorm(p, b + ".ln1", D);
        add_linear(p, rng, b + ".attn.q", D, D);
        add_linear(p, rng, b + ".attn.k", D, D);
        add_linear(p, rng, b + ".attn.v", D, D);
        add_linear(p, rng, b + ".attn.o", D, D, resid);
        add_layernorm(p, b + ".ln2", D);
        add_linear(p, rng, b + ".ffn.1", D, D * enc.ffn_mult, std::sqrt(2.0));
        add_linear(p, rng, b + ".ffn.2", D * enc.ffn_mult, D, resid);
    }
}

void add_decoder(ParamBundle& p, Rng& rng, int token_dim, int pixel_dim, int hidden, int classes) {
    add_linear(p, rng, "dec.tok", token_dim, hidden);
    add_linear(p, rng, "dec.pix", pixel_dim, hidden, 1.0, false);
    add_linear(p, rng, "dec.out", hidden, classes);
}

Var lin(Graph& g, const Bound& p, const std::string& name, Var x) {
    return g.linear(x, p[name + ".w"], p[name + ".b"]);
}

Var ln(Graph& g, const Bound& p, const std::string& name, Var x) {
    return g.layernorm(x, p[name + ".g"], p[name + ".b"]);
}

std::vector<Var> encoder_graph(Graph& g, const Bound& p, const EncoderConfig& enc, const ImageGrid& image) {
    token_count(image.height, image.width, enc.patch);
    const auto pos = geometry().positions(image.height, image.width, enc.patch, enc.dim);
    Var x = g.constant(patch_tokens(image, enc.patch));
    x = g.add(lin(g, p, "enc.patch", x), g.constant_ref(*pos));
    std::vector<Var> layers;
    layers.reserve(static_cast<std::size_t>(enc.n_blocks));
    for (int i = 0; i < enc.n_blocks; ++i) {
        const std::string b = block_name(i);
        Var a = ln(g, p, b + ".ln1", x);
        Var att = g.attention(lin(g, p, b + ".attn.q", a), lin(g, p, b + ".attn.k", a), lin(g, p, b + ".attn.v", a));
        x = g.add(x, lin(g, p, b + ".attn.o", att));
        Var f = g.relu(lin(g, p, b + ".ffn.1", ln(g, p, b + ".ln2", x)));
        x = g.add(x, lin(g, p, b + ".ffn.2", f));
        layers.push_back(x);
    }
    return layers;
}

Var decoder_graph(Graph& g, const Bound& p, const ImageGrid& image, int patch, Var tokens, Array pixfeat) {
    const auto up = geometry().upsample(image.height, image.width, patch);
    Var t = lin(g, p, "dec.tok", tokens);
    Var upsampled;
    for (int k = 0; k < 4; ++k) {
        Var term = g.mul(g.gather(t, up->index[k]), g.constant_ref(up->weight[k]));
        upsampled = k == 0 ? term : g.add(upsampled, term);
    }
    Var pix = g.linear(g.constant(std::move(pixfeat)), p["dec.pix.w"]);
    Var hidden = g.relu(g.add(upsampled, pix));
    return lin(g, p, "dec.out", hidden);
}

}  // namespace

// ---------------------------------------------------------------- init

ParamBundle init_student(const StudentConfig& config, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x57D));
    ParamBundle p;
    const int D = config.encoder.dim;
    const int DT = config.teacher_dim;
    add_encoder(p, rng, config.encoder);
    add_layernorm(p, "adapter.ln", D);
    add_linear(p, rng, "adapter.q", D, D);
    add_linear(p, rng, "adapter.k", DT, D);
    add_linear(p, rng, "adapter.v", DT, D, 0.5);
    for (const auto& name : {kPsiVisual, kPsiSemantic}) {
        add_linear(p, rng, name + ".1", D, DT, std::sqrt(2.0));
        add_linear(p, rng, name + ".2", DT, DT);
    }
    add_decoder(p, rng, D, kPixelFeatures, config.decoder_hidden, config.classes);
    return p;
}

ParamBundle init_teacher(const TeacherConfig& config, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x7EAC));
    ParamBundle p;
    const int D = config.encoder.dim;
    const int fg = config.classes - 1;
    add_encoder(p, rng, config.encoder);
    add_linear(p, rng, "prompt.dense", fg, D, 1.0, false);
    add_linear(p, rng, "prompt.sparse", 5 + fg, D);
    add_layernorm(p, "fuse.ln1", D);
    add_linear(p, rng, "fuse.q", D, D);
    add_linear(p, rng, "fuse.k", D, D);
    add_linear(p, rng, "fuse.v", D, D);
    add_linear(p, rng, "fuse.o", D, D, 0.5);
    add_layernorm(p, "fuse.ln2", D);
    add_linear(p, rng, "fuse.ffn.1", D, 2 * D, std::sqrt(2.0));
    add_linear(p, rng, "fuse.ffn.2", 2 * D, D, 0.5);
    add_decoder(p, rng, D, kPixelFeatures + fg, config.decoder_hidden, config.classes);
    return p;
}

std::uint64_t param_hash(const ParamBundle& params) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    auto feed = [&h](const void* data, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001B3ull;
        }
    };
    for (const auto& [name, arr] : params) {
        feed(name.data(), name.size());
        for (auto d : arr.shape) feed(&d, sizeof d);
        feed(arr.data.data(), arr.data.size() * sizeof(double));
    }
    return h;
}

// ---------------------------------------------------------------- student

Var project(Graph& g, const Bound& p, const std::string& prefix, Var x) {
    return lin(g, p, prefix + ".2", g.relu(lin(g, p, prefix + ".1", x)));
}

StudentGraph student_graph(Graph& g, const Bound& p, const StudentConfig& config, const ImageGrid& image,
                           const Array* kv) {
    StudentGraph out;
    out.layers = encoder_graph(g, p, config.encoder, image);
    const Var h_last = out.layers.back();
    // Detached copy: self-conditioning never routes gradient into psi'.
    out.kv_self = g.constant(g.value(project(g, p, kPsiSemantic, h_last)));
    Var kv_node = out.kv_self;
    if (kv) {
        if (kv->cols() != static_cast<std::size_t>(config.teacher_dim)) {
            throw ng::ShapeError(ng::OpKind::Attention,
                                 "adapter key/value width " + std::to_string(kv->cols()) + " expected " +
                                     std::to_string(config.teacher_dim));
        }
        kv_node = g.constant_ref(*kv);
    }
    const Var q = lin(g, p, "adapter.q", ln(g, p, "adapter.ln", h_last));
    out.adapter_attention = g.attention(q, lin(g, p, "adapter.k", kv_node), lin(g, p, "adapter.v", kv_node));
    out.fused = g.add(h_last, out.adapter_attention);
    out.logits = decoder_graph(g, p, image, config.encoder.patch, out.fused, pixel_features(image, nullptr, 0));
    out.probs = g.softmax(out.logits, 1);
    return out;
}

StudentOutputs StudentModel::forward(const ImageGrid& image, const Array* kv) const {
    Graph g(false);
    const Bound b = ng::bind_frozen(g, params);
    const StudentGraph sg = student_graph(g, b, config, image, kv);
    StudentOutputs out;
    for (Var v : sg.layers) out.layers.push_back(g.value(v));
    out.kv_self = g.value(sg.kv_self);
    out.fused = g.value(sg.fused);
    out.probs = ProbMap::from_array(g.value(sg.probs), image.height, image.width);
    return out;
}

// ---------------------------------------------------------------- teacher

void validate_prompts(std::span<const BoxPrompt> prompts, int classes, int height, int width) {
    std::vector<bool> seen(static_cast<std::size_t>(classes), false);
    for (const BoxPrompt& b : prompts) {
        if (b.class_id < 1 || b.class_id >= classes) {
            throw std::invalid_argument("prompt: class " + std::to_string(b.class_id) + " is not a foreground class");
        }
        if (!b.valid_for(height, width)) {
            throw std::invalid_argument("prompt: box (" + std::to_string(b.y0) + "," + std::to_string(b.x0) + "," +
                                        std::to_string(b.y1) + "," + std::to_string(b.x1) + ") invalid for " +
                                        std::to_string(height) + "x" + std::to_string(width));
        }
        if (seen[static_cast<std::size_t>(b.class_id)]) {
            throw std::invalid_argument("prompt: duplicate box for class " + std::to_string(b.class_id));
        }
        seen[static_cast<std::size_t>(b.class_id)] = true;
    }
}

std::vector<Var> teacher_encoder_graph(Graph& g, const Bound& p, const TeacherConfig& config,
                                       const ImageGrid& image) {
    return encoder_graph(g, p, config.encoder, image);
}

TeacherGraph teacher_graph(Graph& g, const Bound& p, const TeacherConfig& config, const ImageGrid& image,
                           std::span<const BoxPrompt> prompts) {
    validate_prompts(prompts, config.classes, image.height, image.width);
    const int fg = config.classes - 1;
    const int patch = config.encoder.patch;
    const int gw = image.width / patch;
    TeacherGraph out;
    out.layers = encoder_graph(g, p, config.encoder, image);
    const std::size_t N = static_cast<std::size_t>(token_count(image.height, image.width, patch));

    // Dense prompt: per-token fraction of the patch covered by each class box.
    Array dense(N, static_cast<std::size_t>(fg));
    Array sparse(static_cast<std::size_t>(fg), static_cast<std::size_t>(5 + fg));
    for (int c = 0; c < fg; ++c) sparse(static_cast<std::size_t>(c), static_cast<std::size_t>(5 + c)) = 1.0;
    for (const BoxPrompt& b : prompts) {
        const std::size_t c = static_cast<std::size_t>(b.class_id - 1);
        sparse(c, 0) = 1.0;
        sparse(c, 1) = static_cast<double>(b.y0) / image.height;
        sparse(c, 2) = static_cast<double>(b.x0) / image.width;
        sparse(c, 3) = static_cast<double>(b.y1) / image.height;
        sparse(c, 4) = static_cast<double>(b.x1) / image.width;
        for (std::size_t t = 0; t < N; ++t) {
            const int ty = static_cast<int>(t) / gw * patch, tx = static_cast<int>(t) % gw * patch;
            const int oy = std::max(0, std::min(ty + patch, b.y1) - std::max(ty, b.y0));
            const int ox = std::max(0, std::min(tx + patch, b.x1) - std::max(tx, b.x0));
            dense(t, c) = static_cast<double>(oy * ox) / (patch * patch);
        }
    }
    const Var prompt_tokens = lin(g, p, "prompt.sparse", g.constant(std::move(sparse)));
    Var q0 = g.add(out.layers.back(), g.linear(g.constant(std::move(dense)), p["prompt.dense.w"]));
    const Var a = ln(g, p, "fuse.ln1", q0);
    const Var att = g.attention(lin(g, p, "fuse.q", a), lin(g, p, "fuse.k", prompt_tokens),
                                lin(g, p, "fuse.v", prompt_tokens));
    Var z = g.add(q0, lin(g, p, "fuse.o", att));
    const Var f = g.relu(lin(g, p, "fuse.ffn.1", ln(g, p, "fuse.ln2", z)));
    out.z_fuse = g.add(z, lin(g, p, "fuse.ffn.2", f));

    const std::vector<BoxPrompt> boxes(prompts.begin(), prompts.end());
    const Var logits =
        decoder_graph(g, p, image, patch, out.z_fuse, pixel_features(image, &boxes, config.classes));
    out.probs = g.softmax(logits, 1);
    return out;
}

TeacherModel::TeacherModel(TeacherConfig config, ParamBundle params)
    : config_(config), params_(std::move(params)) {}

TeacherOutputs TeacherModel::forward(const ImageGrid& image, std::span<const BoxPrompt> prompts) const {
    Graph g(false);
    const Bound b = ng::bind_frozen(g, params_);
    const TeacherGraph tg = teacher_graph(g, b, config_, image, prompts);
    TeacherOutputs out;
    for (Var v : tg.layers) out.layers.push_back(g.value(v));
    out.z_fuse = g.value(tg.z_fuse);
    out.probs = ProbMap::from_array(g.value(tg.probs), image.height, image.width);
    return out;
}

std::vector<Array> TeacherModel::encode(const ImageGrid& image) const {
    Graph g(false);
    const Bound b = ng::bind_frozen(g, params_);
    std::vector<Array> out;
    for (Var v : teacher_encoder_graph(g, b, config_, image)) out.push_back(g.value(v));
    return out;
}

// ---------------------------------------------------------------- EMA

void ema_update(ParamBundle& ema, const ParamBundle& student, double momentum) {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("ema_update: momentum must lie in [0, 1)");
    if (!ng::congruent(ema, student)) throw std::invalid_argument("ema_update: parameter bundles are not congruent");
    auto it = student.begin();
    for (auto& [name, arr] : ema) {
        const Array& s = (it++)->second;
        for (std::size_t i = 0; i < arr.size(); ++i)
            arr.data[i] = momentum * arr.data[i] + (1.0 - momentum) * s.data[i];
    }
}

}  // namespace uncol
