// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace uncol {

using nlohmann::json;

namespace {

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 4);
    }
    void f64(double v) {
        const auto u = std::bit_cast<std::uint64_t>(v);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
        bytes(b, 8);
    }
    void finish() {
        out_.flush();
        if (!out_) throw IoError("write to '" + path_.string() + "' failed");
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open '" + path.string() + "'");
    }
    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) throw IoError("'" + path_.string() + "' is truncated");
    }
    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    double f64() {
        unsigned char b[8];
        bytes(b, 8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return std::bit_cast<double>(u);
    }
    void expect_end() {
        if (in_.peek() != std::char_traits<char>::eof()) throw IoError("'" + path_.string() + "' has trailing bytes");
    }

private:
    std::filesystem::path path_;
    std::ifstream in_;
};

void check_magic(Reader& r, const char* magic, const std::filesystem::path& path) {
    char m[4];
    r.bytes(m, 4);
    if (std::memcmp(m, magic, 4) != 0) throw IoError("'" + path.string() + "' is not a " + magic + " container");
}

std::filesystem::path with_suffix(const std::filesystem::path& p, const char* suffix) {
    return std::filesystem::path(p.string() + suffix);
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

json domain_to_json(const DomainParams& p) {
    return {{"max_shapes", p.max_shapes},   {"class_means", p.class_means},
            {"noise_std", p.noise_std},     {"deform_amp", p.deform_amp},
            {"intensity_jitter", p.intensity_jitter},
            {"radius_min", p.radius_min},   {"radius_max", p.radius_max}};
}

DomainParams domain_from_json(const json& j) {
    DomainParams p;
    try {
        p.max_shapes = j.at("max_shapes").get<int>();
        p.class_means = j.at("class_means").get<std::vector<double>>();
        p.noise_std = j.at("noise_std").get<double>();
        p.deform_amp = j.at("deform_amp").get<double>();
        p.intensity_jitter = j.at("intensity_jitter").get<double>();
        p.radius_min = j.at("radius_min").get<double>();
        p.radius_max = j.at("radius_max").get<double>();
    } catch (const json::exception& e) {
        throw IoError(std::string("domain params: ") + e.what());
    }
    return p;
}

void write_scene(const std::filesystem::path& path, const Scene& scene) {
    Writer w(path);
    w.bytes("UNCL", 4);
    w.u32(kSceneFormatVersion);
    w.u32(static_cast<std::uint32_t>(scene.image.height));
    w.u32(static_cast<std::uint32_t>(scene.image.width));
    w.u32(static_cast<std::uint32_t>(scene.classes));
    for (double v : scene.image.pixels) w.f64(v);
    w.bytes(scene.label.labels.data(), scene.label.labels.size());
    w.finish();
    const json side = {{"seed", scene.seed}, {"classes", scene.classes}, {"params", domain_to_json(scene.params)}};
    write_text(with_suffix(path, ".json"), side.dump(2) + "\n");
}

Scene read_scene(const std::filesystem::path& path) {
    Reader r(path);
    check_magic(r, "UNCL", path);
    const std::uint32_t version = r.u32();
    if (version != kSceneFormatVersion) throw IoError("'" + path.string() + "': unsupported version " + std::to_string(version));
    Scene s;
    const int H = static_cast<int>(r.u32()), W = static_cast<int>(r.u32());
    s.classes = static_cast<int>(r.u32());
    if (H <= 0 || W <= 0 || H > 65536 || W > 65536) throw IoError("'" + path.string() + "': bad dimensions");
    s.image = ImageGrid(H, W);
    for (double& v : s.image.pixels) v = r.f64();
    s.label = LabelMask(H, W);
    r.bytes(s.label.labels.data(), s.label.labels.size());
    r.expect_end();
    const json side = json::parse(read_text(with_suffix(path, ".json")));
    s.seed = side.at("seed").get<std::uint64_t>();
    s.params = domain_from_json(side.at("params"));
    return s;
}

void write_fusion(const std::filesystem::path& path, const FusionResult& f) {
    Writer w(path);
    w.bytes("UNCF", 4);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(f.p_tilde.height));
    w.u32(static_cast<std::uint32_t>(f.p_tilde.width));
    w.u32(static_cast<std::uint32_t>(f.p_tilde.classes));
    for (double v : f.p_tilde.data) w.f64(v);
    for (std::size_t i = 0; i < f.y_tilde.labels.size(); ++i) {
        const std::uint8_t b = f.omega_star.bits[i] ? f.y_tilde.labels[i] : 255;
        w.bytes(&b, 1);
    }
    for (double v : f.weights) w.f64(v);
    w.finish();
}

FusionResult read_fusion(const std::filesystem::path& path) {
    Reader r(path);
    check_magic(r, "UNCF", path);
    if (r.u32() != 1) throw IoError("'" + path.string() + "': unsupported version");
    const int H = static_cast<int>(r.u32()), W = static_cast<int>(r.u32()), C = static_cast<int>(r.u32());
    FusionResult f;
    f.p_tilde = ProbMap(C, H, W);
    for (double& v : f.p_tilde.data) v = r.f64();
    f.y_tilde = LabelMask(H, W);
    f.omega_star = ConfMask{H, W, std::vector<std::uint8_t>(static_cast<std::size_t>(H) * W, 0)};
    for (std::size_t i = 0; i < f.y_tilde.labels.size(); ++i) {
        std::uint8_t b;
        r.bytes(&b, 1);
        if (b != 255) {
            f.y_tilde.labels[i] = b;
            f.omega_star.bits[i] = 1;
        }
    }
    f.weights.resize(static_cast<std::size_t>(H) * W);
    for (double& v : f.weights) v = r.f64();
    r.expect_end();
    return f;
}

void save_checkpoint(const std::filesystem::path& stem, const CheckpointFile& ck) {
    const auto bin = with_suffix(stem, ".bin");
    Writer w(bin);
    json arrays = json::array();
    std::size_t offset = 0;
    for (const auto& [group, bundle] : ck.groups) {
        for (const auto& [name, a] : bundle) {
            arrays.push_back({{"group", group}, {"name", name}, {"shape", a.shape}, {"offset", offset}});
            for (double v : a.data) w.f64(v);
            offset += a.size();
        }
    }
    w.finish();
    json manifest = {{"format", "uncol-checkpoint"}, {"version", 1}, {"scalars", offset}, {"arrays", arrays},
                     {"meta", ck.meta}};
    write_text(with_suffix(stem, ".json"), manifest.dump(2) + "\n");
}

CheckpointFile load_checkpoint(const std::filesystem::path& stem) {
    json manifest;
    try {
        manifest = json::parse(read_text(with_suffix(stem, ".json")));
    } catch (const json::exception& e) {
        throw IoError("checkpoint manifest '" + stem.string() + ".json': " + e.what());
    }
    if (manifest.value("format", "") != "uncol-checkpoint") throw IoError("'" + stem.string() + ".json' is not a checkpoint manifest");
    CheckpointFile ck;
    ck.meta = manifest.value("meta", json::object());
    Reader r(with_suffix(stem, ".bin"));
    for (const auto& e : manifest.at("arrays")) {
        ng::Array a;
        a.shape = e.at("shape").get<std::vector<std::size_t>>();
        std::size_t n = 1;
        for (auto d : a.shape) n *= d;
        a.data.resize(n);
        for (double& v : a.data) v = r.f64();
        ck.groups[e.at("group").get<std::string>()][e.at("name").get<std::string>()] = std::move(a);
    }
    r.expect_end();
    return ck;
}

}  // namespace uncol
