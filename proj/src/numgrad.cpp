// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/numgrad.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace uncol::ng {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_mat(const Array& a) {
    return ConstMap(a.data.data(), static_cast<Eigen::Index>(a.rows()),
                    static_cast<Eigen::Index>(a.cols()));
}

MutMap as_mat(Array& a) {
    return MutMap(a.data.data(), static_cast<Eigen::Index>(a.rows()),
                  static_cast<Eigen::Index>(a.cols()));
}

std::string dims2(const Array& a, const Array& b) {
    return a.shape_str() + " vs " + b.shape_str();
}

// Broadcast mode of b onto a: equal, row vector, column vector, or scalar.
enum class Bcast { Same, Row, Col, Scalar, Invalid };

Bcast broadcast_mode(const Array& a, const Array& b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::Same;
    if (b.rows() == 1 && b.cols() == 1) return Bcast::Scalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::Row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::Col;
    return Bcast::Invalid;
}

std::size_t bindex(Bcast mode, std::size_t r, std::size_t c, std::size_t cols) {
    switch (mode) {
        case Bcast::Same: return r * cols + c;
        case Bcast::Row: return c;
        case Bcast::Col: return r;
        default: return 0;
    }
}

}  // namespace

// ---------------------------------------------------------------- Array

Array::Array(std::vector<std::size_t> shp, std::vector<double> values)
    : shape(std::move(shp)), data(std::move(values)) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    if (n != data.size()) {
        throw std::invalid_argument("Array: shape " + shape_str() + " does not match " +
                                    std::to_string(data.size()) + " values");
    }
}

Array Array::row(std::vector<double> values) {
    const auto n = values.size();
    return Array({1, n}, std::move(values));
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Array({rows, cols}, std::move(values));
}

std::size_t Array::rows() const noexcept {
    if (shape.size() < 2) return shape.empty() ? 0 : 1;
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
    return r;
}

std::size_t Array::cols() const noexcept { return shape.empty() ? 0 : shape.back(); }

bool Array::same_shape(const Array& other) const noexcept {
    return rows() == other.rows() && cols() == other.cols();
}

bool Array::all_finite() const noexcept {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string Array::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

std::string_view op_name(OpKind kind) noexcept {
    switch (kind) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Constant: return "constant";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Scale: return "scale";
        case OpKind::MatMul: return "matmul";
        case OpKind::Linear: return "linear";
        case OpKind::Relu: return "relu";
        case OpKind::Softmax: return "softmax";
        case OpKind::Log: return "log";
        case OpKind::Exp: return "exp";
        case OpKind::LayerNorm: return "layernorm";
        case OpKind::Mean: return "mean";
        case OpKind::Sum: return "sum";
        case OpKind::Mse: return "mse";
        case OpKind::Gather: return "gather";
        case OpKind::Concat: return "concat";
        case OpKind::Attention: return "attention";
    }
    return "?";
}

ShapeError::ShapeError(OpKind op, const std::string& dims)
    : std::invalid_argument(std::string(op_name(op)) + ": incompatible shapes " + dims),
      op_(op),
      dims_(dims) {}

// ---------------------------------------------------------------- Graph

const Array& Graph::val(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
}

const Array& Graph::value(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("Graph::value: unknown node");
    return val(v.id);
}

std::uint64_t Graph::kink_signature() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&](std::uint64_t v) { h = (h ^ v) * 0x100000001b3ull; };
    for (std::uint32_t id = 0; id < nodes_.size(); ++id) {
        const Node& n = nodes_[id];
        if (n.kind != OpKind::Relu && n.kind != OpKind::Log) continue;
        const double edge = n.kind == OpKind::Relu ? 0.0 : kLogClamp;
        mix(id);
        for (double v : val(n.inputs[0]).data) mix(v > edge ? 1 : 0);
    }
    return h;
}

double Graph::scalar(Var v) const {
    const Array& a = value(v);
    if (a.size() != 1) throw std::invalid_argument("Graph::scalar: node is not 1x1");
    return a.data[0];
}

bool Graph::has_grad(Var v) const { return !nodes_.at(v.id).grad.data.empty(); }

Array Graph::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (!n.grad.data.empty()) return n.grad;
    const Array& x = val(v.id);
    return Array(x.shape, std::vector<double>(x.size(), 0.0));
}

Var Graph::leaf(const std::string& name) const {
    auto it = leaves_.find(name);
    if (it == leaves_.end()) throw std::out_of_range("Graph::leaf: no leaf named " + name);
    return Var{it->second};
}

Array Graph::grad_of(const std::string& name) const { return grad(leaf(name)); }

std::vector<std::string> Graph::leaf_names() const {
    std::vector<std::string> out;
    out.reserve(leaves_.size());
    for (const auto& [k, _] : leaves_) out.push_back(k);
    return out;
}

Var Graph::push(Node node) {
    if (!record_) node.needs_grad = false;
    nodes_.push_back(std::move(node));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::param(std::string name, Array value) {
    Node n;
    n.kind = OpKind::Leaf;
    n.value = std::move(value);
    n.needs_grad = true;
    n.name = name;
    Var v = push(std::move(n));
    leaves_[name] = v.id;
    return v;
}

Var Graph::param_ref(std::string name, const Array& value) {
    Node n;
    n.kind = OpKind::Leaf;
    n.external = &value;
    n.needs_grad = true;
    n.name = name;
    Var v = push(std::move(n));
    leaves_[name] = v.id;
    return v;
}

Var Graph::constant(Array value) {
    Node n;
    n.kind = OpKind::Constant;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Graph::constant_ref(const Array& value) {
    Node n;
    n.kind = OpKind::Constant;
    n.external = &value;
    return push(std::move(n));
}

Var Graph::broadcast_binary(OpKind kind, Var a, Var b) {
    const Array& x = val(a.id);
    const Array& y = val(b.id);
    const Bcast mode = broadcast_mode(x, y);
    if (mode == Bcast::Invalid) throw ShapeError(kind, dims2(x, y));
    Node n;
    n.kind = kind;
    n.inputs = {a.id, b.id};
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.value = Array(x.shape, std::vector<double>(x.size()));
    const std::size_t R = x.rows(), C = x.cols();
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            const double u = x.data[r * C + c];
            const double w = y.data[bindex(mode, r, c, C)];
            double out = 0.0;
            if (kind == OpKind::Add) out = u + w;
            else if (kind == OpKind::Sub) out = u - w;
            else out = u * w;
            n.value.data[r * C + c] = out;
        }
    }
    return push(std::move(n));
}

Var Graph::add(Var a, Var b) { return broadcast_binary(OpKind::Add, a, b); }
Var Graph::sub(Var a, Var b) { return broadcast_binary(OpKind::Sub, a, b); }
Var Graph::mul(Var a, Var b) { return broadcast_binary(OpKind::Mul, a, b); }

Var Graph::scale(Var a, double s) {
    const Array& x = val(a.id);
    Node n;
    n.kind = OpKind::Scale;
    n.inputs = {a.id};
    n.needs_grad = nodes_[a.id].needs_grad;
    n.attr = s;
    n.value = x;
    for (auto& v : n.value.data) v *= s;
    return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
    const Array& x = val(a.id);
    const Array& y = val(b.id);
    if (x.cols() != y.rows()) throw ShapeError(OpKind::MatMul, dims2(x, y));
    Node n;
    n.kind = OpKind::MatMul;
    n.inputs = {a.id, b.id};
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.value = Array(x.rows(), y.cols());
    as_mat(n.value).noalias() = as_mat(x) * as_mat(y);
    return push(std::move(n));
}

Var Graph::linear(Var x, Var weight, Var bias) {
    const Array& in = val(x.id);
    const Array& w = val(weight.id);
    const Array& b = val(bias.id);
    if (in.cols() != w.rows() || b.size() != w.cols()) {
        throw ShapeError(OpKind::Linear, in.shape_str() + " * " + w.shape_str() + " + " + b.shape_str());
    }
    Node n;
    n.kind = OpKind::Linear;
    n.inputs = {x.id, weight.id, bias.id};
    n.needs_grad = nodes_[x.id].needs_grad || nodes_[weight.id].needs_grad || nodes_[bias.id].needs_grad;
    n.value = Array(in.rows(), w.cols());
    auto out = as_mat(n.value);
    out.noalias() = as_mat(in) * as_mat(w);
    const Eigen::Map<const Eigen::RowVectorXd> bv(b.data.data(), static_cast<Eigen::Index>(b.size()));
    out.rowwise() += bv;
    return push(std::move(n));
}

Var Graph::linear(Var x, Var weight) {
    const Array& in = val(x.id);
    const Array& w = val(weight.id);
    if (in.cols() != w.rows()) throw ShapeError(OpKind::Linear, dims2(in, w));
    Node n;
    n.kind = OpKind::Linear;
    n.inputs = {x.id, weight.id};
    n.needs_grad = nodes_[x.id].needs_grad || nodes_[weight.id].needs_grad;
    n.value = Array(in.rows(), w.cols());
    as_mat(n.value).noalias() = as_mat(in) * as_mat(w);
    return push(std::move(n));
}

Var Graph::relu(Var a) {
    Node n;
    n.kind = OpKind::Relu;
    n.inputs = {a.id};
    n.needs_grad = nodes_[a.id].needs_grad;
    n.value = val(a.id);
    for (auto& v : n.value.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(n));
}

Var Graph::softmax(Var a, int axis) {
    const Array& x = val(a.id);
    if (axis != 0 && axis != 1) throw ShapeError(OpKind::Softmax, "axis " + std::to_string(axis));
    Node n;
    n.kind = OpKind::Softmax;
    n.inputs = {a.id};
    n.needs_grad = nodes_[a.id].needs_grad;
    n.axis = axis;
    n.value = x;
    const std::size_t R = x.rows(), C = x.cols();
    const std::size_t outer = axis == 1 ? R : C;
    const std::size_t inner = axis == 1 ? C : R;
    for (std::size_t o = 0; o < outer; ++o) {
        auto at = [&](std::size_t i) -> double& {
            return axis == 1 ? n.value.data[o * C + i] : n.value.data[i * C + o];
        };
        double mx = at(0);
        for (std::size_t i = 1; i < inner; ++i) mx = std::max(mx, at(i));
        double total = 0.0;
        for (std::size_t i = 0; i < inner; ++i) {
            at(i) = std::exp(at(i) - mx);
            total += at(i);
        }
        for (std::size_t i = 0; i < inner; ++i) at(i) /= total;
    }
    return push(std::move(n));
}

Var Graph::log(Var a) {
    Node n;
    n.kind = OpKind::Log;
    n.inputs = {a.id};
    n.needs_grad = nodes_[a.id].needs_grad;
    n.value = val(a.id);
    for (auto& v : n.value.data) v = std::log(std::max(v, kLogClamp));
    return push(std::move(n));
}

Var Graph::exp(Var a) {
    Node n;
    n.kind = OpKind::Exp;
    n.inputs = {a.id};
    n.needs_grad = nodes_[a.id].needs_grad;
    n.value = val(a.id);
    for (auto& v : n.value.data) v = std::exp(v);
    return push(std::move(n));
}

Var Graph::layernorm(Var x, Var gain, Var bias) {
    const Array& in = val(x.id);
    const Array& g = val(gain.id);
    const Array& b = val(bias.id);
    const std::size_t R = in.rows(), C = in.cols();
    if (g.size() != C || b.size() != C) {
        throw ShapeError(OpKind::LayerNorm, in.shape_str() + " gain " + g.shape_str() + " bias " + b.shape_str());
    }
    Node n;
    n.kind = OpKind::LayerNorm;
    n.inputs = {x.id, gain.id, bias.id};
    n.needs_grad = nodes_[x.id].needs_grad || nodes_[gain.id].needs_grad || nodes_[bias.id].needs_grad;
    n.value = Array(in.shape, std::vector<double>(in.size()));
    n.aux = Array(in.shape, std::vector<double>(in.size()));  // normalized input
    n.aux2 = Array(R, 1);                                      // 1 / sigma per row
    for (std::size_t r = 0; r < R; ++r) {
        const double* row = in.data.data() + r * C;
        double mu = 0.0;
        for (std::size_t c = 0; c < C; ++c) mu += row[c];
        mu /= static_cast<double>(C);
        double var = 0.0;
        for (std::size_t c = 0; c < C; ++c) var += (row[c] - mu) * (row[c] - mu);
        var /= static_cast<double>(C);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        n.aux2.data[r] = inv;
        for (std::size_t c = 0; c < C; ++c) {
            const double xh = (row[c] - mu) * inv;
            n.aux.data[r * C + c] = xh;
            n.value.data[r * C + c] = xh * g.data[c] + b.data[c];
        }
    }
    return push(std::move(n));
}

namespace {

Array reduce(const Array& x, int axis, bool average) {
    const std::size_t R = x.rows(), C = x.cols();
    if (axis == kAll) {
        double s = 0.0;
        for (double v : x.data) s += v;
        return Array::scalar(average ? s / static_cast<double>(x.size()) : s);
    }
    if (axis == 0) {
        Array out(1, C);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) out.data[c] += x.data[r * C + c];
        if (average)
            for (auto& v : out.data) v /= static_cast<double>(R);
        return out;
    }
    Array out(R, 1);
    for (std::size_t r = 0; r < R; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += x.data[r * C + c];
        out.data[r] = average ? s / static_cast<double>(C) : s;
    }
    return out;
}

}  // namespace

Var Graph::mean(Var a, int axis) {
    if (axis < kAll || axis > 1) throw ShapeError(OpKind::Mean, "axis " + std::to_string(axis));
    const Array& x = val(a.id);
    if (x.size() == 0) throw ShapeError(OpKind::Mean, x.shape_str());
    Node n;
    n.kind = OpKind::Mean;
    n.inputs = {a.id};
    n.needs_grad = nodes_[a.id].needs_grad;
    n.axis = axis;
    n.value = reduce(x, axis, true);
    return push(std::move(n));
}

Var Graph::sum(Var a, int axis) {
    if (axis < kAll || axis > 1) throw ShapeError(OpKind::Sum, "axis " + std::to_string(axis));
    Node n;
    n.kind = OpKind::Sum;
    n.inputs = {a.id};
    n.needs_grad = nodes_[a.id].needs_grad;
    n.axis = axis;
    n.value = reduce(val(a.id), axis, false);
    return push(std::move(n));
}

Var Graph::mse(Var a, Var b) {
    const Array& x = val(a.id);
    const Array& y = val(b.id);
    if (!x.same_shape(y) || x.size() == 0) throw ShapeError(OpKind::Mse, dims2(x, y));
    Node n;
    n.kind = OpKind::Mse;
    n.inputs = {a.id, b.id};
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x.data[i] - y.data[i];
        s += d * d;
    }
    n.value = Array::scalar(s / static_cast<double>(x.size()));
    return push(std::move(n));
}

Var Graph::gather(Var a, std::vector<std::uint32_t> rows) {
    const Array& x = val(a.id);
    const std::size_t C = x.cols();
    for (auto r : rows) {
        if (r >= x.rows()) throw ShapeError(OpKind::Gather, x.shape_str() + " row " + std::to_string(r));
    }
    Node n;
    n.kind = OpKind::Gather;
    n.inputs = {a.id};
    n.needs_grad = nodes_[a.id].needs_grad;
    n.value = Array(rows.size(), C);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(rows[i] * C), C,
                    n.value.data.begin() + static_cast<std::ptrdiff_t>(i * C));
    }
    n.index = std::move(rows);
    return push(std::move(n));
}

Var Graph::concat(std::span<const Var> parts, int axis) {
    if (parts.empty()) throw ShapeError(OpKind::Concat, "no inputs");
    if (axis != 0 && axis != 1) throw ShapeError(OpKind::Concat, "axis " + std::to_string(axis));
    Node n;
    n.kind = OpKind::Concat;
    n.axis = axis;
    const Array& first = val(parts[0].id);
    std::size_t R = first.rows(), C = first.cols();
    std::size_t total = 0;
    for (auto p : parts) {
        const Array& x = val(p.id);
        if (axis == 1 ? x.rows() != R : x.cols() != C) throw ShapeError(OpKind::Concat, dims2(first, x));
        total += axis == 1 ? x.cols() : x.rows();
        n.inputs.push_back(p.id);
        n.needs_grad = n.needs_grad || nodes_[p.id].needs_grad;
    }
    if (axis == 1) {
        n.value = Array(R, total);
        std::size_t off = 0;
        for (auto p : parts) {
            const Array& x = val(p.id);
            for (std::size_t r = 0; r < R; ++r)
                std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(r * x.cols()), x.cols(),
                            n.value.data.begin() + static_cast<std::ptrdiff_t>(r * total + off));
            off += x.cols();
        }
    } else {
        n.value = Array(total, C);
        std::size_t off = 0;
        for (auto p : parts) {
            const Array& x = val(p.id);
            std::copy(x.data.begin(), x.data.end(), n.value.data.begin() + static_cast<std::ptrdiff_t>(off));
            off += x.size();
        }
    }
    return push(std::move(n));
}

Var Graph::attention(Var q, Var k, Var v) {
    const Array& Q = val(q.id);
    const Array& K = val(k.id);
    const Array& V = val(v.id);
    if (Q.cols() != K.cols() || K.rows() != V.rows() || K.rows() == 0) {
        throw ShapeError(OpKind::Attention,
                         "q " + Q.shape_str() + " k " + K.shape_str() + " v " + V.shape_str());
    }
    Node n;
    n.kind = OpKind::Attention;
    n.inputs = {q.id, k.id, v.id};
    n.needs_grad = nodes_[q.id].needs_grad || nodes_[k.id].needs_grad || nodes_[v.id].needs_grad;
    n.attr = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
    n.aux = Array(Q.rows(), K.rows());
    auto P = as_mat(n.aux);
    P.noalias() = (as_mat(Q) * as_mat(K).transpose()) * n.attr;
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
        const double mx = P.row(r).maxCoeff();
        P.row(r) = (P.row(r).array() - mx).exp();
        P.row(r) /= P.row(r).sum();
    }
    n.value = Array(Q.rows(), V.cols());
    as_mat(n.value).noalias() = P * as_mat(V);
    return push(std::move(n));
}

// ---------------------------------------------------------------- backward

void Graph::accumulate(std::uint32_t id, const Array& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.data.empty()) {
        n.grad = g;
        n.grad.shape = val(id).shape;
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad.data[i] += g.data[i];
}

void Graph::accumulate_broadcast(std::uint32_t id, const Array& g, std::size_t rows, std::size_t cols) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    const Array& target = val(id);
    if (target.rows() == rows && target.cols() == cols) {
        accumulate(id, g);
        return;
    }
    Array red(target.shape, std::vector<double>(target.size(), 0.0));
    const Bcast mode = broadcast_mode(Array(rows, cols), target);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) red.data[bindex(mode, r, c, cols)] += g.data[r * cols + c];
    accumulate(id, red);
}

void Graph::backward(Var loss) {
    if (loss.id >= nodes_.size()) throw std::out_of_range("Graph::backward: unknown node");
    const Array& l = val(loss.id);
    if (l.size() != 1) {
        throw std::invalid_argument("backward: loss node must be scalar, got " + l.shape_str());
    }
    for (auto& n : nodes_) n.grad = Array();
    if (!nodes_[loss.id].needs_grad) return;
    nodes_[loss.id].grad = Array(l.shape, {1.0});
    for (std::uint32_t id = loss.id + 1; id-- > 0;) {
        if (!nodes_[id].needs_grad || nodes_[id].grad.data.empty()) continue;
        backprop_node(id);
    }
}

void Graph::backprop_node(std::uint32_t id) {
    // Copy the small bits we need; accumulate() may touch other nodes only.
    const Node& n = nodes_[id];
    const Array& G = n.grad;
    const auto& in = n.inputs;
    switch (n.kind) {
        case OpKind::Leaf:
        case OpKind::Constant:
            return;
        case OpKind::Add:
        case OpKind::Sub:
        case OpKind::Mul: {
            const Array& x = val(in[0]);
            const Array& y = val(in[1]);
            const std::size_t R = x.rows(), C = x.cols();
            const Bcast mode = broadcast_mode(x, y);
            if (n.kind == OpKind::Mul) {
                if (nodes_[in[0]].needs_grad) {
                    Array gx(x.shape, std::vector<double>(x.size()));
                    for (std::size_t r = 0; r < R; ++r)
                        for (std::size_t c = 0; c < C; ++c)
                            gx.data[r * C + c] = G.data[r * C + c] * y.data[bindex(mode, r, c, C)];
                    accumulate(in[0], gx);
                }
                if (nodes_[in[1]].needs_grad) {
                    Array gy(x.shape, std::vector<double>(x.size()));
                    for (std::size_t i = 0; i < x.size(); ++i) gy.data[i] = G.data[i] * x.data[i];
                    accumulate_broadcast(in[1], gy, R, C);
                }
            } else {
                accumulate(in[0], G);
                if (nodes_[in[1]].needs_grad) {
                    if (n.kind == OpKind::Add) {
                        accumulate_broadcast(in[1], G, R, C);
                    } else {
                        Array neg = G;
                        for (auto& v : neg.data) v = -v;
                        accumulate_broadcast(in[1], neg, R, C);
                    }
                }
            }
            return;
        }
        case OpKind::Scale: {
            Array g = G;
            for (auto& v : g.data) v *= n.attr;
            accumulate(in[0], g);
            return;
        }
        case OpKind::MatMul:
        case OpKind::Linear: {
            const Array& x = val(in[0]);
            const Array& w = val(in[1]);
            if (nodes_[in[0]].needs_grad) {
                Array gx(x.shape, std::vector<double>(x.size()));
                as_mat(gx).noalias() = as_mat(G) * as_mat(w).transpose();
                accumulate(in[0], gx);
            }
            if (nodes_[in[1]].needs_grad) {
                Array gw(w.shape, std::vector<double>(w.size()));
                as_mat(gw).noalias() = as_mat(x).transpose() * as_mat(G);
                accumulate(in[1], gw);
            }
            if (in.size() == 3 && nodes_[in[2]].needs_grad) {
                Array gb = reduce(G, 0, false);
                gb.shape = val(in[2]).shape;
                accumulate(in[2], gb);
            }
            return;
        }
        case OpKind::Relu: {
            const Array& x = val(in[0]);
            Array g = G;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (!(x.data[i] > 0.0)) g.data[i] = 0.0;
            accumulate(in[0], g);
            return;
        }
        case OpKind::Softmax: {
            const Array& y = n.value;
            const std::size_t R = y.rows(), C = y.cols();
            Array g(y.shape, std::vector<double>(y.size()));
            if (n.axis == 1) {
                for (std::size_t r = 0; r < R; ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < C; ++c) dot += G.data[r * C + c] * y.data[r * C + c];
                    for (std::size_t c = 0; c < C; ++c)
                        g.data[r * C + c] = y.data[r * C + c] * (G.data[r * C + c] - dot);
                }
            } else {
                for (std::size_t c = 0; c < C; ++c) {
                    double dot = 0.0;
                    for (std::size_t r = 0; r < R; ++r) dot += G.data[r * C + c] * y.data[r * C + c];
                    for (std::size_t r = 0; r < R; ++r)
                        g.data[r * C + c] = y.data[r * C + c] * (G.data[r * C + c] - dot);
                }
            }
            accumulate(in[0], g);
            return;
        }
        case OpKind::Log: {
            const Array& x = val(in[0]);
            Array g = G;
            for (std::size_t i = 0; i < g.size(); ++i)
                g.data[i] = x.data[i] > kLogClamp ? g.data[i] / x.data[i] : 0.0;
            accumulate(in[0], g);
            return;
        }
        case OpKind::Exp: {
            Array g = G;
            for (std::size_t i = 0; i < g.size(); ++i) g.data[i] *= n.value.data[i];
            accumulate(in[0], g);
            return;
        }
        case OpKind::LayerNorm: {
            const Array& gain = val(in[1]);
            const Array& xh = n.aux;
            const std::size_t R = xh.rows(), C = xh.cols();
            if (nodes_[in[0]].needs_grad) {
                Array gx(xh.shape, std::vector<double>(xh.size()));
                for (std::size_t r = 0; r < R; ++r) {
                    double mean_d = 0.0, mean_dx = 0.0;
                    for (std::size_t c = 0; c < C; ++c) {
                        const double d = G.data[r * C + c] * gain.data[c];
                        mean_d += d;
                        mean_dx += d * xh.data[r * C + c];
                    }
                    mean_d /= static_cast<double>(C);
                    mean_dx /= static_cast<double>(C);
                    const double inv = n.aux2.data[r];
                    for (std::size_t c = 0; c < C; ++c) {
                        const double d = G.data[r * C + c] * gain.data[c];
                        gx.data[r * C + c] = inv * (d - mean_d - xh.data[r * C + c] * mean_dx);
                    }
                }
                accumulate(in[0], gx);
            }
            if (nodes_[in[1]].needs_grad) {
                Array gg(gain.shape, std::vector<double>(gain.size(), 0.0));
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < C; ++c) gg.data[c] += G.data[r * C + c] * xh.data[r * C + c];
                accumulate(in[1], gg);
            }
            if (nodes_[in[2]].needs_grad) {
                Array gb = reduce(G, 0, false);
                gb.shape = val(in[2]).shape;
                accumulate(in[2], gb);
            }
            return;
        }
        case OpKind::Mean:
        case OpKind::Sum: {
            const Array& x = val(in[0]);
            const std::size_t R = x.rows(), C = x.cols();
            const bool avg = n.kind == OpKind::Mean;
            Array g(x.shape, std::vector<double>(x.size()));
            for (std::size_t r = 0; r < R; ++r) {
                for (std::size_t c = 0; c < C; ++c) {
                    double v = 0.0;
                    double denom = 1.0;
                    if (n.axis == kAll) {
                        v = G.data[0];
                        denom = static_cast<double>(x.size());
                    } else if (n.axis == 0) {
                        v = G.data[c];
                        denom = static_cast<double>(R);
                    } else {
                        v = G.data[r];
                        denom = static_cast<double>(C);
                    }
                    g.data[r * C + c] = avg ? v / denom : v;
                }
            }
            accumulate(in[0], g);
            return;
        }
        case OpKind::Mse: {
            const Array& x = val(in[0]);
            const Array& y = val(in[1]);
            const double k = 2.0 * G.data[0] / static_cast<double>(x.size());
            Array g(x.shape, std::vector<double>(x.size()));
            for (std::size_t i = 0; i < x.size(); ++i) g.data[i] = k * (x.data[i] - y.data[i]);
            accumulate(in[0], g);
            if (nodes_[in[1]].needs_grad) {
                for (auto& v : g.data) v = -v;
                g.shape = y.shape;
                accumulate(in[1], g);
            }
            return;
        }
        case OpKind::Gather: {
            const Array& x = val(in[0]);
            const std::size_t C = x.cols();
            Array g(x.shape, std::vector<double>(x.size(), 0.0));
            for (std::size_t i = 0; i < n.index.size(); ++i) {
                double* dst = g.data.data() + n.index[i] * C;
                const double* src = G.data.data() + i * C;
                for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
            }
            accumulate(in[0], g);
            return;
        }
        case OpKind::Concat: {
            const std::size_t R = n.value.rows(), total = n.value.cols();
            std::size_t off = 0;
            for (auto pid : in) {
                const Array& x = val(pid);
                if (nodes_[pid].needs_grad) {
                    Array g(x.shape, std::vector<double>(x.size()));
                    if (n.axis == 1) {
                        for (std::size_t r = 0; r < R; ++r)
                            std::copy_n(G.data.begin() + static_cast<std::ptrdiff_t>(r * total + off), x.cols(),
                                        g.data.begin() + static_cast<std::ptrdiff_t>(r * x.cols()));
                    } else {
                        std::copy_n(G.data.begin() + static_cast<std::ptrdiff_t>(off), x.size(), g.data.begin());
                    }
                    accumulate(pid, g);
                }
                off += n.axis == 1 ? x.cols() : x.size();
            }
            return;
        }
        case OpKind::Attention: {
            const Array& Q = val(in[0]);
            const Array& K = val(in[1]);
            const Array& V = val(in[2]);
            const auto P = as_mat(n.aux);
            const auto g = as_mat(G);
            if (nodes_[in[2]].needs_grad) {
                Array gv(V.shape, std::vector<double>(V.size()));
                as_mat(gv).noalias() = P.transpose() * g;
                accumulate(in[2], gv);
            }
            const bool need_q = nodes_[in[0]].needs_grad;
            const bool need_k = nodes_[in[1]].needs_grad;
            if (!need_q && !need_k) return;
            RowMat dP = g * as_mat(V).transpose();
            RowMat dS(dP.rows(), dP.cols());
            for (Eigen::Index r = 0; r < dP.rows(); ++r) {
                const double dot = dP.row(r).dot(P.row(r));
                dS.row(r) = P.row(r).array() * (dP.row(r).array() - dot);
            }
            dS *= n.attr;
            if (need_q) {
                Array gq(Q.shape, std::vector<double>(Q.size()));
                as_mat(gq).noalias() = dS * as_mat(K);
                accumulate(in[0], gq);
            }
            if (need_k) {
                Array gk(K.shape, std::vector<double>(K.size()));
                as_mat(gk).noalias() = dS.transpose() * as_mat(Q);
                accumulate(in[1], gk);
            }
            return;
        }
    }
}

// ---------------------------------------------------------------- bundles

Var Bound::operator[](const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw std::out_of_range("parameter not bound: " + name);
    return it->second;
}

Bound bind(Graph& graph, const ParamBundle& params) {
    Bound b;
    for (const auto& [name, arr] : params) b.vars.emplace(name, graph.param_ref(name, arr));
    return b;
}

Bound bind_frozen(Graph& graph, const ParamBundle& params) {
    Bound b;
    for (const auto& [name, arr] : params) b.vars.emplace(name, graph.constant_ref(arr));
    return b;
}

ParamBundle collect_grads(const Graph& graph, const Bound& bound) {
    ParamBundle out;
    for (const auto& [name, v] : bound.vars) out.emplace(name, graph.grad(v));
    return out;
}

bool congruent(const ParamBundle& a, const ParamBundle& b) noexcept {
    if (a.size() != b.size()) return false;
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first || ia->second.shape != ib->second.shape) return false;
    }
    return true;
}

std::size_t scalar_count(const ParamBundle& params) noexcept {
    std::size_t n = 0;
    for (const auto& [_, a] : params) n += a.size();
    return n;
}

double evaluate(const ScalarFn& f, const ParamBundle& params) {
    Graph g(false);
    const Bound b = bind_frozen(g, params);
    return g.scalar(f(g, b));
}

GradCheckReport grad_check(const ScalarFn& f, const ParamBundle& params, double step, double tol) {
    if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
    Graph g;
    const Bound bound = bind(g, params);
    const Var loss = f(g, bound);
    const double f0 = g.scalar(loss);
    if (!std::isfinite(f0)) throw std::runtime_error("grad_check: objective is not finite at theta");
    g.backward(loss);
    const ParamBundle analytic = collect_grads(g, bound);

    GradCheckReport report;
    ParamBundle probe = params;
    for (auto& [name, arr] : probe) {
        const Array& ga = analytic.at(name);
        double worst = 0.0;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const double orig = arr.data[i];
            arr.data[i] = orig + step;
            const double fp = evaluate(f, probe);
            arr.data[i] = orig - step;
            const double fm = evaluate(f, probe);
            arr.data[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw std::runtime_error("grad_check: objective is not finite near " + name);
            }
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = ga.data[i];
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
        report.max_rel_error[name] = worst;
        if (worst >= report.worst) {
            report.worst = worst;
            report.worst_leaf = name;
        }
    }
    report.pass = report.worst <= tol;
    return report;
}

}  // namespace uncol::ng
