// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over a small fixed operation set. Every value
// is a dense row-major f64 array; most ops treat arrays as matrices and a
// rank-1 array of length n as a 1 x n row.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uncol::ng {

struct Array {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Array() = default;
    Array(std::size_t rows, std::size_t cols, double fill = 0.0)
        : shape{rows, cols}, data(rows * cols, fill) {}
    Array(std::vector<std::size_t> shp, std::vector<double> values);

    static Array scalar(double v) { return Array(1, 1, v); }
    static Array row(std::vector<double> values);
    static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rows() const noexcept;
    std::size_t cols() const noexcept;

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Array& other) const noexcept;
    bool all_finite() const noexcept;
    std::string shape_str() const;
    bool operator==(const Array&) const = default;
};

enum class OpKind : std::uint8_t {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,
    Scale,
    MatMul,
    Linear,
    Relu,
    Softmax,
    Log,
    Exp,
    LayerNorm,
    Mean,
    Sum,
    Mse,
    Gather,
    Concat,
    Attention,
};

std::string_view op_name(OpKind kind) noexcept;

// Raised for incompatible operand shapes; carries the op kind and dims.
class ShapeError : public std::invalid_argument {
public:
    ShapeError(OpKind op, const std::string& dims);
    OpKind op() const noexcept { return op_; }
    const std::string& dims() const noexcept { return dims_; }

private:
    OpKind op_;
    std::string dims_;
};

struct Var {
    std::uint32_t id = UINT32_MAX;
    bool valid() const noexcept { return id != UINT32_MAX; }
};

inline constexpr double kLogClamp = 1e-12;
inline constexpr double kLayerNormEps = 1e-5;

// Reduction axis for Mean/Sum: kAll -> 1x1, 0 -> column reduce (1 x cols),
// 1 -> row reduce (rows x 1).
inline constexpr int kAll = -1;

class Graph {
public:
    explicit Graph(bool record_grad = true) : record_(record_grad) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    // Trainable leaf. The _ref variants alias caller-owned storage, which must
    // outlive the graph and stay unmodified while it is in use.
    Var param(std::string name, Array value);
    Var param_ref(std::string name, const Array& value);
    Var constant(Array value);
    Var constant_ref(const Array& value);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var matmul(Var a, Var b);
    Var linear(Var x, Var weight, Var bias);
    Var linear(Var x, Var weight);
    Var relu(Var a);
    Var softmax(Var a, int axis = 1);
    Var log(Var a);
    Var exp(Var a);
    Var layernorm(Var x, Var gain, Var bias);
    Var mean(Var a, int axis = kAll);
    Var sum(Var a, int axis = kAll);
    Var mse(Var a, Var b);
    Var gather(Var a, std::vector<std::uint32_t> rows);
    Var concat(std::span<const Var> parts, int axis = 1);
    Var attention(Var q, Var k, Var v);

    // Reverse pass from a 1x1 node. Populates gradients of every ancestor that
    // depends on a trainable leaf.
    void backward(Var loss);

    const Array& value(Var v) const;
    double scalar(Var v) const;
    bool has_grad(Var v) const;
    // Gradient of v; zeros of value's shape when v received no gradient.
    Array grad(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }
    OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
    // Hash of which side of its kink every relu and clamped-log input lies on.
    // Two evaluations with equal signatures took the same piecewise branch.
    std::uint64_t kink_signature() const;

    // Leaf lookup by name; grad_of returns the accumulated gradient.
    Var leaf(const std::string& name) const;
    Array grad_of(const std::string& name) const;
    std::vector<std::string> leaf_names() const;

private:
    struct Node {
        OpKind kind = OpKind::Constant;
        std::vector<std::uint32_t> inputs;
        Array value;
        const Array* external = nullptr;
        Array grad;
        bool needs_grad = false;
        int axis = 0;
        double attr = 0.0;
        std::vector<std::uint32_t> index;
        Array aux;   // op-specific saved forward state
        Array aux2;
        std::string name;
    };

    const Array& val(std::uint32_t id) const;
    Var push(Node node);
    Var broadcast_binary(OpKind kind, Var a, Var b);
    void accumulate(std::uint32_t id, const Array& g);
    void accumulate_broadcast(std::uint32_t id, const Array& g, std::size_t rows, std::size_t cols);
    void backprop_node(std::uint32_t id);

    bool record_;
    std::vector<Node> nodes_;
    std::map<std::string, std::uint32_t> leaves_;
};

// Named trainable arrays, iterated in name order.
using ParamBundle = std::map<std::string, Array>;

struct Bound {
    std::map<std::string, Var> vars;
    Var operator[](const std::string& name) const;
};

// Registers every array of the bundle as a trainable leaf (aliasing storage).
Bound bind(Graph& graph, const ParamBundle& params);
// Registers every array as a constant (aliasing storage).
Bound bind_frozen(Graph& graph, const ParamBundle& params);
// Gradients of every bound leaf, keyed like the bundle.
ParamBundle collect_grads(const Graph& graph, const Bound& bound);

bool congruent(const ParamBundle& a, const ParamBundle& b) noexcept;
std::size_t scalar_count(const ParamBundle& params) noexcept;

// Builds a scalar loss node from bound parameters.
using ScalarFn = std::function<Var(Graph&, const Bound&)>;

struct GradCheckReport {
    std::map<std::string, double> max_rel_error;
    double worst = 0.0;
    std::string worst_leaf;
    bool pass = false;
};

// Central-difference check of every scalar parameter. Relative error uses
// the max(1, |analytic|, |numeric|) denominator.
GradCheckReport grad_check(const ScalarFn& f, const ParamBundle& params, double step, double tol);

double evaluate(const ScalarFn& f, const ParamBundle& params);

}  // namespace uncol::ng
