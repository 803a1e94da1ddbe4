// Recorded dense-matrix computation with exact reverse-mode gradients.
//
// A Graph is an append-only tape: every primitive op evaluates eagerly,
// stores its output, and remembers enough to compute its vector-Jacobian
// product. Inputs of node i always have ids < i, so a single reverse sweep
// over the tape is a valid topological order.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "milpool/matrix.hpp"

namespace milpool {

/// Lower clamp applied inside log().
inline constexpr double kLogEpsilon = 1e-7;

struct NodeId {
    std::uint32_t index = 0;
    friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

enum class Op : std::uint8_t {
    Constant,
    Parameter,
    MatMul,
    MatMulNT,
    Transpose,
    Add,
    Sub,
    Mul,
    AddRow,
    Affine,
    ScaleBy,
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Abs,
    Pow,
    Reciprocal,
    RowSoftmax,
    ColMean,
    ColSum,
    ColMax,
    WeightedSum,
    Dot,
    SelectRow,
    Element,
    Sum,
};

/// Gradients of the scalar output with respect to every parameter node.
class Gradients {
public:
    const Matrix& at(NodeId id) const {
        auto it = grads_.find(id);
        if (it == grads_.end()) throw Error("no gradient for node " + std::to_string(id.index));
        return it->second;
    }
    bool contains(NodeId id) const { return grads_.count(id) != 0; }
    std::size_t size() const { return grads_.size(); }
    auto begin() const { return grads_.begin(); }
    auto end() const { return grads_.end(); }

    void set(NodeId id, Matrix g) { grads_.insert_or_assign(id, std::move(g)); }

private:
    std::map<NodeId, Matrix> grads_;
};

class Graph {
public:
    Graph() { nodes_.reserve(64); }

    NodeId constant(Matrix value) { return push(Op::Constant, {}, {}, std::move(value)); }

    NodeId parameter(Matrix value) {
        NodeId id = push(Op::Parameter, {}, {}, std::move(value));
        params_.push_back(id);
        return id;
    }

    const Matrix& value(NodeId id) const { return node(id).value; }
    Op op(NodeId id) const { return node(id).op; }
    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<NodeId>& parameters() const noexcept { return params_; }

    /// Winning row per column recorded by col_max().
    const std::vector<std::size_t>& argmax(NodeId id) const {
        const Node& n = node(id);
        if (n.op != Op::ColMax) throw Error("argmax() on a node that is not col_max");
        return n.index;
    }

    // ---- primitive ops ------------------------------------------------------

    NodeId matmul(NodeId a, NodeId b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        if (A.cols() != B.rows()) {
            throw ShapeError("matmul " + A.shape_string() + " * " + B.shape_string());
        }
        return push(Op::MatMul, a, b, multiply(A, B));
    }

    /// a * b^T without materializing the transpose.
    NodeId matmul_nt(NodeId a, NodeId b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        if (A.cols() != B.cols()) {
            throw ShapeError("matmul_nt " + A.shape_string() + " * T(" + B.shape_string() + ")");
        }
        return push(Op::MatMulNT, a, b, multiply_nt(A, B));
    }

    NodeId transpose(NodeId a) { return push(Op::Transpose, a, {}, transposed(value(a))); }

    NodeId add(NodeId a, NodeId b) { return binary_same_shape(Op::Add, a, b, [](double x, double y) { return x + y; }); }
    NodeId sub(NodeId a, NodeId b) { return binary_same_shape(Op::Sub, a, b, [](double x, double y) { return x - y; }); }
    NodeId mul(NodeId a, NodeId b) { return binary_same_shape(Op::Mul, a, b, [](double x, double y) { return x * y; }); }

    /// Adds a 1xC row to every row of a KxC matrix (bias add).
    NodeId add_row(NodeId a, NodeId row) {
        const Matrix& A = value(a);
        const Matrix& R = value(row);
        if (R.rows() != 1 || R.cols() != A.cols()) {
            throw ShapeError("add_row " + A.shape_string() + " + " + R.shape_string());
        }
        Matrix out = A;
        for (std::size_t i = 0; i < out.rows(); ++i) {
            for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += R(0, j);
        }
        return push(Op::AddRow, a, row, std::move(out));
    }

    /// scale * a + shift with constant scalars.
    NodeId affine(NodeId a, double scale, double shift = 0.0) {
        Matrix out = map(value(a), [&](double x) { return scale * x + shift; });
        NodeId id = push(Op::Affine, a, {}, std::move(out));
        nodes_.back().s0 = scale;
        return id;
    }

    NodeId scale(NodeId a, double s) { return affine(a, s, 0.0); }

    /// a * s where s is a 1x1 node.
    NodeId scale_by(NodeId a, NodeId s) {
        double k = scalar_of(s, "scale_by");
        return push(Op::ScaleBy, a, s, map(value(a), [k](double x) { return k * x; }));
    }

    NodeId tanh(NodeId a) { return push(Op::Tanh, a, {}, map(value(a), [](double x) { return std::tanh(x); })); }
    NodeId sigmoid(NodeId a) { return push(Op::Sigmoid, a, {}, map(value(a), sigmoid_value)); }
    NodeId softplus(NodeId a) { return push(Op::Softplus, a, {}, map(value(a), softplus_value)); }
    NodeId exp(NodeId a) { return push(Op::Exp, a, {}, map(value(a), [](double x) { return std::exp(x); })); }

    /// Natural log with inputs clamped below at kLogEpsilon.
    NodeId log(NodeId a) {
        if (value(a).empty()) throw ShapeError("log of empty input");
        return push(Op::Log, a, {}, map(value(a), [](double x) { return std::log(std::max(x, kLogEpsilon)); }));
    }

    NodeId abs(NodeId a) { return push(Op::Abs, a, {}, map(value(a), [](double x) { return std::fabs(x); })); }

    /// Elementwise a^p for nonnegative a, with p a 1x1 node.
    NodeId pow(NodeId a, NodeId p) {
        double e = scalar_of(p, "pow");
        for (double x : value(a).data()) {
            if (x < 0.0) throw NumericError("pow of negative base");
        }
        return push(Op::Pow, a, p, map(value(a), [e](double x) { return x == 0.0 ? 0.0 : std::pow(x, e); }));
    }

    NodeId reciprocal(NodeId a) {
        return push(Op::Reciprocal, a, {}, map(value(a), [](double x) { return 1.0 / x; }));
    }

    /// Softmax across the columns of each row.
    NodeId row_softmax(NodeId a) {
        const Matrix& A = value(a);
        if (A.empty()) throw ShapeError("softmax of empty input");
        Matrix out(A.rows(), A.cols());
        for (std::size_t i = 0; i < A.rows(); ++i) {
            auto in = A.row(i);
            auto o = out.row(i);
            double mx = *std::max_element(in.begin(), in.end());
            double total = 0.0;
            for (std::size_t j = 0; j < in.size(); ++j) {
                o[j] = std::exp(in[j] - mx);
                total += o[j];
            }
            for (double& v : o) v /= total;
        }
        return push(Op::RowSoftmax, a, {}, std::move(out));
    }

    NodeId col_mean(NodeId a) {
        const Matrix& A = value(a);
        if (A.rows() == 0) throw ShapeError("col_mean of empty input");
        Matrix out = column_sums(A);
        for (double& v : out.data()) v /= static_cast<double>(A.rows());
        return push(Op::ColMean, a, {}, std::move(out));
    }

    NodeId col_sum(NodeId a) { return push(Op::ColSum, a, {}, column_sums(value(a))); }

    /// Per-column maximum; ties go to the lowest row index.
    NodeId col_max(NodeId a) {
        const Matrix& A = value(a);
        if (A.rows() == 0) throw ShapeError("col_max of empty input");
        Matrix out(1, A.cols());
        std::vector<std::size_t> winners(A.cols(), 0);
        for (std::size_t j = 0; j < A.cols(); ++j) {
            double best = A(0, j);
            for (std::size_t i = 1; i < A.rows(); ++i) {
                if (A(i, j) > best) {
                    best = A(i, j);
                    winners[j] = i;
                }
            }
            out(0, j) = best;
            for (std::size_t i = 0; i < A.rows(); ++i) {
                if (i != winners[j]) record_margin(best - A(i, j));
            }
        }
        NodeId id = push(Op::ColMax, a, {}, std::move(out));
        nodes_.back().index = std::move(winners);
        return id;
    }

    /// Sum over k of w_k * a_k, where w is Kx1 and a is KxC; yields 1xC.
    NodeId weighted_sum(NodeId w, NodeId a) {
        const Matrix& W = value(w);
        const Matrix& A = value(a);
        if (W.cols() != 1 || W.rows() != A.rows()) {
            throw ShapeError("weighted_sum " + W.shape_string() + " over " + A.shape_string());
        }
        Matrix out(1, A.cols());
        for (std::size_t k = 0; k < A.rows(); ++k) {
            for (std::size_t c = 0; c < A.cols(); ++c) out(0, c) += W(k, 0) * A(k, c);
        }
        return push(Op::WeightedSum, w, a, std::move(out));
    }

    NodeId dot(NodeId a, NodeId b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        if (!A.same_shape(B)) throw ShapeError("dot " + A.shape_string() + " . " + B.shape_string());
        double s = 0.0;
        for (std::size_t i = 0; i < A.size(); ++i) s += A[i] * B[i];
        return push(Op::Dot, a, b, Matrix::scalar(s));
    }

    NodeId select_row(NodeId a, std::size_t r) {
        const Matrix& A = value(a);
        if (r >= A.rows()) throw ShapeError("select_row " + std::to_string(r) + " of " + A.shape_string());
        Matrix out(1, A.cols());
        for (std::size_t j = 0; j < A.cols(); ++j) out(0, j) = A(r, j);
        NodeId id = push(Op::SelectRow, a, {}, std::move(out));
        nodes_.back().index = {r};
        return id;
    }

    NodeId element(NodeId a, std::size_t r, std::size_t c) {
        const Matrix& A = value(a);
        if (r >= A.rows() || c >= A.cols()) {
            throw ShapeError("element (" + std::to_string(r) + "," + std::to_string(c) + ") of " + A.shape_string());
        }
        NodeId id = push(Op::Element, a, {}, Matrix::scalar(A(r, c)));
        nodes_.back().index = {r, c};
        return id;
    }

    NodeId sum(NodeId a) {
        double s = 0.0;
        for (double v : value(a).data()) s += v;
        return push(Op::Sum, a, {}, Matrix::scalar(s));
    }

    /// Records how far a discrete selection (argmax) is from flipping.
    /// col_max() records its own margins; callers that pick an index from
    /// node values outside the tape report theirs here.
    void record_margin(double gap) noexcept { min_margin_ = std::min(min_margin_, gap); }

    /// Smallest recorded winner-vs-runner-up gap, +inf if none.
    double min_margin() const noexcept { return min_margin_; }

    // ---- reverse sweep -------------------------------------------------------

    /// Marks the scalar node whose gradient backward() computes.
    void set_output(NodeId id) {
        node(id);
        output_ = id;
    }

    std::optional<NodeId> output() const noexcept { return output_; }

    Gradients backward() const {
        if (!output_) throw Error("graph has no designated output");
        return backward(*output_);
    }

    /// d(out)/d(parameter) for every parameter node.
    Gradients backward(NodeId out) const {
        const Matrix& ov = value(out);
        if (ov.rows() != 1 || ov.cols() != 1) {
            throw ShapeError("backward from non-scalar output " + ov.shape_string());
        }
        std::vector<Matrix> adj(out.index + 1);
        adj[out.index] = Matrix::scalar(1.0);
        for (std::size_t i = out.index + 1; i-- > 0;) {
            if (adj[i].empty()) continue;
            propagate(nodes_[i], adj[i], adj);
        }
        Gradients g;
        for (NodeId p : params_) {
            if (p.index <= out.index && !adj[p.index].empty()) {
                g.set(p, adj[p.index]);
            } else {
                const Matrix& v = value(p);
                g.set(p, Matrix(v.rows(), v.cols()));
            }
        }
        return g;
    }

    static double sigmoid_value(double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
    }

    static double softplus_value(double x) {
        return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }

    static Matrix multiply(const Matrix& A, const Matrix& B) {
        Matrix out(A.rows(), B.cols());
        for (std::size_t i = 0; i < A.rows(); ++i) {
            auto o = out.row(i);
            for (std::size_t k = 0; k < A.cols(); ++k) {
                double a = A(i, k);
                if (a == 0.0) continue;
                auto b = B.row(k);
                for (std::size_t j = 0; j < b.size(); ++j) o[j] += a * b[j];
            }
        }
        return out;
    }

    /// A * B^T
    static Matrix multiply_nt(const Matrix& A, const Matrix& B) {
        Matrix out(A.rows(), B.rows());
        for (std::size_t i = 0; i < A.rows(); ++i) {
            auto a = A.row(i);
            for (std::size_t j = 0; j < B.rows(); ++j) {
                auto b = B.row(j);
                double s = 0.0;
                for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
                out(i, j) = s;
            }
        }
        return out;
    }

    /// Accumulates A^T * G into out.
    static void add_multiply_tn(const Matrix& A, const Matrix& G, Matrix& out) {
        for (std::size_t i = 0; i < A.rows(); ++i) {
            auto a = A.row(i);
            auto g = G.row(i);
            for (std::size_t k = 0; k < a.size(); ++k) {
                double ak = a[k];
                if (ak == 0.0) continue;
                auto o = out.row(k);
                for (std::size_t j = 0; j < g.size(); ++j) o[j] += ak * g[j];
            }
        }
    }

    static Matrix transposed(const Matrix& A) {
        Matrix out(A.cols(), A.rows());
        for (std::size_t i = 0; i < A.rows(); ++i) {
            for (std::size_t j = 0; j < A.cols(); ++j) out(j, i) = A(i, j);
        }
        return out;
    }

private:
    static constexpr std::uint32_t kNone = UINT32_MAX;

    struct Node {
        Op op = Op::Constant;
        std::uint32_t a = kNone;
        std::uint32_t b = kNone;
        Matrix value;
        double s0 = 0.0;
        std::vector<std::size_t> index;
    };

    const Node& node(NodeId id) const {
        if (id.index >= nodes_.size()) throw Error("unknown node " + std::to_string(id.index));
        return nodes_[id.index];
    }

    NodeId push(Op op, std::optional<NodeId> a, std::optional<NodeId> b, Matrix value) {
        Node n;
        n.op = op;
        if (a) n.a = a->index;
        if (b) n.b = b->index;
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    double scalar_of(NodeId s, const char* what) const {
        const Matrix& S = value(s);
        if (S.rows() != 1 || S.cols() != 1) {
            throw ShapeError(std::string(what) + " expects a 1x1 scalar node, got " + S.shape_string());
        }
        return S(0, 0);
    }

    template <class F>
    static Matrix map(const Matrix& A, F f) {
        Matrix out(A.rows(), A.cols());
        for (std::size_t i = 0; i < A.size(); ++i) out[i] = f(A[i]);
        return out;
    }

    template <class F>
    NodeId binary_same_shape(Op op, NodeId a, NodeId b, F f) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        if (!A.same_shape(B)) throw ShapeError("elementwise op on " + A.shape_string() + " and " + B.shape_string());
        Matrix out(A.rows(), A.cols());
        for (std::size_t i = 0; i < A.size(); ++i) out[i] = f(A[i], B[i]);
        return push(op, a, b, std::move(out));
    }

    static Matrix column_sums(const Matrix& A) {
        Matrix out(1, A.cols());
        for (std::size_t i = 0; i < A.rows(); ++i) {
            for (std::size_t j = 0; j < A.cols(); ++j) out(0, j) += A(i, j);
        }
        return out;
    }

    static void accumulate(std::vector<Matrix>& adj, std::uint32_t target, const Matrix& g) {
        Matrix& slot = adj[target];
        if (slot.empty()) {
            slot = g;
            return;
        }
        for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
    }

    Matrix& slot_for(std::vector<Matrix>& adj, std::uint32_t target) const {
        Matrix& slot = adj[target];
        if (slot.empty()) slot = Matrix(nodes_[target].value.rows(), nodes_[target].value.cols());
        return slot;
    }

    void propagate(const Node& n, const Matrix& g, std::vector<Matrix>& adj) const {
        const Matrix& y = n.value;
        switch (n.op) {
            case Op::Constant:
            case Op::Parameter:
                return;
            case Op::MatMul: {
                const Matrix& A = nodes_[n.a].value;
                const Matrix& B = nodes_[n.b].value;
                accumulate(adj, n.a, multiply_nt(g, B));
                add_multiply_tn(A, g, slot_for(adj, n.b));
                return;
            }
            case Op::MatMulNT: {
                const Matrix& A = nodes_[n.a].value;
                const Matrix& B = nodes_[n.b].value;
                accumulate(adj, n.a, multiply(g, B));
                add_multiply_tn(g, A, slot_for(adj, n.b));
                return;
            }
            case Op::Transpose:
                accumulate(adj, n.a, transposed(g));
                return;
            case Op::Add:
                accumulate(adj, n.a, g);
                accumulate(adj, n.b, g);
                return;
            case Op::Sub:
                accumulate(adj, n.a, g);
                accumulate(adj, n.b, map(g, [](double x) { return -x; }));
                return;
            case Op::Mul: {
                const Matrix& A = nodes_[n.a].value;
                const Matrix& B = nodes_[n.b].value;
                Matrix& ga = slot_for(adj, n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
                Matrix& gb = slot_for(adj, n.b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
                return;
            }
            case Op::AddRow:
                accumulate(adj, n.a, g);
                accumulate(adj, n.b, column_sums(g));
                return;
            case Op::Affine:
                accumulate(adj, n.a, map(g, [s = n.s0](double x) { return s * x; }));
                return;
            case Op::ScaleBy: {
                const Matrix& A = nodes_[n.a].value;
                double k = nodes_[n.b].value(0, 0);
                accumulate(adj, n.a, map(g, [k](double x) { return k * x; }));
                double ds = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) ds += g[i] * A[i];
                slot_for(adj, n.b)[0] += ds;
                return;
            }
            case Op::Tanh: {
                Matrix& ga = slot_for(adj, n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
                return;
            }
            case Op::Sigmoid: {
                Matrix& ga = slot_for(adj, n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
                return;
            }
            case Op::Softplus: {
                const Matrix& A = nodes_[n.a].value;
                Matrix& ga = slot_for(adj, n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sigmoid_value(A[i]);
                return;
            }
            case Op::Exp: {
                Matrix& ga = slot_for(adj, n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
                return;
            }
            case Op::Log: {
                const Matrix& A = nodes_[n.a].value;
                Matrix& ga = slot_for(adj, n.a);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (A[i] > kLogEpsilon) ga[i] += g[i] / A[i];
                }
                return;
            }
            case Op::Abs: {
                const Matrix& A = nodes_[n.a].value;
                Matrix& ga = slot_for(adj, n.a);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * (A[i] > 0.0 ? 1.0 : (A[i] < 0.0 ? -1.0 : 0.0));
                }
                return;
            }
            case Op::Pow: {
                const Matrix& A = nodes_[n.a].value;
                double e = nodes_[n.b].value(0, 0);
                Matrix& ga = slot_for(adj, n.a);
                double dp = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (A[i] == 0.0) continue;
                    ga[i] += g[i] * e * y[i] / A[i];
                    dp += g[i] * y[i] * std::log(A[i]);
                }
                slot_for(adj, n.b)[0] += dp;
                return;
            }
            case Op::Reciprocal: {
                Matrix& ga = slot_for(adj, n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i] * y[i] * y[i];
                return;
            }
            case Op::RowSoftmax: {
                Matrix& ga = slot_for(adj, n.a);
                for (std::size_t r = 0; r < y.rows(); ++r) {
                    double inner = 0.0;
                    for (std::size_t c = 0; c < y.cols(); ++c) inner += g(r, c) * y(r, c);
                    for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - inner);
                }
                return;
            }
            case Op::ColMean:
            case Op::ColSum: {
                Matrix& ga = slot_for(adj, n.a);
                double k = n.op == Op::ColMean ? 1.0 / static_cast<double>(ga.rows()) : 1.0;
                for (std::size_t r = 0; r < ga.rows(); ++r) {
                    for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += k * g(0, c);
                }
                return;
            }
            case Op::ColMax: {
                Matrix& ga = slot_for(adj, n.a);
                for (std::size_t c = 0; c < ga.cols(); ++c) ga(n.index[c], c) += g(0, c);
                return;
            }
            case Op::WeightedSum: {
                const Matrix& W = nodes_[n.a].value;
                const Matrix& A = nodes_[n.b].value;
                Matrix& gw = slot_for(adj, n.a);
                Matrix& gA = slot_for(adj, n.b);
                for (std::size_t k = 0; k < A.rows(); ++k) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < A.cols(); ++c) {
                        s += g(0, c) * A(k, c);
                        gA(k, c) += W(k, 0) * g(0, c);
                    }
                    gw(k, 0) += s;
                }
                return;
            }
            case Op::Dot: {
                const Matrix& A = nodes_[n.a].value;
                const Matrix& B = nodes_[n.b].value;
                double s = g(0, 0);
                Matrix& ga = slot_for(adj, n.a);
                for (std::size_t i = 0; i < A.size(); ++i) ga[i] += s * B[i];
                Matrix& gb = slot_for(adj, n.b);
                for (std::size_t i = 0; i < B.size(); ++i) gb[i] += s * A[i];
                return;
            }
            case Op::SelectRow: {
                Matrix& ga = slot_for(adj, n.a);
                for (std::size_t c = 0; c < ga.cols(); ++c) ga(n.index[0], c) += g(0, c);
                return;
            }
            case Op::Element:
                slot_for(adj, n.a)(n.index[0], n.index[1]) += g(0, 0);
                return;
            case Op::Sum: {
                Matrix& ga = slot_for(adj, n.a);
                for (double& v : ga.data()) v += g(0, 0);
                return;
            }
        }
    }

    std::vector<Node> nodes_;
    std::vector<NodeId> params_;
    std::optional<NodeId> output_;
    double min_margin_ = std::numeric_limits<double>::infinity();
};

}  // namespace milpool
