// MIL heads: instance-based pooling operators and embedding-based aggregators.
//
// Every head maps a bag of K instance embeddings (K x d) to a C-vector of bag
// scores. Instance-based heads score each instance with a linear classifier h
// and pool the scores; embedding-based heads pool the embeddings and classify
// the pooled vector with g. DSMIL averages both streams.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "milpool/graph.hpp"
#include "milpool/matrix.hpp"
#include "milpool/rng.hpp"

namespace milpool {

enum class HeadKind { MeanMIL, MaxMIL, MixMIL, AutoMIL, LNPMIL, AttenMIL, ABMIL, DSMIL };

inline constexpr std::array<HeadKind, 8> kAllHeads = {
    HeadKind::MeanMIL, HeadKind::MaxMIL, HeadKind::MixMIL,   HeadKind::AutoMIL,
    HeadKind::LNPMIL,  HeadKind::AttenMIL, HeadKind::ABMIL, HeadKind::DSMIL,
};

inline constexpr std::string_view to_string(HeadKind k) noexcept {
    switch (k) {
        case HeadKind::MeanMIL: return "MeanMIL";
        case HeadKind::MaxMIL: return "MaxMIL";
        case HeadKind::MixMIL: return "MixMIL";
        case HeadKind::AutoMIL: return "AutoMIL";
        case HeadKind::LNPMIL: return "LNPMIL";
        case HeadKind::AttenMIL: return "AttenMIL";
        case HeadKind::ABMIL: return "ABMIL";
        case HeadKind::DSMIL: return "DSMIL";
    }
    return "?";
}

inline HeadKind parse_head_kind(std::string_view name) {
    for (HeadKind k : kAllHeads) {
        if (to_string(k) == name) return k;
    }
    throw FormatError("unknown MIL head '" + std::string(name) + "'");
}

/// True for heads that pool per-instance scores (g is the identity).
inline constexpr bool is_instance_based(HeadKind k) noexcept {
    return k != HeadKind::ABMIL && k != HeadKind::DSMIL;
}

struct ModelSpec {
    HeadKind kind = HeadKind::MeanMIL;
    std::size_t feature_dim = 1;
    std::size_t num_classes = 1;  // 1 = binary
    std::size_t abmil_hidden = 128;
    std::size_t dsmil_query_dim = 128;
    /// MixMIL: pool the non-max branch with a plain sum instead of a mean.
    bool mix_literal_sum = false;

    void validate() const {
        if (feature_dim < 1) throw Error("feature_dim must be >= 1");
        if (num_classes < 1) throw Error("num_classes must be >= 1");
        if (abmil_hidden < 1 || dsmil_query_dim < 1) throw Error("hidden dims must be >= 1");
    }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct NamedTensor {
    std::string name;
    Matrix value;
    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Trainable state of one head. Tensor order is fixed by tensor_layout().
struct ModelParams {
    ModelSpec spec;
    std::vector<NamedTensor> tensors;

    bool has(std::string_view name) const {
        for (const auto& t : tensors) {
            if (t.name == name) return true;
        }
        return false;
    }
    const Matrix& get(std::string_view name) const {
        for (const auto& t : tensors) {
            if (t.name == name) return t.value;
        }
        throw Error("model has no tensor '" + std::string(name) + "'");
    }
    Matrix& get(std::string_view name) {
        return const_cast<Matrix&>(std::as_const(*this).get(name));
    }
    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.value.size();
        return n;
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct TensorInfo {
    std::string name;
    std::size_t rows;
    std::size_t cols;
    std::size_t fan_in;  // 0 = zero-initialized
};

/// Names and shapes of every trainable tensor for `spec`, in storage order.
inline std::vector<TensorInfo> tensor_layout(const ModelSpec& spec) {
    spec.validate();
    const std::size_t d = spec.feature_dim;
    const std::size_t C = spec.num_classes;
    std::vector<TensorInfo> out;
    auto instance_head = [&] {
        out.push_back({"inst_w", d, C, d});
        out.push_back({"inst_b", 1, C, 0});
    };
    auto bag_head = [&] {
        out.push_back({"bag_w", d, C, d});
        out.push_back({"bag_b", 1, C, 0});
    };
    switch (spec.kind) {
        case HeadKind::MeanMIL:
        case HeadKind::MaxMIL:
            instance_head();
            break;
        case HeadKind::MixMIL:
        case HeadKind::AutoMIL:
            instance_head();
            out.push_back({"raw_alpha", 1, 1, 0});
            break;
        case HeadKind::LNPMIL:
            instance_head();
            out.push_back({"raw_p", 1, 1, 0});
            break;
        case HeadKind::AttenMIL:
            instance_head();
            out.push_back({"att_w", d, 1, d});
            out.push_back({"att_b", 1, 1, 0});
            break;
        case HeadKind::ABMIL:
            out.push_back({"abmil_V", spec.abmil_hidden, d, d});
            out.push_back({"abmil_w", spec.abmil_hidden, 1, spec.abmil_hidden});
            bag_head();
            break;
        case HeadKind::DSMIL:
            instance_head();
            out.push_back({"dsmil_Wq", spec.dsmil_query_dim, d, d});
            out.push_back({"dsmil_Wv", d, d, d});
            bag_head();
            break;
    }
    return out;
}

/// Closed-form number of trainable scalars.
inline std::size_t param_count(const ModelSpec& spec) {
    spec.validate();
    const std::size_t d = spec.feature_dim;
    const std::size_t C = spec.num_classes;
    const std::size_t linear = C * (d + 1);
    switch (spec.kind) {
        case HeadKind::MeanMIL:
        case HeadKind::MaxMIL: return linear;
        case HeadKind::MixMIL:
        case HeadKind::AutoMIL:
        case HeadKind::LNPMIL: return linear + 1;
        case HeadKind::AttenMIL: return linear + (d + 1);
        case HeadKind::ABMIL: return spec.abmil_hidden * d + spec.abmil_hidden + linear;
        case HeadKind::DSMIL: return spec.dsmil_query_dim * d + d * d + 2 * linear;
    }
    return 0;
}

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases and pooling scalars 0.
inline ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
    ModelParams p{spec, {}};
    SplitMix64 rng(SplitMix64::derive(seed, 0x1417));
    for (const auto& info : tensor_layout(spec)) {
        Matrix m(info.rows, info.cols);
        if (info.fan_in > 0) {
            double bound = 1.0 / std::sqrt(static_cast<double>(info.fan_in));
            for (double& v : m.data()) v = rng.uniform(-bound, bound);
        }
        p.tensors.push_back({info.name, std::move(m)});
    }
    return p;
}

/// MixMIL alpha in (0, 1).
inline double mix_alpha(const ModelParams& p) { return Graph::sigmoid_value(p.get("raw_alpha").item()); }
/// AutoMIL alpha in (0, inf).
inline double auto_alpha(const ModelParams& p) { return Graph::softplus_value(p.get("raw_alpha").item()); }
/// LNPMIL exponent p > 1.
inline double lnp_exponent(const ModelParams& p) { return 1.0 + Graph::softplus_value(p.get("raw_p").item()); }

struct BagOutput {
    /// 1 x C; for C > 1 entries sum to 1.
    Matrix bag_scores;
    /// K x C instance classifier outputs (empty for ABMIL).
    Matrix instance_scores;
    /// Pooling weights, ABMIL a_k or DSMIL U_k; empty when not defined (LNPMIL).
    std::vector<double> weights;
    std::optional<std::size_t> critical_index;
};

/// Graph nodes for one forward pass.
struct ForwardNodes {
    NodeId bag_scores;
    std::optional<NodeId> instance_scores;
    std::optional<NodeId> weights;  // K x 1
    std::optional<std::size_t> critical_index;
};

namespace detail {

struct Bound {
    const ModelSpec* spec;
    std::vector<TensorInfo> layout;
    std::span<const NodeId> nodes;

    NodeId operator[](std::string_view name) const {
        for (std::size_t i = 0; i < layout.size(); ++i) {
            if (layout[i].name == name) return nodes[i];
        }
        throw Error("head has no tensor '" + std::string(name) + "'");
    }
};

inline void check_features(const ModelSpec& spec, const Matrix& features) {
    if (features.rows() == 0) throw ShapeError("empty bag");
    if (features.cols() != spec.feature_dim) {
        throw ShapeError("bag feature dim " + std::to_string(features.cols()) + " != model dim " +
                         std::to_string(spec.feature_dim));
    }
}

/// Softmax over the rows of a K x 1 column.
inline NodeId column_softmax(Graph& g, NodeId col) { return g.transpose(g.row_softmax(g.transpose(col))); }

inline NodeId classify(Graph& g, NodeId logits, std::size_t num_classes) {
    return num_classes == 1 ? g.sigmoid(logits) : g.row_softmax(logits);
}

/// Instance index with the highest score, over class 0 for binary heads and
/// over classes 1..C-1 otherwise. Ties go to the lowest index.
inline std::size_t critical_instance(Graph& g, NodeId scores) {
    const Matrix& Y = g.value(scores);
    auto stat = [&](std::size_t k) {
        if (Y.cols() == 1) return Y(k, 0);
        double s = Y(k, 1);
        for (std::size_t c = 2; c < Y.cols(); ++c) s = std::max(s, Y(k, c));
        return s;
    };
    std::size_t best = 0;
    for (std::size_t k = 1; k < Y.rows(); ++k) {
        if (stat(k) > stat(best)) best = k;
    }
    for (std::size_t k = 0; k < Y.rows(); ++k) {
        if (k != best) g.record_margin(stat(best) - stat(k));
    }
    return best;
}

}  // namespace detail

/// Scalars and inputs a pooling operator needs besides the instance scores.
struct PoolInputs {
    /// Effective MixMIL/AutoMIL alpha as a 1x1 node.
    std::optional<NodeId> alpha;
    /// Effective LNPMIL exponent as a 1x1 node.
    std::optional<NodeId> exponent;
    /// AttenMIL attention logits, K x 1.
    std::optional<NodeId> attention_logits;
    bool mix_literal_sum = false;
};

struct PoolNodes {
    NodeId pooled;                  // 1 x C
    std::optional<NodeId> weights;  // K x 1, class 0 column for multi-class heads
};

/// Pools K x C instance scores per class into a 1 x C row.
inline PoolNodes pool_nodes(Graph& g, HeadKind kind, NodeId scores, const PoolInputs& in) {
    const Matrix& Y = g.value(scores);
    const std::size_t K = Y.rows();
    if (K == 0) throw ShapeError("pooling an empty bag");
    auto require = [](const std::optional<NodeId>& n, const char* what) {
        if (!n) throw Error(std::string("pooling requires ") + what);
        return *n;
    };
    switch (kind) {
        case HeadKind::MeanMIL: {
            NodeId w = g.constant(Matrix(K, 1, 1.0 / static_cast<double>(K)));
            return {g.col_mean(scores), w};
        }
        case HeadKind::MaxMIL: {
            NodeId mx = g.col_max(scores);
            Matrix onehot(K, 1);
            onehot(g.argmax(mx)[0], 0) = 1.0;
            return {mx, g.constant(std::move(onehot))};
        }
        case HeadKind::MixMIL: {
            NodeId alpha = require(in.alpha, "alpha");
            NodeId mx = g.col_max(scores);
            NodeId rest = in.mix_literal_sum ? g.col_sum(scores) : g.col_mean(scores);
            NodeId pooled = g.add(g.scale_by(mx, alpha), g.scale_by(rest, g.affine(alpha, -1.0, 1.0)));
            double a = g.value(alpha).item();
            Matrix w(K, 1, (1.0 - a) * (in.mix_literal_sum ? 1.0 : 1.0 / static_cast<double>(K)));
            w(g.argmax(mx)[0], 0) += a;
            return {pooled, g.constant(std::move(w))};
        }
        case HeadKind::AutoMIL: {
            NodeId alpha = require(in.alpha, "alpha");
            NodeId soft = g.transpose(g.row_softmax(g.scale_by(g.transpose(scores), alpha)));
            NodeId pooled = g.col_sum(g.mul(scores, soft));
            Matrix w(K, 1);
            for (std::size_t k = 0; k < K; ++k) w(k, 0) = g.value(soft)(k, 0);
            return {pooled, g.constant(std::move(w))};
        }
        case HeadKind::LNPMIL: {
            NodeId p = require(in.exponent, "exponent");
            NodeId pooled = g.pow(g.col_mean(g.pow(g.abs(scores), p)), g.reciprocal(p));
            return {pooled, std::nullopt};
        }
        case HeadKind::AttenMIL: {
            NodeId logits = require(in.attention_logits, "attention logits");
            NodeId w = detail::column_softmax(g, logits);
            return {g.weighted_sum(w, scores), w};
        }
        case HeadKind::ABMIL:
        case HeadKind::DSMIL:
            break;
    }
    throw Error(std::string(to_string(kind)) + " is not an instance pooling operator");
}

/// Creates one parameter node per tensor, in storage order.
inline std::vector<NodeId> bind_params(Graph& g, const ModelParams& p) {
    std::vector<NodeId> ids;
    ids.reserve(p.tensors.size());
    for (const auto& t : p.tensors) ids.push_back(g.parameter(t.value));
    return ids;
}

/// Records the training-time forward pass of any head. `params` holds one
/// node per tensor of tensor_layout(spec).
inline ForwardNodes build_forward(Graph& g, const ModelSpec& spec, std::span<const NodeId> params,
                                  const Matrix& features) {
    detail::check_features(spec, features);
    detail::Bound P{&spec, tensor_layout(spec), params};
    if (P.layout.size() != params.size()) throw Error("parameter node count does not match head layout");
    const std::size_t C = spec.num_classes;
    NodeId X = g.constant(features);

    auto renormalize = [&](NodeId pooled) {
        return C == 1 ? pooled : g.scale_by(pooled, g.reciprocal(g.sum(pooled)));
    };

    if (spec.kind == HeadKind::ABMIL) {
        NodeId H = g.tanh(g.matmul_nt(X, P["abmil_V"]));
        NodeId a = detail::column_softmax(g, g.matmul(H, P["abmil_w"]));
        NodeId bag = g.weighted_sum(a, X);
        NodeId score = detail::classify(g, g.add_row(g.matmul(bag, P["bag_w"]), P["bag_b"]), C);
        return {score, std::nullopt, a, std::nullopt};
    }

    NodeId Y = detail::classify(g, g.add_row(g.matmul(X, P["inst_w"]), P["inst_b"]), C);

    if (spec.kind == HeadKind::DSMIL) {
        std::size_t m = detail::critical_instance(g, Y);
        NodeId Q = g.matmul_nt(X, P["dsmil_Wq"]);
        NodeId sim = g.matmul_nt(Q, g.select_row(Q, m));
        NodeId U = detail::column_softmax(g, sim);
        NodeId bag = g.weighted_sum(U, g.matmul_nt(X, P["dsmil_Wv"]));
        NodeId bag_score = detail::classify(g, g.add_row(g.matmul(bag, P["bag_w"]), P["bag_b"]), C);
        NodeId score = g.scale(g.add(g.select_row(Y, m), bag_score), 0.5);
        return {score, Y, U, m};
    }

    PoolInputs in;
    in.mix_literal_sum = spec.mix_literal_sum;
    switch (spec.kind) {
        case HeadKind::MixMIL: in.alpha = g.sigmoid(P["raw_alpha"]); break;
        case HeadKind::AutoMIL: in.alpha = g.softplus(P["raw_alpha"]); break;
        case HeadKind::LNPMIL: in.exponent = g.affine(g.softplus(P["raw_p"]), 1.0, 1.0); break;
        case HeadKind::AttenMIL: in.attention_logits = g.add_row(g.matmul(X, P["att_w"]), P["att_b"]); break;
        default: break;
    }
    PoolNodes pooled = pool_nodes(g, spec.kind, Y, in);
    return {renormalize(pooled.pooled), Y, pooled.weights, std::nullopt};
}

/// Bag loss: binary cross-entropy for C = 1, negative log-likelihood of the
/// renormalized class scores for C > 1.
inline NodeId build_loss(Graph& g, const ModelSpec& spec, std::span<const NodeId> params,
                         const Matrix& features, std::size_t label) {
    if (label >= std::max<std::size_t>(spec.num_classes, 2)) {
        throw Error("label " + std::to_string(label) + " out of range for " +
                    std::to_string(spec.num_classes) + " class head");
    }
    ForwardNodes f = build_forward(g, spec, params, features);
    NodeId loss;
    if (spec.num_classes == 1) {
        NodeId p = label == 1 ? f.bag_scores : g.affine(f.bag_scores, -1.0, 1.0);
        loss = g.scale(g.log(p), -1.0);
    } else {
        loss = g.scale(g.log(g.element(f.bag_scores, 0, label)), -1.0);
    }
    g.set_output(loss);
    return loss;
}

/// Instance classifier outputs: sigmoid for C = 1, row softmax otherwise.
inline Matrix score_instances(const ModelParams& p, const Matrix& features) {
    detail::check_features(p.spec, features);
    if (!is_instance_based(p.spec.kind) && p.spec.kind != HeadKind::DSMIL) {
        throw Error(std::string(to_string(p.spec.kind)) + " has no instance classifier");
    }
    Graph g;
    NodeId X = g.constant(features);
    NodeId Z = g.add_row(g.matmul(X, g.constant(p.get("inst_w"))), g.constant(p.get("inst_b")));
    return g.value(detail::classify(g, Z, p.spec.num_classes));
}

/// Effective pooling scalars for the value-level pool().
struct PoolSettings {
    double alpha = 0.0;     // MixMIL / AutoMIL
    double exponent = 1.0;  // LNPMIL
    std::vector<double> attention_logits;  // AttenMIL, one per instance
    bool mix_literal_sum = false;
};

/// Pools a K x C score matrix per class; returns a 1 x C row.
inline Matrix pool(HeadKind kind, const Matrix& instance_scores, const PoolSettings& s = {}) {
    if (instance_scores.rows() == 0) throw ShapeError("pooling an empty bag");
    Graph g;
    NodeId Y = g.constant(instance_scores);
    PoolInputs in;
    in.mix_literal_sum = s.mix_literal_sum;
    in.alpha = g.constant(Matrix::scalar(s.alpha));
    in.exponent = g.constant(Matrix::scalar(s.exponent));
    if (kind == HeadKind::AttenMIL) {
        if (s.attention_logits.size() != instance_scores.rows()) {
            throw ShapeError("attention logits count does not match bag size");
        }
        in.attention_logits = g.constant(Matrix::column_vector(s.attention_logits));
    }
    return g.value(pool_nodes(g, kind, Y, in).pooled);
}

/// Two-step multi-class rule for instance heads with 3 classes: pick the
/// instance m with the highest score among classes 1 and 2, then predict
/// the class with the highest score of instance m. For MixMIL the selected
/// instance replaces the max branch: argmax_c of
/// alpha * s_m + (1 - alpha) * mean_k s_k. Ties go to the lowest index.
inline std::size_t predict_multiclass(HeadKind kind, const Matrix& scores, double mix_alpha_value = 1.0,
                                      bool mix_literal_sum = false);

/// Class-score vector used at inference by the multi-class rule (not renormalized).
inline Matrix multiclass_selection_scores(HeadKind kind, const Matrix& scores, double mix_alpha_value = 1.0,
                                          bool mix_literal_sum = false) {
    if (kind != HeadKind::MaxMIL && kind != HeadKind::MixMIL) {
        throw Error("multi-class selection rule applies to MaxMIL and MixMIL only");
    }
    if (scores.cols() != 3) throw ShapeError("multi-class selection rule needs 3 classes, got " + scores.shape_string());
    if (scores.rows() == 0) throw ShapeError("empty bag");
    std::size_t m = 0;
    auto stat = [&](std::size_t k) { return std::max(scores(k, 1), scores(k, 2)); };
    for (std::size_t k = 1; k < scores.rows(); ++k) {
        if (stat(k) > stat(m)) m = k;
    }
    Matrix out(1, 3);
    for (std::size_t c = 0; c < 3; ++c) out(0, c) = scores(m, c);
    if (kind == HeadKind::MixMIL) {
        const double K = static_cast<double>(scores.rows());
        for (std::size_t c = 0; c < 3; ++c) {
            double rest = 0.0;
            for (std::size_t k = 0; k < scores.rows(); ++k) rest += scores(k, c);
            if (!mix_literal_sum) rest /= K;
            out(0, c) = mix_alpha_value * out(0, c) + (1.0 - mix_alpha_value) * rest;
        }
    }
    return out;
}

inline std::size_t predict_multiclass(HeadKind kind, const Matrix& scores, double mix_alpha_value,
                                      bool mix_literal_sum) {
    Matrix v = multiclass_selection_scores(kind, scores, mix_alpha_value, mix_literal_sum);
    std::size_t best = 0;
    for (std::size_t c = 1; c < 3; ++c) {
        if (v(0, c) > v(0, best)) best = c;
    }
    return best;
}

/// Inference-time forward pass of any head. Three-class MaxMIL/MixMIL use
/// the two-step selection rule for their bag scores (renormalized).
inline BagOutput forward(const ModelParams& p, const Matrix& features) {
    Graph g;
    auto ids = bind_params(g, p);
    ForwardNodes f = build_forward(g, p.spec, ids, features);
    BagOutput out;
    out.bag_scores = g.value(f.bag_scores);
    if (f.instance_scores) out.instance_scores = g.value(*f.instance_scores);
    if (f.weights) {
        auto w = g.value(*f.weights).data();
        out.weights.assign(w.begin(), w.end());
    }
    out.critical_index = f.critical_index;
    if (p.spec.num_classes == 3 && (p.spec.kind == HeadKind::MaxMIL || p.spec.kind == HeadKind::MixMIL)) {
        double a = p.spec.kind == HeadKind::MixMIL ? mix_alpha(p) : 1.0;
        Matrix v = multiclass_selection_scores(p.spec.kind, out.instance_scores, a, p.spec.mix_literal_sum);
        double total = v[0] + v[1] + v[2];
        for (double& x : v.data()) x /= total;
        out.bag_scores = std::move(v);
    }
    return out;
}

inline BagOutput abmil_forward(const ModelParams& p, const Matrix& features) {
    if (p.spec.kind != HeadKind::ABMIL) throw Error("abmil_forward on a " + std::string(to_string(p.spec.kind)) + " model");
    return forward(p, features);
}

inline BagOutput dsmil_forward(const ModelParams& p, const Matrix& features) {
    if (p.spec.kind != HeadKind::DSMIL) throw Error("dsmil_forward on a " + std::string(to_string(p.spec.kind)) + " model");
    return forward(p, features);
}

/// Loss of a frozen model on one bag.
inline double bag_loss(const ModelParams& p, const Matrix& features, std::size_t label) {
    Graph g;
    auto ids = bind_params(g, p);
    return g.value(build_loss(g, p.spec, ids, features, label)).item();
}

/// Predicted class of a bag from its bag scores (binary threshold 0.5).
inline std::size_t predicted_class(const ModelParams& p, const BagOutput& out) {
    if (p.spec.num_classes == 1) return out.bag_scores[0] >= 0.5 ? 1 : 0;
    if (p.spec.num_classes == 3 && (p.spec.kind == HeadKind::MaxMIL || p.spec.kind == HeadKind::MixMIL)) {
        double a = p.spec.kind == HeadKind::MixMIL ? mix_alpha(p) : 1.0;
        return predict_multiclass(p.spec.kind, out.instance_scores, a, p.spec.mix_literal_sum);
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < out.bag_scores.cols(); ++c) {
        if (out.bag_scores[c] > out.bag_scores[best]) best = c;
    }
    return best;
}

/// Per-instance values shown in heatmaps: classifier scores for Mean, Max,
/// Mix and LNP heads, pooling/attention weights for the others. Multi-class
/// heads show the column of the predicted class.
inline std::vector<double> heatmap_values(const ModelParams& p, const BagOutput& out) {
    switch (p.spec.kind) {
        case HeadKind::MeanMIL:
        case HeadKind::MaxMIL:
        case HeadKind::MixMIL:
        case HeadKind::LNPMIL: {
            std::size_t c = p.spec.num_classes == 1 ? 0 : predicted_class(p, out);
            std::vector<double> v(out.instance_scores.rows());
            for (std::size_t k = 0; k < v.size(); ++k) v[k] = out.instance_scores(k, c);
            return v;
        }
        default:
            return out.weights;
    }
}

}  // namespace milpool
