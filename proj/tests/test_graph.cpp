#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "milpool/gradcheck.hpp"
#include "milpool/graph.hpp"
#include "test_support.hpp"

using namespace milpool;
using milpool::testing::random_matrix;

TEST(Matrix, RejectsNonFiniteExternalData) {
    EXPECT_THROW(Matrix::from_external(1, 2, {1.0, std::nan("")}), NumericError);
    EXPECT_THROW(Matrix::from_external(1, 1, {INFINITY}), NumericError);
    EXPECT_THROW(Matrix::from_external(2, 2, {1.0, 2.0, 3.0}), ShapeError);
    Matrix m = Matrix::from_external(2, 1, {1.5, -2.0});
    EXPECT_EQ(m(1, 0), -2.0);
}

TEST(Matrix, RowMajorLayout) {
    Matrix m{{1, 2, 3}, {4, 5, 6}};
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m.cols(), 3u);
    EXPECT_EQ(m[4], 5.0);
    EXPECT_EQ(m.row(1)[2], 6.0);
}

TEST(Graph, RowSoftmaxOfZerosIsUniform) {
    Graph g;
    auto s = g.value(g.row_softmax(g.constant(Matrix{{0, 0, 0}})));
    for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Graph, ColumnMaxRecordsArgmax) {
    Graph g;
    NodeId m = g.col_max(g.constant(Matrix{{0.2}, {0.9}, {0.5}}));
    EXPECT_EQ(g.value(m).item(), 0.9);
    EXPECT_EQ(g.argmax(m)[0], 1u);
}

TEST(Graph, ColumnMaxTiesPickLowestIndex) {
    Graph g;
    NodeId m = g.col_max(g.constant(Matrix{{0.3}, {0.7}, {0.7}}));
    EXPECT_EQ(g.argmax(m)[0], 1u);
}

TEST(Graph, SoftplusAtZeroIsLogTwo) {
    Graph g;
    EXPECT_NEAR(g.value(g.softplus(g.constant(Matrix::scalar(0.0)))).item(), std::log(2.0), 1e-15);
}

TEST(Graph, LogIsClampedAtEpsilon) {
    Graph g;
    EXPECT_DOUBLE_EQ(g.value(g.log(g.constant(Matrix::scalar(0.0)))).item(), std::log(kLogEpsilon));
}

TEST(Graph, ShapeMismatchThrows) {
    Graph g;
    NodeId a = g.constant(Matrix(2, 3));
    NodeId b = g.constant(Matrix(2, 3));
    EXPECT_THROW(g.matmul(a, b), ShapeError);
    EXPECT_THROW(g.add(a, g.constant(Matrix(3, 2))), ShapeError);
    EXPECT_THROW(g.row_softmax(g.constant(Matrix(0, 0))), Error);
}

TEST(Graph, LinearLossGradientIsInput) {
    Graph g;
    Matrix x{{1.5}, {-2.0}, {0.25}};
    NodeId w = g.parameter(Matrix{{0.3, -0.1, 0.7}});
    NodeId loss = g.sum(g.matmul(w, g.constant(x)));
    Gradients grads = g.backward(loss);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(grads.at(w)[i], x[i]);
}

TEST(Graph, SigmoidAtZeroGradientIsQuarterInput) {
    Graph g;
    Matrix x{{2.0}, {-4.0}};
    NodeId w = g.parameter(Matrix(1, 2, 0.0));
    NodeId loss = g.sigmoid(g.matmul(w, g.constant(x)));
    Gradients grads = g.backward(loss);
    EXPECT_DOUBLE_EQ(grads.at(w)[0], 0.5);
    EXPECT_DOUBLE_EQ(grads.at(w)[1], -1.0);
}

TEST(Graph, NonScalarOutputIsRejected) {
    Graph g;
    NodeId w = g.parameter(Matrix(2, 2, 1.0));
    EXPECT_THROW(g.backward(g.tanh(w)), Error);
}

TEST(Graph, BackwardIsRepeatable) {
    SplitMix64 rng(3);
    Graph g;
    NodeId w = g.parameter(random_matrix(rng, 4, 3));
    NodeId loss = g.sum(g.mul(g.row_softmax(g.tanh(w)), g.constant(random_matrix(rng, 4, 3))));
    Gradients a = g.backward(loss);
    Gradients b = g.backward(loss);
    EXPECT_EQ(a.at(w), b.at(w));
}

TEST(Graph, UnusedParameterGetsZeroGradient) {
    Graph g;
    NodeId used = g.parameter(Matrix::scalar(2.0));
    NodeId unused = g.parameter(Matrix(2, 2, 1.0));
    Gradients grads = g.backward(g.exp(used));
    EXPECT_EQ(grads.size(), 2u);
    EXPECT_EQ(grads.at(unused), Matrix(2, 2, 0.0));
}

namespace {

struct OpCase {
    const char* name;
    // Builds op output from parameter nodes; `shapes` gives the parameter shapes for (r, c).
    std::function<std::vector<Matrix>(SplitMix64&, std::size_t, std::size_t)> make_point;
    std::function<NodeId(Graph&, std::span<const NodeId>)> apply;
};

std::vector<OpCase> op_cases() {
    auto one = [](double lo, double hi) {
        return [lo, hi](SplitMix64& rng, std::size_t r, std::size_t c) {
            return std::vector<Matrix>{random_matrix(rng, r, c, lo, hi)};
        };
    };
    auto two = [](SplitMix64& rng, std::size_t r, std::size_t c) {
        return std::vector<Matrix>{random_matrix(rng, r, c), random_matrix(rng, r, c)};
    };
    std::vector<OpCase> cases;
    cases.push_back({"matmul",
                     [](SplitMix64& rng, std::size_t r, std::size_t c) {
                         return std::vector<Matrix>{random_matrix(rng, r, c), random_matrix(rng, c, r + 1)};
                     },
                     [](Graph& g, std::span<const NodeId> p) { return g.matmul(p[0], p[1]); }});
    cases.push_back({"matmul_nt",
                     [](SplitMix64& rng, std::size_t r, std::size_t c) {
                         return std::vector<Matrix>{random_matrix(rng, r, c), random_matrix(rng, r + 2, c)};
                     },
                     [](Graph& g, std::span<const NodeId> p) { return g.matmul_nt(p[0], p[1]); }});
    cases.push_back({"transpose", one(-1, 1), [](Graph& g, std::span<const NodeId> p) { return g.transpose(p[0]); }});
    cases.push_back({"add", two, [](Graph& g, std::span<const NodeId> p) { return g.add(p[0], p[1]); }});
    cases.push_back({"sub", two, [](Graph& g, std::span<const NodeId> p) { return g.sub(p[0], p[1]); }});
    cases.push_back({"mul", two, [](Graph& g, std::span<const NodeId> p) { return g.mul(p[0], p[1]); }});
    cases.push_back({"add_row",
                     [](SplitMix64& rng, std::size_t r, std::size_t c) {
                         return std::vector<Matrix>{random_matrix(rng, r, c), random_matrix(rng, 1, c)};
                     },
                     [](Graph& g, std::span<const NodeId> p) { return g.add_row(p[0], p[1]); }});
    cases.push_back({"scale", one(-1, 1), [](Graph& g, std::span<const NodeId> p) { return g.scale(p[0], -1.7); }});
    cases.push_back({"scale_by",
                     [](SplitMix64& rng, std::size_t r, std::size_t c) {
                         return std::vector<Matrix>{random_matrix(rng, r, c), random_matrix(rng, 1, 1)};
                     },
                     [](Graph& g, std::span<const NodeId> p) { return g.scale_by(p[0], p[1]); }});
    cases.push_back({"tanh", one(-2, 2), [](Graph& g, std::span<const NodeId> p) { return g.tanh(p[0]); }});
    cases.push_back({"sigmoid", one(-3, 3), [](Graph& g, std::span<const NodeId> p) { return g.sigmoid(p[0]); }});
    cases.push_back({"softplus", one(-3, 3), [](Graph& g, std::span<const NodeId> p) { return g.softplus(p[0]); }});
    cases.push_back({"exp", one(-2, 2), [](Graph& g, std::span<const NodeId> p) { return g.exp(p[0]); }});
    cases.push_back({"log", one(0.2, 3), [](Graph& g, std::span<const NodeId> p) { return g.log(p[0]); }});
    cases.push_back({"abs",
                     [](SplitMix64& rng, std::size_t r, std::size_t c) {
                         Matrix m = random_matrix(rng, r, c, 0.1, 2.0);
                         for (double& v : m.data()) v *= rng.uniform() < 0.5 ? -1.0 : 1.0;
                         return std::vector<Matrix>{m};
                     },
                     [](Graph& g, std::span<const NodeId> p) { return g.abs(p[0]); }});
    cases.push_back({"pow",
                     [](SplitMix64& rng, std::size_t r, std::size_t c) {
                         return std::vector<Matrix>{random_matrix(rng, r, c, 0.2, 2.0), random_matrix(rng, 1, 1, 0.5, 3.0)};
                     },
                     [](Graph& g, std::span<const NodeId> p) { return g.pow(p[0], p[1]); }});
    cases.push_back({"reciprocal", one(0.3, 2), [](Graph& g, std::span<const NodeId> p) { return g.reciprocal(p[0]); }});
    cases.push_back({"row_softmax", one(-2, 2), [](Graph& g, std::span<const NodeId> p) { return g.row_softmax(p[0]); }});
    cases.push_back({"col_mean", one(-1, 1), [](Graph& g, std::span<const NodeId> p) { return g.col_mean(p[0]); }});
    cases.push_back({"col_sum", one(-1, 1), [](Graph& g, std::span<const NodeId> p) { return g.col_sum(p[0]); }});
    cases.push_back({"col_max", one(-1, 1), [](Graph& g, std::span<const NodeId> p) { return g.col_max(p[0]); }});
    cases.push_back({"weighted_sum",
                     [](SplitMix64& rng, std::size_t r, std::size_t c) {
                         return std::vector<Matrix>{random_matrix(rng, r, 1), random_matrix(rng, r, c)};
                     },
                     [](Graph& g, std::span<const NodeId> p) { return g.weighted_sum(p[0], p[1]); }});
    cases.push_back({"dot", two, [](Graph& g, std::span<const NodeId> p) { return g.dot(p[0], p[1]); }});
    cases.push_back({"select_row", one(-1, 1),
                     [](Graph& g, std::span<const NodeId> p) { return g.select_row(p[0], g.value(p[0]).rows() - 1); }});
    cases.push_back({"element", one(-1, 1), [](Graph& g, std::span<const NodeId> p) { return g.element(p[0], 0, 0); }});
    cases.push_back({"sum", one(-1, 1), [](Graph& g, std::span<const NodeId> p) { return g.sum(p[0]); }});
    return cases;
}

}  // namespace

// Every primitive's VJP against central differences, contracted with a
// random weight so every output entry contributes.
TEST(Graph, PrimitiveVjpsMatchFiniteDifferences) {
    SplitMix64 rng(20240601);
    for (const auto& op : op_cases()) {
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t r = 1 + rng.below(5);
            const std::size_t c = 1 + rng.below(5);
            auto point = op.make_point(rng, r, c);
            std::optional<Matrix> weight;
            LossBuilder build = [&](Graph& g, std::span<const NodeId> p) {
                NodeId out = op.apply(g, p);
                const Matrix& v = g.value(out);
                if (!weight || !weight->same_shape(v)) weight = random_matrix(rng, v.rows(), v.cols(), 0.5, 1.5);
                return g.sum(g.mul(out, g.constant(*weight)));
            };
            GradCheckReport rep = check_gradients(build, point);
            ASSERT_LT(rep.max_rel_error, 1e-6) << op.name << " trial " << trial << " shape " << r << "x" << c;
        }
    }
}

TEST(Graph, BackwardIsLinearInTheLoss) {
    SplitMix64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix w0 = random_matrix(rng, 3, 4);
        const double a = rng.uniform(-2, 2);
        const double b = rng.uniform(-2, 2);
        auto grads_of = [&](double ca, double cb) {
            Graph g;
            NodeId w = g.parameter(w0);
            NodeId l1 = g.sum(g.tanh(w));
            NodeId l2 = g.sum(g.row_softmax(g.mul(w, w)));
            NodeId loss = g.add(g.scale(l1, ca), g.scale(l2, cb));
            return g.backward(loss).at(w);
        };
        Matrix combined = grads_of(a, b);
        Matrix g1 = grads_of(1, 0);
        Matrix g2 = grads_of(0, 1);
        for (std::size_t i = 0; i < combined.size(); ++i) {
            EXPECT_NEAR(combined[i], a * g1[i] + b * g2[i], 1e-12);
        }
    }
}

TEST(Graph, ColumnMaxGradientIsOneHot) {
    SplitMix64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t K = 1 + rng.below(10);
        Graph g;
        NodeId x = g.parameter(random_matrix(rng, K, 1));
        NodeId loss = g.sum(g.col_max(x));
        Matrix grad = g.backward(loss).at(x);
        std::size_t nonzero = 0;
        for (double v : grad.data()) nonzero += v != 0.0;
        EXPECT_EQ(nonzero, 1u);
        EXPECT_EQ(grad(g.argmax(g.col_max(x))[0], 0), 1.0);
    }
}

TEST(Graph, SoftmaxRowsAreDistributions) {
    SplitMix64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        Graph g;
        Matrix x = random_matrix(rng, 1 + rng.below(6), 1 + rng.below(8), -30, 30);
        Matrix s = g.value(g.row_softmax(g.constant(x)));
        for (std::size_t r = 0; r < s.rows(); ++r) {
            double total = 0.0;
            for (double v : s.row(r)) {
                EXPECT_GE(v, 0.0);
                total += v;
            }
            EXPECT_NEAR(total, 1.0, 1e-12);
        }
    }
}

TEST(GradCheck, QuadraticIsExact) {
    SplitMix64 rng(13);
    LossBuilder half_norm = [](Graph& g, std::span<const NodeId> p) { return g.scale(g.sum(g.mul(p[0], p[0])), 0.5); };
    GradCheckReport rep = check_gradients(half_norm, {random_matrix(rng, 4, 5)});
    EXPECT_LT(rep.max_rel_error, 1e-9);
    EXPECT_FALSE(rep.tie_degenerate);
    EXPECT_EQ(rep.checked, 20u);
}

TEST(GradCheck, TiedMaxIsFlaggedAndPerturbed) {
    LossBuilder max_loss = [](Graph& g, std::span<const NodeId> p) {
        NodeId m = g.col_max(p[0]);
        const Matrix& v = g.value(p[0]);
        for (std::size_t k = 0; k < v.rows(); ++k) {
            if (k != g.argmax(m)[0]) g.record_margin(g.value(m).item() - v(k, 0));
        }
        return g.sum(g.mul(m, m));
    };
    GradCheckReport rep = check_gradients(max_loss, {Matrix{{0.5}, {0.5}, {0.1}}});
    EXPECT_TRUE(rep.tie_degenerate);
    EXPECT_GE(rep.perturbations, 1);
    EXPECT_LT(rep.max_rel_error, 1e-6);
}

TEST(GradCheck, NonFiniteLossIsAnError) {
    LossBuilder bad = [](Graph& g, std::span<const NodeId> p) { return g.sum(g.exp(g.scale(p[0], 1e6))); };
    EXPECT_THROW(check_gradients(bad, {Matrix::scalar(1.0)}), NumericError);
}
