// Central finite-difference check of Graph gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "milpool/graph.hpp"

namespace milpool {

/// Builds a scalar loss on `graph` given the parameter nodes created from the
/// check point (same order as the point). Must be deterministic.
using LossBuilder = std::function<NodeId(Graph& graph, std::span<const NodeId> params)>;

struct GradCheckOptions {
    double step = 1e-5;
    /// Selections closer than this to flipping count as ties.
    double tie_margin = 1e-3;
    /// First perturbation magnitude applied to a tie-degenerate point.
    double tie_perturbation = 1e-6;
    int max_perturbations = 6;
    /// Denominator floor, scaled by 1 + |loss|. Central differences cannot
    /// resolve gradients below roughly eps * |loss| / step, so smaller
    /// magnitudes are compared in absolute terms against this floor.
    double resolution = 1e-6;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    bool tie_degenerate = false;
    int perturbations = 0;
    std::size_t checked = 0;
};

namespace detail {

struct Evaluation {
    double loss;
    double margin;
    Gradients grads;
    std::vector<NodeId> ids;
};

inline Evaluation evaluate_loss(const LossBuilder& build, std::span<const Matrix> point, bool want_grads) {
    Graph g;
    std::vector<NodeId> ids;
    ids.reserve(point.size());
    for (const Matrix& p : point) ids.push_back(g.parameter(p));
    NodeId out = build(g, ids);
    double loss = g.value(out).item();
    Evaluation e{loss, g.min_margin(), {}, ids};
    if (want_grads) e.grads = g.backward(out);
    return e;
}

// Deterministic +-1 pattern so a perturbed point is reproducible.
inline double perturb_sign(std::uint64_t i) {
    std::uint64_t z = i * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return ((z ^ (z >> 31)) & 1) ? 1.0 : -1.0;
}

}  // namespace detail

/// Maximum over all parameter entries of
/// |analytic - central| / max(|analytic| + |central|, resolution * (1 + |loss|)).
///
/// If an argmax selection at the point is within `tie_margin` of flipping,
/// the report is flagged tie-degenerate and the point is perturbed (starting
/// at `tie_perturbation`, growing tenfold per attempt) before checking.
inline GradCheckReport check_gradients(const LossBuilder& build, std::vector<Matrix> point,
                                       const GradCheckOptions& opt = {}) {
    GradCheckReport report;
    auto base = detail::evaluate_loss(build, point, false);
    double magnitude = opt.tie_perturbation;
    while (base.margin < opt.tie_margin && report.perturbations < opt.max_perturbations) {
        report.tie_degenerate = true;
        std::uint64_t counter = 0;
        for (Matrix& p : point) {
            for (double& v : p.data()) v += magnitude * detail::perturb_sign(counter++ + 7919u * report.perturbations);
        }
        ++report.perturbations;
        magnitude *= 10.0;
        base = detail::evaluate_loss(build, point, false);
    }

    auto ref = detail::evaluate_loss(build, point, true);
    if (!std::isfinite(ref.loss)) throw NumericError("non-finite loss at check point");
    const double floor = opt.resolution * (1.0 + std::fabs(ref.loss));

    for (std::size_t t = 0; t < point.size(); ++t) {
        const Matrix& analytic = ref.grads.at(ref.ids[t]);
        for (std::size_t i = 0; i < point[t].size(); ++i) {
            const double orig = point[t][i];
            point[t][i] = orig + opt.step;
            double up = detail::evaluate_loss(build, point, false).loss;
            point[t][i] = orig - opt.step;
            double down = detail::evaluate_loss(build, point, false).loss;
            point[t][i] = orig;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("non-finite loss at perturbed point");
            }
            double numeric = (up - down) / (2.0 * opt.step);
            double a = analytic[i];
            double rel = std::fabs(a - numeric) / std::max(std::fabs(a) + std::fabs(numeric), floor);
            report.max_rel_error = std::max(report.max_rel_error, rel);
            ++report.checked;
        }
    }
    return report;
}

}  // namespace milpool
