// Adam with decoupled weight decay.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "milpool/matrix.hpp"

namespace milpool {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::uint64_t step = 0;

    static AdamState zeros_like(const std::vector<Matrix*>& params) {
        AdamState s;
        for (const Matrix* p : params) {
            s.m.emplace_back(p->rows(), p->cols());
            s.v.emplace_back(p->rows(), p->cols());
        }
        return s;
    }
};

/// One update of every tensor in `params`. Weight decay shrinks
/// theta <- theta - lr*wd*theta before the bias-corrected Adam delta.
inline void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads, AdamState& state,
                      double lr, double weight_decay, const AdamConfig& cfg = {}) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw ShapeError("adam_step: parameter, gradient and state counts differ");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        const Matrix& g = *grads[i];
        if (!p.same_shape(g) || !p.same_shape(state.m[i])) {
            throw ShapeError("adam_step: shape mismatch on tensor " + std::to_string(i));
        }
        Matrix& m = state.m[i];
        Matrix& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            p[j] -= lr * weight_decay * p[j];
            p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.epsilon);
        }
    }
}

/// Cosine annealing from lr0 at epoch 0 to 0 at epoch `total`.
inline double cosine_lr(double lr0, std::size_t epoch, std::size_t total) {
    constexpr double kPi = 3.14159265358979323846;
    return 0.5 * lr0 * (1.0 + std::cos(kPi * static_cast<double>(epoch) / static_cast<double>(total)));
}

}  // namespace milpool
