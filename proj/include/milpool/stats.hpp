// Sample statistics and Welch's two-sample t-test.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "milpool/matrix.hpp"

namespace milpool {

inline double mean(std::span<const double> xs) {
    if (xs.empty()) throw Error("mean of empty sample");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Unbiased (n-1) variance; 0 for a single value.
inline double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

inline double sample_std(std::span<const double> xs) { return std::sqrt(sample_variance(xs)); }

namespace detail {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta function I_x(a, b) for a, b > 0, x in [0, 1].
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw NumericError("incomplete_beta needs a, b > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw NumericError("incomplete_beta needs x in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
inline double student_t_two_sided_p(double t, double dof) {
    if (!(dof > 0.0)) throw NumericError("degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

struct WelchResult {
    double t = 0.0;
    double dof = 0.0;
    double p_value = 1.0;
};

/// Two-sided Welch test of equal means with Welch-Satterthwaite dof.
inline WelchResult welch_t_test(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() < 2 || ys.size() < 2) throw Error("Welch test needs at least 2 values per sample");
    const double vx = sample_variance(xs);
    const double vy = sample_variance(ys);
    if (!(vx > 0.0) || !(vy > 0.0)) throw Error("Welch test needs nonzero variance in both samples");
    const double nx = static_cast<double>(xs.size());
    const double ny = static_cast<double>(ys.size());
    const double sx = vx / nx;
    const double sy = vy / ny;
    WelchResult r;
    r.t = (mean(xs) - mean(ys)) / std::sqrt(sx + sy);
    r.dof = (sx + sy) * (sx + sy) / (sx * sx / (nx - 1.0) + sy * sy / (ny - 1.0));
    r.p_value = std::clamp(student_t_two_sided_p(r.t, r.dof), 0.0, 1.0);
    return r;
}

}  // namespace milpool
