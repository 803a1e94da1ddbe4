// ROC-AUC via the Mann-Whitney statistic with mid-ranks for ties.
#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "milpool/matrix.hpp"

namespace milpool {

/// AUC is undefined without both classes present.
class UndefinedAucError : public Error {
public:
    using Error::Error;
};

/// Probability that a random positive outscores a random negative, ties
/// counting one half. O(n log n).
inline double binary_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        // 1-based ranks i+1..j share (i+1+j)/2
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]] != 0 && labels[order[t]] != 1) throw Error("labels must be 0 or 1");
            if (labels[order[t]] == 1) {
                positive_rank_sum += mid_rank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) throw UndefinedAucError("AUC undefined: only one class present");
    const double np = static_cast<double>(positives);
    const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(negatives));
}

/// Unweighted mean of one-vs-rest AUCs, column c scoring class c.
inline double macro_auc(const Matrix& scores, std::span<const int> labels) {
    const std::size_t C = scores.cols();
    if (C < 2) throw ShapeError("macro AUC needs at least 2 classes");
    if (scores.rows() != labels.size()) throw ShapeError("score rows and labels differ in length");
    double total = 0.0;
    std::vector<double> col(scores.rows());
    std::vector<int> onehot(labels.size());
    for (std::size_t c = 0; c < C; ++c) {
        bool present = false;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            col[i] = scores(i, c);
            onehot[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
            present = present || onehot[i];
        }
        if (!present) throw UndefinedAucError("class " + std::to_string(c) + " missing from labels");
        total += binary_auc(col, onehot);
    }
    return total / static_cast<double>(C);
}

}  // namespace milpool
