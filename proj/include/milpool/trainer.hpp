// Per-bag training with Adam and cosine annealing, learning-rate grid search.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "milpool/adam.hpp"
#include "milpool/dataset.hpp"
#include "milpool/heads.hpp"
#include "milpool/metrics.hpp"
#include "milpool/rng.hpp"

namespace milpool {

enum class Selection { BestValAuc, LastEpoch };

inline constexpr std::string_view to_string(Selection s) noexcept {
    return s == Selection::BestValAuc ? "best_val_auc" : "last_epoch";
}

inline Selection parse_selection(std::string_view s) {
    if (s == "best_val_auc") return Selection::BestValAuc;
    if (s == "last_epoch") return Selection::LastEpoch;
    throw FormatError("unknown selection '" + std::string(s) + "'");
}

struct TrainConfig {
    std::size_t epochs = 100;
    double weight_decay = 1e-5;
    std::vector<double> lr_grid = {1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3};
    std::vector<std::uint64_t> seeds = {0};
    Selection selection = Selection::BestValAuc;
    AdamConfig adam;
    std::size_t workers = 1;

    void validate() const {
        if (epochs < 1) throw Error("epochs must be >= 1");
        if (lr_grid.empty()) throw Error("learning-rate grid is empty");
        for (double lr : lr_grid) {
            if (!(lr > 0.0) || !std::isfinite(lr)) throw Error("learning rates must be finite and > 0");
        }
        if (seeds.empty()) throw Error("no seeds given");
    }
};

/// Training diverged (non-finite loss or validation AUC).
class DivergenceError : public Error {
public:
    using Error::Error;
};

struct EpochRecord {
    double train_loss = 0.0;  // mean over training bags
    double val_auc = 0.0;
    friend bool operator==(const EpochRecord& a, const EpochRecord& b) {
        auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
        return same(a.train_loss, b.train_loss) && same(a.val_auc, b.val_auc);
    }
};

struct EvalMetrics {
    double auc = std::numeric_limits<double>::quiet_NaN();
    double loss = std::numeric_limits<double>::quiet_NaN();
    double accuracy = std::numeric_limits<double>::quiet_NaN();
    std::size_t bags = 0;
};

struct RunResult {
    ModelSpec spec;
    std::string tag;
    double lr = 0.0;
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    Selection selection = Selection::BestValAuc;
    ModelParams params;  // at the selected epoch
    std::vector<EpochRecord> history;
    std::size_t selected_epoch = 0;
    double selected_val_auc = std::numeric_limits<double>::quiet_NaN();
    EvalMetrics test;
    double wall_time_s = 0.0;
    bool failed = false;
    std::string failure;
};

/// Bag scores for a set of bags: N x 1 (binary) or N x C.
inline Matrix score_bags(const ModelParams& p, const Dataset& ds, const std::vector<std::size_t>& idx) {
    const std::size_t C = p.spec.num_classes;
    Matrix out(idx.size(), C);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        BagOutput o = forward(p, ds.bags[idx[i]].features);
        for (std::size_t c = 0; c < C; ++c) out(i, c) = o.bag_scores[c];
    }
    return out;
}

/// AUC of `p` on the given bags: binary AUC or macro AUC.
inline double evaluate_auc(const ModelParams& p, const Dataset& ds, const std::vector<std::size_t>& idx) {
    Matrix s = score_bags(p, ds, idx);
    std::vector<int> labels;
    labels.reserve(idx.size());
    for (auto i : idx) labels.push_back(static_cast<int>(ds.bags[i].label));
    if (p.spec.num_classes == 1) {
        std::vector<double> col(s.data().begin(), s.data().end());
        return binary_auc(col, labels);
    }
    return macro_auc(s, labels);
}

inline EvalMetrics evaluate(const ModelParams& p, const Dataset& ds, const std::vector<std::size_t>& idx) {
    EvalMetrics m;
    m.bags = idx.size();
    if (idx.empty()) return m;
    double loss = 0.0;
    std::size_t correct = 0;
    for (auto i : idx) {
        const Bag& b = ds.bags[i];
        loss += bag_loss(p, b.features, b.label);
        if (predicted_class(p, forward(p, b.features)) == b.label) ++correct;
    }
    m.loss = loss / static_cast<double>(idx.size());
    m.accuracy = static_cast<double>(correct) / static_cast<double>(idx.size());
    try {
        m.auc = evaluate_auc(p, ds, idx);
    } catch (const UndefinedAucError&) {
        // single-class split: AUC stays NaN
    }
    return m;
}

/// Stream ids for the per-run generators, disjoint from the per-bag streams of
/// the synthetic generator.
inline constexpr std::uint64_t kInitStream = 0x494E495400000000ULL;
inline constexpr std::uint64_t kOrderStream = 0x5348554600000000ULL;

inline ModelSpec spec_for(HeadKind kind, const Dataset& ds) {
    ModelSpec s;
    s.kind = kind;
    s.feature_dim = ds.feature_dim;
    s.num_classes = ds.head_classes();
    return s;
}

/// Trains one (spec, lr, seed) cell. Deterministic given (seed, dataset).
inline RunResult train_one(const ModelSpec& spec, const Dataset& ds, double lr, std::uint64_t seed,
                           const TrainConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (spec.feature_dim != ds.feature_dim) throw Error("model feature dim does not match dataset");
    if (spec.num_classes != ds.head_classes()) throw Error("model class count does not match dataset");
    const auto train_idx = ds.indices(Split::Train);
    const auto val_idx = ds.indices(Split::Val);
    const auto test_idx = ds.indices(Split::Test);
    if (train_idx.empty()) throw Error("empty train split");
    if (val_idx.empty()) throw Error("empty val split");
    if (cfg.epochs < 1) throw Error("epochs must be >= 1");

    RunResult r;
    r.spec = spec;
    r.tag = ds.tag;
    r.lr = lr;
    r.seed = seed;
    r.epochs = cfg.epochs;
    r.selection = cfg.selection;

    ModelParams params = init_params(spec, SplitMix64::derive(seed, kInitStream));
    std::vector<Matrix*> slots;
    for (auto& t : params.tensors) slots.push_back(&t.value);
    AdamState state = AdamState::zeros_like(slots);
    SplitMix64 order_rng(SplitMix64::derive(seed, kOrderStream));
    std::vector<std::size_t> order = train_idx;

    ModelParams best = params;
    double best_auc = -std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr_t = cosine_lr(lr, epoch, cfg.epochs);
        order_rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        for (std::size_t i : order) {
            const Bag& bag = ds.bags[i];
            Graph g;
            auto ids = bind_params(g, params);
            NodeId loss = build_loss(g, spec, ids, bag.features, bag.label);
            const double l = g.value(loss).item();
            if (!std::isfinite(l)) {
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + " on bag '" +
                                      bag.slide_id + "'");
            }
            loss_sum += l;
            Gradients grads = g.backward(loss);
            std::vector<const Matrix*> gptr;
            gptr.reserve(ids.size());
            for (NodeId id : ids) gptr.push_back(&grads.at(id));
            adam_step(slots, gptr, state, lr_t, cfg.weight_decay, cfg.adam);
        }
        for (const auto& t : params.tensors) {
            if (!t.value.all_finite()) throw DivergenceError("non-finite parameter '" + t.name + "' at epoch " + std::to_string(epoch));
        }
        EpochRecord rec;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.val_auc = evaluate_auc(params, ds, val_idx);
        if (std::isnan(rec.val_auc)) throw DivergenceError("validation AUC is NaN at epoch " + std::to_string(epoch));
        r.history.push_back(rec);
        if (cfg.selection == Selection::BestValAuc && rec.val_auc > best_auc) {
            best_auc = rec.val_auc;
            best = params;
            r.selected_epoch = epoch;
        }
    }
    if (cfg.selection == Selection::LastEpoch) {
        best = params;
        r.selected_epoch = cfg.epochs - 1;
    }
    r.selected_val_auc = r.history[r.selected_epoch].val_auc;
    r.params = std::move(best);
    r.test = evaluate(r.params, ds, test_idx);
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

/// Runs fn(0..jobs-1) on up to `workers` threads. Exceptions from fn must be
/// handled by the caller's fn.
inline void parallel_for(std::size_t jobs, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, jobs));
    if (workers == 1) {
        for (std::size_t i = 0; i < jobs; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < jobs; i = next++) fn(i);
        });
    }
}

struct LrSummary {
    double lr = 0.0;
    double mean_selection_auc = std::numeric_limits<double>::quiet_NaN();
    std::size_t failed_cells = 0;
};

struct GridResult {
    double best_lr = 0.0;
    std::vector<RunResult> best_runs;  // one per seed, at best_lr
    std::vector<RunResult> cells;      // lr-major, seed-minor
    std::vector<LrSummary> per_lr;
};

/// Picks the learning rate maximizing mean selection AUC over seeds. A rate
/// with any failed cell only competes if no rate is failure-free. Ties go to
/// the smaller rate.
inline std::size_t select_lr(const std::vector<LrSummary>& per_lr) {
    auto pick = [&](bool require_clean) -> std::optional<std::size_t> {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < per_lr.size(); ++i) {
            const auto& s = per_lr[i];
            if (require_clean && s.failed_cells > 0) continue;
            if (std::isnan(s.mean_selection_auc)) continue;
            if (!best || s.mean_selection_auc > per_lr[*best].mean_selection_auc ||
                (s.mean_selection_auc == per_lr[*best].mean_selection_auc && s.lr < per_lr[*best].lr)) {
                best = i;
            }
        }
        return best;
    };
    if (auto b = pick(true)) return *b;
    if (auto b = pick(false)) return *b;
    throw Error("every grid-search cell failed");
}

inline GridResult grid_search(const ModelSpec& spec, const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t n_lr = cfg.lr_grid.size();
    const std::size_t n_seed = cfg.seeds.size();
    GridResult out;
    out.cells.resize(n_lr * n_seed);
    parallel_for(out.cells.size(), cfg.workers, [&](std::size_t job) {
        const double lr = cfg.lr_grid[job / n_seed];
        const std::uint64_t seed = cfg.seeds[job % n_seed];
        try {
            out.cells[job] = train_one(spec, ds, lr, seed, cfg);
        } catch (const std::exception& e) {
            RunResult failed;
            failed.spec = spec;
            failed.tag = ds.tag;
            failed.lr = lr;
            failed.seed = seed;
            failed.epochs = cfg.epochs;
            failed.selection = cfg.selection;
            failed.failed = true;
            failed.failure = e.what();
            out.cells[job] = std::move(failed);
        }
    });
    for (std::size_t l = 0; l < n_lr; ++l) {
        LrSummary s;
        s.lr = cfg.lr_grid[l];
        double total = 0.0;
        std::size_t ok = 0;
        for (std::size_t k = 0; k < n_seed; ++k) {
            const RunResult& r = out.cells[l * n_seed + k];
            if (r.failed) {
                ++s.failed_cells;
            } else {
                total += r.selected_val_auc;
                ++ok;
            }
        }
        if (ok) s.mean_selection_auc = total / static_cast<double>(ok);
        out.per_lr.push_back(s);
    }
    const std::size_t best = select_lr(out.per_lr);
    out.best_lr = out.per_lr[best].lr;
    for (std::size_t k = 0; k < n_seed; ++k) {
        const RunResult& r = out.cells[best * n_seed + k];
        if (!r.failed) out.best_runs.push_back(r);
    }
    return out;
}

}  // namespace milpool
