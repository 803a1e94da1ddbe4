// Acceptance driver: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "milpool/milpool.hpp"

namespace fs = std::filesystem;
using namespace milpool;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::vector<std::string> problems;
    std::string detail;

    void fail(std::string why) {
        pass = false;
        problems.push_back(std::move(why));
    }
};

int g_failures = 0;

void report(const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "PASS " : "FAIL ") << name;
    if (!o.detail.empty()) std::cout << ": " << o.detail;
    std::cout << "\n";
    const std::size_t shown = std::min<std::size_t>(o.problems.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) std::cout << "    " << o.problems[i] << "\n";
    if (o.problems.size() > shown) std::cout << "    ... " << o.problems.size() - shown << " more\n";
    std::cout.flush();
    if (!o.pass) ++g_failures;
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os.precision(digits);
    os << std::fixed << v;
    return os.str();
}

ModelSpec make_spec(HeadKind k, std::size_t d, std::size_t C) {
    ModelSpec s;
    s.kind = k;
    s.feature_dim = d;
    s.num_classes = C;
    return s;
}

Matrix random_matrix(SplitMix64& rng, std::size_t r, std::size_t c, double lo, double hi) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

// ---------------------------------------------------------------- counts

Outcome check_param_counts() {
    Outcome o;
    struct Exact {
        std::size_t d, C, mean, mix, atten;
    };
    const Exact exact[] = {
        {192, 1, 193, 194, 386},     {384, 1, 385, 386, 770},      {512, 1, 513, 514, 1026},
        {2048, 1, 2049, 2050, 4098}, {384, 3, 1155, 1156, 1540}, {512, 3, 1539, 1540, 2052},
    };
    std::size_t checked = 0;
    for (const auto& r : exact) {
        const std::pair<HeadKind, std::size_t> want[] = {
            {HeadKind::MeanMIL, r.mean}, {HeadKind::MaxMIL, r.mean},  {HeadKind::MixMIL, r.mix},
            {HeadKind::AutoMIL, r.mix},  {HeadKind::LNPMIL, r.mix},   {HeadKind::AttenMIL, r.atten},
        };
        for (auto [k, n] : want) {
            const std::size_t got = param_count(make_spec(k, r.d, r.C));
            ++checked;
            if (got != n) {
                o.fail(std::string(to_string(k)) + " d=" + std::to_string(r.d) + " C=" + std::to_string(r.C) +
                       ": " + std::to_string(got) + " != " + std::to_string(n));
            }
        }
    }
    // Embedding heads, in millions as printed (two decimals, or one where
    // the table prints one).
    struct Rounded {
        HeadKind k;
        std::size_t d, C;
        double millions;
        int decimals;
    };
    const Rounded rounded[] = {
        {HeadKind::ABMIL, 192, 1, 0.03, 2},  {HeadKind::DSMIL, 192, 1, 0.06, 2},
        {HeadKind::ABMIL, 384, 1, 0.05, 2},  {HeadKind::DSMIL, 384, 1, 0.2, 1},
        {HeadKind::ABMIL, 512, 1, 0.07, 2},  {HeadKind::DSMIL, 512, 1, 0.33, 2},
        {HeadKind::ABMIL, 2048, 1, 0.26, 2}, {HeadKind::DSMIL, 2048, 1, 4.46, 2},
        {HeadKind::ABMIL, 384, 3, 0.05, 2},  {HeadKind::DSMIL, 384, 3, 0.33, 2},
        {HeadKind::ABMIL, 512, 3, 0.07, 2},  {HeadKind::DSMIL, 512, 3, 0.33, 2},
    };
    for (const auto& r : rounded) {
        const std::size_t got = param_count(make_spec(r.k, r.d, r.C));
        const double scale = std::pow(10.0, r.decimals);
        const double shown = std::round(static_cast<double>(got) / 1e6 * scale) / scale;
        ++checked;
        if (std::fabs(shown - r.millions) > 1e-9) {
            o.fail(std::string(to_string(r.k)) + " d=" + std::to_string(r.d) + " C=" + std::to_string(r.C) + ": " +
                   std::to_string(got) + " rounds to " + fmt(shown, r.decimals) + "M, table " +
                   fmt(r.millions, r.decimals) + "M");
        }
    }
    o.detail = std::to_string(checked - o.problems.size()) + "/" + std::to_string(checked) + " table cells match";
    return o;
}

// ---------------------------------------------------------------- gradients

Outcome check_gradients_suite() {
    Outcome o;
    const auto t0 = Clock::now();
    SplitMix64 rng(SplitMix64::derive(2024, 1));
    double worst = 0.0;
    std::size_t bags = 0;
    for (HeadKind k : kAllHeads) {
        for (std::size_t C : {1u, 3u}) {
            for (int b = 0; b < 20; ++b) {
                const std::size_t d = rng.below(2) ? 16 : 8;
                const std::size_t K = 1 + rng.below(16);
                ModelSpec spec = make_spec(k, d, C);
                ModelParams p = init_params(spec, rng.next());
                for (auto& t : p.tensors) {
                    for (double& v : t.value.data()) v += 0.2 * rng.normal();
                }
                const Matrix x = random_matrix(rng, K, d, -1.5, 1.5);
                const std::size_t label = rng.below(C == 1 ? 2 : C);
                std::vector<Matrix> point;
                for (const auto& t : p.tensors) point.push_back(t.value);
                LossBuilder build = [&](Graph& g, std::span<const NodeId> ids) {
                    return build_loss(g, spec, ids, x, label);
                };
                const GradCheckReport rep = check_gradients(build, point);
                ++bags;
                worst = std::max(worst, rep.max_rel_error);
                if (!(rep.max_rel_error < 1e-4)) {
                    o.fail(std::string(to_string(k)) + " C=" + std::to_string(C) + " K=" + std::to_string(K) +
                           " d=" + std::to_string(d) + ": rel err " + std::to_string(rep.max_rel_error));
                }
            }
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 60.0) o.fail("runtime " + fmt(secs, 1) + " s >= 60 s");
    std::ostringstream os;
    os << bags << " bags, max rel err " << worst << ", " << fmt(secs, 1) << " s";
    o.detail = os.str();
    return o;
}

// ---------------------------------------------------------------- pooling

Outcome check_pooling() {
    Outcome o;
    SplitMix64 rng(SplitMix64::derive(2024, 2));
    double lnp_gap = 0.0, auto_gap = 0.0;
    std::size_t sandwich_checks = 0;
    const double slack = 1e-12;  // floating-point rounding of the pooled value
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t K = 1 + rng.below(64);
        const std::size_t C = 1 + rng.below(3);
        const Matrix y = random_matrix(rng, K, C, 0.0, 1.0);
        const Matrix mean = pool(HeadKind::MeanMIL, y);
        const Matrix max = pool(HeadKind::MaxMIL, y);

        PoolSettings s;
        s.alpha = 1.0;
        if (pool(HeadKind::MixMIL, y, s) != max) o.fail("Mix(1) != Max, trial " + std::to_string(trial));
        s.alpha = 0.0;
        if (pool(HeadKind::MixMIL, y, s) != mean) o.fail("Mix(0) != Mean, trial " + std::to_string(trial));
        const Matrix auto0 = pool(HeadKind::AutoMIL, y, s);
        for (std::size_t c = 0; c < C; ++c) {
            // Same value summed in a different order.
            if (std::fabs(auto0[c] - mean[c]) > 1e-14) o.fail("Auto(0) != Mean, trial " + std::to_string(trial));
        }
        s.exponent = 1.0 + Graph::softplus_value(-40.0);
        const Matrix lnp = pool(HeadKind::LNPMIL, y, s);
        for (std::size_t c = 0; c < C; ++c) lnp_gap = std::max(lnp_gap, std::fabs(lnp[c] - mean[c]));

        // Sandwich with random operator parameters.
        PoolSettings r;
        r.alpha = rng.uniform(0.0, 1.0);
        const Matrix mix = pool(HeadKind::MixMIL, y, r);
        r.alpha = rng.uniform(0.0, 50.0);
        const Matrix autop = pool(HeadKind::AutoMIL, y, r);
        r.exponent = 1.0 + Graph::softplus_value(rng.uniform(-10.0, 10.0));
        const Matrix lnpr = pool(HeadKind::LNPMIL, y, r);
        const std::pair<const char*, const Matrix*> ops[] = {{"MixMIL", &mix}, {"AutoMIL", &autop}, {"LNPMIL", &lnpr}};
        for (auto [name, v] : ops) {
            for (std::size_t c = 0; c < C; ++c) {
                ++sandwich_checks;
                if ((*v)[c] < mean[c] - slack || (*v)[c] > max[c] + slack) {
                    o.fail(std::string(name) + " outside [Mean, Max], trial " + std::to_string(trial));
                }
            }
        }

        // Auto(1e3) on a tie-free bag: the maximum leads every other score by >= 0.01.
        Matrix tf(K, 1);
        for (;;) {
            for (double& v : tf.data()) v = rng.uniform(0.0, 1.0);
            std::vector<double> sorted(tf.data().begin(), tf.data().end());
            std::sort(sorted.rbegin(), sorted.rend());
            if (K == 1 || sorted[0] - sorted[1] >= 0.01) break;
        }
        PoolSettings hot;
        hot.alpha = 1e3;
        auto_gap = std::max(auto_gap, std::fabs(pool(HeadKind::AutoMIL, tf, hot).item() -
                                                pool(HeadKind::MaxMIL, tf).item()));
    }
    if (!(lnp_gap <= 1e-6)) o.fail("LNP(-40) differs from Mean by " + std::to_string(lnp_gap));
    if (!(auto_gap <= 1e-3)) o.fail("Auto(1e3) differs from Max by " + std::to_string(auto_gap));
    std::ostringstream os;
    os << "1000 bags; |LNP(-40)-Mean| <= " << lnp_gap << ", |Auto(1e3)-Max| <= " << auto_gap << ", "
       << sandwich_checks << " sandwich checks";
    o.detail = os.str();
    return o;
}

// ---------------------------------------------------------------- AUC / Welch

double brute_force_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            total += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

// Two-sided p-value: 1 - 2 * integral of the t density over [0, |t|] (trapezoid rule).
double integrated_p(double t, double dof) {
    const double c = std::exp(std::lgamma((dof + 1) / 2) - std::lgamma(dof / 2)) / std::sqrt(dof * M_PI);
    auto f = [&](double x) { return c * std::pow(1.0 + x * x / dof, -(dof + 1) / 2); };
    const double b = std::fabs(t);
    const int n = 400000;
    const double h = b / n;
    double area = 0.5 * (f(0) + f(b));
    for (int i = 1; i < n; ++i) area += f(i * h);
    return 1.0 - 2.0 * area * h;
}

Outcome check_auc_and_welch() {
    Outcome o;
    SplitMix64 rng(SplitMix64::derive(2024, 3));
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.below(49);
        std::vector<double> s(n);
        std::vector<int> y(n);
        const std::uint64_t levels = 1 + rng.below(12);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(levels)) / 8.0;
            y[i] = static_cast<int>(rng.below(2));
        }
        if (std::count(y.begin(), y.end(), 1) == 0) y[rng.below(n)] = 1;
        if (std::count(y.begin(), y.end(), 0) == 0) y[rng.below(n)] = 0;
        const double rank = binary_auc(s, y);
        const double brute = brute_force_auc(s, y);
        if (rank != brute) o.fail("AUC trial " + std::to_string(trial) + ": " + std::to_string(rank) + " != " +
                                  std::to_string(brute));
    }
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> xs(2 + rng.below(10)), ys(2 + rng.below(10));
        const double shift = rng.uniform(-2, 2);
        for (double& x : xs) x = rng.normal();
        for (double& v : ys) v = rng.normal() * rng.uniform(0.3, 3) + shift;
        const WelchResult r = welch_t_test(xs, ys);
        const double gap = std::fabs(r.p_value - integrated_p(r.t, r.dof));
        worst = std::max(worst, gap);
        if (!(gap <= 1e-6)) o.fail("Welch trial " + std::to_string(trial) + ": gap " + std::to_string(gap));
    }
    std::ostringstream os;
    os << "1000 AUC inputs exact; 100 Welch cases, max |p - oracle| " << worst;
    o.detail = os.str();
    return o;
}

// ---------------------------------------------------------------- multi-class

// Literal two-step rule: the instance with the highest class-1/class-2 score
// is selected; its class scores (MixMIL: mixed with the per-class mean) are
// compared. Ties go to the lowest index.
std::size_t literal_two_step(const Matrix& y, bool mix, double alpha) {
    std::size_t m = 0;
    double best = -1.0;
    for (std::size_t k = 0; k < y.rows(); ++k) {
        const double v = std::max(y(k, 1), y(k, 2));
        if (v > best) {
            best = v;
            m = k;
        }
    }
    double top = -1.0;
    std::size_t cls = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        double v = y(m, c);
        if (mix) {
            double sum = 0.0;
            for (std::size_t k = 0; k < y.rows(); ++k) sum += y(k, c);
            v = alpha * v + (1.0 - alpha) * (sum / static_cast<double>(y.rows()));
        }
        if (v > top) {
            top = v;
            cls = c;
        }
    }
    return cls;
}

Outcome check_multiclass_rule() {
    Outcome o;
    SplitMix64 rng(SplitMix64::derive(2024, 4));
    std::size_t ties = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t K = 1 + rng.below(32);
        Matrix y(K, 3);
        const bool coarse = trial % 2 == 1;  // coarse grid forces ties
        for (double& v : y.data()) v = coarse ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform(0.0, 1.0);
        if (coarse) ++ties;
        const double alpha = rng.uniform(0.0, 1.0);
        const std::size_t got_max = predict_multiclass(HeadKind::MaxMIL, y);
        const std::size_t got_mix = predict_multiclass(HeadKind::MixMIL, y, alpha);
        if (got_max != literal_two_step(y, false, 1.0)) o.fail("MaxMIL disagrees, trial " + std::to_string(trial));
        if (got_mix != literal_two_step(y, true, alpha)) o.fail("MixMIL disagrees, trial " + std::to_string(trial));
    }
    o.detail = "10000 matrices (" + std::to_string(ties) + " on a tie-heavy grid), MaxMIL and MixMIL";
    return o;
}

// ---------------------------------------------------------------- benchmark

Outcome check_benchmark(std::size_t workers) {
    Outcome o;
    const auto t0 = Clock::now();
    std::ostringstream detail;
    for (double mu : {6.0, 0.0}) {
        SynthConfig sc;
        sc.bags_per_class = {100, 25, 50};
        sc.k_min = 32;
        sc.k_max = 64;
        sc.dim = 16;
        sc.witness_rate = 0.1;
        sc.separability = mu;
        sc.seed = 0;
        Dataset ds = generate_synthetic(sc).dataset;
        ds.tag = "mu" + fmt(mu, 0);

        TrainConfig cfg;
        cfg.seeds = {0, 1, 2};
        cfg.workers = workers;

        double best_inst = 0.0, best_emb = 0.0;
        detail << (mu > 0 ? "" : "; ") << "mu=" << fmt(mu, 0) << ":";
        for (HeadKind k : kAllHeads) {
            const GridResult grid = grid_search(spec_for(k, ds), ds, cfg);
            std::vector<double> aucs;
            for (const auto& r : grid.best_runs) aucs.push_back(r.test.auc);
            const double m = aucs.empty() ? std::nan("") : mean(aucs);
            if (aucs.size() != cfg.seeds.size()) {
                o.fail(std::string(to_string(k)) + " mu=" + fmt(mu, 0) + ": only " + std::to_string(aucs.size()) +
                       " successful seeds at the selected lr");
            }
            detail << " " << to_string(k) << "=" << fmt(m, 3);
            std::cout << "    mu=" << fmt(mu, 0) << " " << to_string(k) << " lr=" << grid.best_lr
                      << " mean test AUC " << fmt(m, 4) << " (" << fmt(seconds_since(t0), 0) << " s elapsed)\n";
            std::cout.flush();
            if (mu > 0) {
                (is_instance_based(k) ? best_inst : best_emb) =
                    std::max(is_instance_based(k) ? best_inst : best_emb, m);
                const bool required = k == HeadKind::MaxMIL || k == HeadKind::MixMIL || k == HeadKind::LNPMIL ||
                                      k == HeadKind::ABMIL || k == HeadKind::DSMIL;
                if (required && !(m >= 0.90)) {
                    o.fail(std::string(to_string(k)) + " mu=6 mean test AUC " + fmt(m, 4) + " < 0.90");
                }
            } else if (!(std::fabs(m - 0.5) <= 0.1)) {
                o.fail(std::string(to_string(k)) + " mu=0 mean test AUC " + fmt(m, 4) + " outside 0.5 +- 0.1");
            }
        }
        if (mu > 0) {
            const double gap = std::fabs(best_inst - best_emb);
            detail << " |inst-emb|=" << fmt(gap, 3);
            if (!(gap <= 0.05)) o.fail("|best instance - best embedding| = " + fmt(gap, 4) + " > 0.05");
        }
    }
    const double secs = seconds_since(t0);
    detail << "; " << fmt(secs, 0) << " s";
    if (secs >= 15 * 60) o.fail("runtime " + fmt(secs, 0) + " s >= 900 s");
    o.detail = detail.str();
    return o;
}

// ---------------------------------------------------------------- determinism

int run(const std::string& cmd) {
    std::cout.flush();
    const int st = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

Outcome check_determinism(const std::string& cli, const fs::path& work) {
    Outcome o;
    fs::remove_all(work / "bench");
    const std::string common = cli +
                               " bench --mu 4 --witness 0.2 --bags 16 --val-bags 8 --test-bags 8 --k-min 8 --k-max 16"
                               " --dim 6 --epochs 8 --lr 0.0005 0.005 --seeds 3 --seed 17";
    const std::array<std::pair<std::string, std::string>, 3> runs = {{
        {"w1", " --workers 1"},
        {"w1_again", " --workers 1"},
        {"w4", " --workers 4"},
    }};
    for (const auto& [name, flags] : runs) {
        const fs::path out = work / "bench" / name;
        if (const int rc = run(common + flags + " --out " + out.string()); rc != 0) {
            o.fail("bench " + name + " exited with " + std::to_string(rc));
            return o;
        }
    }
    const char* files[] = {"report.md", "report.csv", "boxplot.csv", "grid.csv"};
    for (const char* f : files) {
        const std::string ref = read_text_file(work / "bench" / "w1" / f);
        for (const char* other : {"w1_again", "w4"}) {
            if (read_text_file(work / "bench" / other / f) != ref) o.fail(std::string(f) + " differs in " + other);
        }
    }
    const fs::path again = work / "bench" / "report_again";
    if (run(cli + " report " + (work / "bench" / "w4").string() + " --out " + again.string()) != 0) {
        o.fail("report command failed");
    } else {
        for (const char* f : {"report.md", "report.csv", "boxplot.csv"}) {
            if (read_text_file(again / f) != read_text_file(work / "bench" / "w1" / f)) {
                o.fail(std::string(f) + " differs when rebuilt by report");
            }
        }
    }
    o.detail = "8 heads x 2 lr x 3 seeds, workers 1/1/4 and report rebuild byte-identical";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"milpool acceptance checks"};
    std::string cli;
    std::string work = "acceptance_work";
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    bool skip_benchmark = false;
    app.add_option("--cli", cli, "Path to the milpool executable")->required();
    app.add_option("--work", work, "Scratch directory");
    app.add_option("--workers", workers, "Concurrent grid cells for the benchmark")->check(CLI::PositiveNumber);
    app.add_flag("--skip-benchmark", skip_benchmark, "Skip the end-to-end benchmark");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(work);

    report("param-counts", check_param_counts());
    report("gradient-suite", check_gradients_suite());
    report("pooling-identities", check_pooling());
    report("auc-and-welch-oracles", check_auc_and_welch());
    report("multiclass-rule", check_multiclass_rule());
    report("bench-determinism", check_determinism(cli, work));
    if (skip_benchmark) {
        std::cout << "FAIL synthetic-benchmark: skipped\n";
        ++g_failures;
    } else {
        report("synthetic-benchmark", check_benchmark(workers));
    }
    std::cout << (g_failures == 0 ? "all criteria passed" : std::to_string(g_failures) + " criteria failed") << "\n";
    return g_failures == 0 ? 0 : 1;
}
