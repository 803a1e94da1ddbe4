// milpool command-line interface: synth, train, bench, report, heatmap.
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "milpool/milpool.hpp"

namespace fs = std::filesystem;
using namespace milpool;

namespace {

/// Flags shared by every subcommand that needs a dataset.
struct DataOptions {
    std::vector<std::string> manifests;
    double mu = 6.0;
    double witness = 0.1;
    std::size_t bags = 100;
    std::size_t val_bags = 25;
    std::size_t test_bags = 50;
    std::size_t k_min = 32;
    std::size_t k_max = 64;
    std::size_t dim = 16;
    std::size_t classes = 2;
    bool no_coords = false;
};

struct TrainOptions {
    std::size_t epochs = 100;
    double weight_decay = 1e-5;
    std::vector<double> lrs = {1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3};
    std::size_t seeds = 3;
    std::string selection = "best_val_auc";
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    bool mix_literal_sum = false;
};

const CLI::Validator kUnitInterval(
    [](std::string& s) -> std::string {
        double v = 0.0;
        try {
            v = parse_double(s);
        } catch (const std::exception&) {
            return "not a number: " + s;
        }
        if (!(v > 0.0 && v <= 1.0)) return "witness rate must be in (0, 1], got " + s;
        return {};
    },
    "in (0,1]");

void add_synth_flags(CLI::App& cmd, DataOptions& d) {
    cmd.add_option("--mu", d.mu, "Witness mean shift (separability)")->check(CLI::NonNegativeNumber);
    cmd.add_option("--witness", d.witness, "Witness rate w in (0, 1]")->check(kUnitInterval);
    cmd.add_option("--bags", d.bags, "Training bags per class");
    cmd.add_option("--val-bags", d.val_bags, "Validation bags per class");
    cmd.add_option("--test-bags", d.test_bags, "Test bags per class");
    cmd.add_option("--k-min", d.k_min, "Smallest bag size")->check(CLI::PositiveNumber);
    cmd.add_option("--k-max", d.k_max, "Largest bag size")->check(CLI::PositiveNumber);
    cmd.add_option("--dim", d.dim, "Feature dimension")->check(CLI::PositiveNumber);
    cmd.add_option("--classes", d.classes, "Number of classes (2 = binary)")->check(CLI::Range(2, 1000));
    cmd.add_flag("--no-coords", d.no_coords, "Do not store grid coordinates");
}

/// Adds --manifest plus the inline synthetic flags, mutually exclusive.
void add_data_flags(CLI::App& cmd, DataOptions& d) {
    auto* manifest = cmd.add_option("--manifest", d.manifests, "Dataset manifest CSV (repeat for several tags)");
    add_synth_flags(cmd, d);
    for (const char* name : {"--mu", "--witness", "--bags", "--val-bags", "--test-bags", "--k-min", "--k-max",
                             "--dim", "--classes", "--no-coords"}) {
        manifest->excludes(cmd.get_option(name));
    }
}

void add_train_flags(CLI::App& cmd, TrainOptions& t) {
    cmd.add_option("--epochs", t.epochs, "Training epochs")->check(CLI::PositiveNumber);
    cmd.add_option("--wd", t.weight_decay, "Decoupled weight decay")->check(CLI::NonNegativeNumber);
    cmd.add_option("--lr", t.lrs, "Learning-rate grid")->check(CLI::PositiveNumber);
    cmd.add_option("--seeds", t.seeds, "Repetitions per learning rate")->check(CLI::PositiveNumber);
    cmd.add_option("--selection", t.selection, "Model selection")
        ->check(CLI::IsMember({"best_val_auc", "last_epoch"}));
    cmd.add_option("--workers", t.workers, "Concurrent grid cells (default: $MILPOOL_WORKERS, else hardware threads)")
        ->check(CLI::PositiveNumber);
    cmd.add_flag("--mix-literal-sum", t.mix_literal_sum, "MixMIL: sum instead of mean in the non-max branch");
}

SynthConfig synth_config(const DataOptions& d, std::uint64_t seed) {
    SynthConfig c;
    c.bags_per_class = {d.bags, d.val_bags, d.test_bags};
    c.k_min = d.k_min;
    c.k_max = d.k_max;
    c.dim = d.dim;
    c.witness_rate = d.witness;
    c.separability = d.mu;
    c.num_classes = d.classes;
    c.seed = seed;
    c.with_coords = !d.no_coords;
    return c;
}

/// Loads every manifest, or synthesizes one dataset from the root seed.
std::vector<Dataset> load_data(const DataOptions& d, std::uint64_t seed) {
    std::vector<Dataset> out;
    if (d.manifests.empty()) {
        out.push_back(generate_synthetic(synth_config(d, seed)).dataset);
        return out;
    }
    for (const auto& m : d.manifests) out.push_back(load_dataset(m));
    std::map<std::string, std::string> tags;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].feature_dim != out[0].feature_dim) {
            throw Error("manifests '" + d.manifests[0] + "' and '" + d.manifests[i] + "' have different feature dims (" +
                        std::to_string(out[0].feature_dim) + " vs " + std::to_string(out[i].feature_dim) + ")");
        }
        if (auto [it, fresh] = tags.emplace(out[i].tag, d.manifests[i]); !fresh) {
            throw Error("manifests '" + it->second + "' and '" + d.manifests[i] + "' share the tag '" + out[i].tag +
                        "'");
        }
    }
    return out;
}

TrainConfig train_config(const TrainOptions& t, std::uint64_t seed) {
    TrainConfig c;
    c.epochs = t.epochs;
    c.weight_decay = t.weight_decay;
    c.lr_grid = t.lrs;
    c.seeds.clear();
    for (std::size_t i = 0; i < t.seeds; ++i) c.seeds.push_back(seed + i);
    c.selection = parse_selection(t.selection);
    c.workers = t.workers;
    c.validate();
    return c;
}

std::string run_stem(const RunResult& r) {
    return std::string(to_string(r.spec.kind)) + "_" + r.tag + "_lr" + format_double(r.lr) + "_seed" +
           std::to_string(r.seed);
}

/// method,tag,lr,seed,failed,selected_epoch,val_auc,test_auc,selected
std::string grid_csv(const std::vector<std::pair<GridResult, std::string>>& grids) {
    std::string out = "method,tag,lr,seed,failed,selected_epoch,val_auc,test_auc,selected\n";
    for (const auto& [g, method] : grids) {
        for (const auto& c : g.cells) {
            out += method + "," + c.tag + "," + format_double(c.lr) + "," + std::to_string(c.seed) + ",";
            out += c.failed ? "1,,," : "0," + std::to_string(c.selected_epoch) + "," + format_double(c.selected_val_auc) +
                                            "," + format_double(c.test.auc) + ",";
            out += c.lr == g.best_lr ? "1\n" : "0\n";
        }
    }
    return out;
}

struct Reports {
    std::string markdown;
    std::string csv;
    std::string boxplot;
};

Reports build_reports(const std::vector<RunResult>& runs) {
    std::vector<SummaryRecord> records;
    for (const auto& r : runs) {
        if (!r.failed) records.push_back(SummaryRecord::from(r));
    }
    Summary s = summarize(records);
    return {summary_markdown(s), summary_csv(s), boxplot_csv(records)};
}

void write_reports(const Reports& r, const fs::path& dir) {
    write_text_file(dir / "report.md", r.markdown);
    write_text_file(dir / "report.csv", r.csv);
    write_text_file(dir / "boxplot.csv", r.boxplot);
}

/// Writes `count` heatmaps for the highest- and lowest-scored test bags.
void write_test_heatmaps(const RunResult& run, const Dataset& ds, std::size_t count, const fs::path& dir) {
    if (count == 0) return;
    auto test = ds.indices(Split::Test);
    std::vector<std::pair<double, std::size_t>> ranked;
    std::map<std::size_t, BagOutput> outputs;
    for (auto i : test) {
        if (!ds.bags[i].coords) continue;
        BagOutput o = forward(run.params, ds.bags[i].features);
        // Positive-class score: class 1 for binary heads, 1 - P(class 0) otherwise.
        double s = run.spec.num_classes == 1 ? o.bag_scores[0] : 1.0 - o.bag_scores[0];
        ranked.emplace_back(s, i);
        outputs.emplace(i, std::move(o));
    }
    if (ranked.empty()) return;
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    fs::create_directories(dir);
    const std::size_t n = std::min(count, ranked.size());
    auto emit = [&](const std::string& prefix, std::size_t rank, std::size_t idx) {
        const Bag& bag = ds.bags[idx];
        auto values = heatmap_values(run.params, outputs.at(idx));
        export_heatmap(bag, values, dir / (prefix + std::to_string(rank) + "_" + bag.slide_id));
    };
    for (std::size_t r = 0; r < n; ++r) emit("top", r, ranked[r].second);
    for (std::size_t r = 0; r < n; ++r) emit("bottom", r, ranked[ranked.size() - 1 - r].second);
}

/// Result files under `dir`, sorted by path.
std::vector<fs::path> result_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("'" + dir.string() + "' is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error("no result files (*.txt) in '" + dir.string() + "'");
    return files;
}

int cmd_synth(const DataOptions& d, std::uint64_t seed, const std::string& out) {
    auto data = generate_synthetic(synth_config(d, seed));
    data.dataset.validate();
    std::cout << write_synthetic(data, out).string() << "\n";
    return 0;
}

int cmd_train(const DataOptions& d, const TrainOptions& t, std::uint64_t seed, const std::string& model,
              std::size_t heatmaps, const std::string& out) {
    auto datasets = load_data(d, seed);
    if (datasets.size() != 1) throw Error("train takes exactly one dataset");
    const Dataset& ds = datasets.front();
    TrainConfig cfg = train_config(t, seed);
    ModelSpec spec = spec_for(parse_head_kind(model), ds);
    spec.mix_literal_sum = t.mix_literal_sum;
    GridResult g = grid_search(spec, ds, cfg);

    const fs::path dir(out);
    fs::create_directories(dir);
    write_text_file(dir / "grid.csv", grid_csv({{g, std::string(to_string(spec.kind))}}));
    for (const auto& r : g.best_runs) {
        const std::string stem = run_stem(r);
        save_result(r, dir / (stem + ".txt"));
        write_text_file(dir / (stem + "_history.csv"), history_csv(r));
    }
    if (g.best_runs.empty()) throw Error("every run at the selected learning rate failed");
    write_test_heatmaps(g.best_runs.front(), ds, heatmaps, dir / "heatmaps");
    const RunResult& first = g.best_runs.front();
    std::cout << to_string(spec.kind) << " lr=" << format_double(g.best_lr)
              << " test_auc=" << format_fixed(first.test.auc, 4) << " -> " << dir.string() << "\n";
    return 0;
}

int cmd_bench(const DataOptions& d, const TrainOptions& t, std::uint64_t seed, const std::vector<std::string>& models,
              const std::string& out) {
    auto datasets = load_data(d, seed);
    TrainConfig cfg = train_config(t, seed);
    std::vector<HeadKind> kinds;
    for (const auto& m : models) {
        HeadKind k = parse_head_kind(m);
        if (std::find(kinds.begin(), kinds.end(), k) != kinds.end()) throw Error("model '" + m + "' listed twice");
        kinds.push_back(k);
    }

    std::vector<std::pair<GridResult, std::string>> grids;
    std::vector<RunResult> selected;
    for (const auto& ds : datasets) {
        for (HeadKind k : kinds) {
            ModelSpec spec = spec_for(k, ds);
            spec.mix_literal_sum = t.mix_literal_sum;
            GridResult g = grid_search(spec, ds, cfg);
            selected.insert(selected.end(), g.best_runs.begin(), g.best_runs.end());
            grids.emplace_back(std::move(g), std::string(to_string(k)));
        }
    }

    const fs::path dir(out);
    fs::create_directories(dir / "results");
    fs::create_directories(dir / "grid");
    for (const auto& [g, method] : grids) {
        for (const auto& c : g.cells) save_result(c, dir / "grid" / (run_stem(c) + ".txt"));
    }
    for (const auto& r : selected) save_result(r, dir / "results" / (run_stem(r) + ".txt"));
    write_text_file(dir / "grid.csv", grid_csv(grids));
    Reports rep = build_reports(selected);
    write_reports(rep, dir);
    std::cout << rep.markdown;
    return 0;
}

int cmd_report(const std::string& in, const std::string& out) {
    fs::path dir(in);
    if (fs::is_directory(dir / "results")) dir /= "results";
    auto files = result_files(dir);
    std::vector<RunResult> runs;
    std::vector<fs::path> origin;
    for (const auto& f : files) {
        runs.push_back(load_result(f));
        origin.push_back(f);
    }
    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (runs[i].spec.feature_dim != runs[0].spec.feature_dim) {
            throw Error("mixed feature dims: '" + origin[0].string() + "' has d=" +
                        std::to_string(runs[0].spec.feature_dim) + ", '" + origin[i].string() + "' has d=" +
                        std::to_string(runs[i].spec.feature_dim));
        }
    }
    Reports rep = build_reports(runs);
    fs::path target = out.empty() ? fs::path(in) : fs::path(out);
    fs::create_directories(target);
    write_reports(rep, target);
    std::cout << rep.markdown;
    return 0;
}

int cmd_heatmap(const std::string& result_path, const std::string& bag_path, const std::string& out) {
    RunResult r = load_result(result_path);
    if (r.failed) throw Error("'" + result_path + "' records a failed run");
    Bag bag = load_bag(bag_path, fs::path(bag_path).stem().string());
    BagOutput o = forward(r.params, bag.features);
    auto values = heatmap_values(r.params, o);
    fs::path stem(out);
    if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
    export_heatmap(bag, values, stem);
    std::cout << stem.string() << ".csv\n" << stem.string() << ".pgm\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MIL pooling training and evaluation engine"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI file with [synth]/[train]/[bench] sections; flags override it");
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "Root seed for all randomness")->capture_default_str();

    DataOptions data;
    TrainOptions train;
    if (const char* env = std::getenv("MILPOOL_WORKERS")) {
        const std::string text = env;
        std::size_t value = 0;
        auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc{} || end != text.data() + text.size() || value == 0) {
            std::cerr << "milpool: usage error: MILPOOL_WORKERS must be a positive integer, got '" << text << "'\n";
            return 2;
        }
        train.workers = value;
    }

    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and print its manifest path");
    std::string synth_out = "synthetic";
    add_synth_flags(*synth, data);
    synth->add_option("--out", synth_out, "Output directory")->capture_default_str();
    synth->add_option("--seed", seed, "Root seed");

    auto* trn = app.add_subcommand("train", "Grid-search one head and write its result files");
    std::string model;
    std::size_t heatmaps = 2;
    std::string train_out = "run";
    add_data_flags(*trn, data);
    add_train_flags(*trn, train);
    trn->add_option("--model", model, "Head to train")->required();
    trn->add_option("--heatmaps", heatmaps, "Heatmaps for the N highest and N lowest test bags");
    trn->add_option("--out", train_out, "Output directory")->capture_default_str();
    trn->add_option("--seed", seed, "Root seed");

    auto* bench = app.add_subcommand("bench", "Grid-search several heads and write a comparison report");
    std::vector<std::string> models;
    for (HeadKind k : kAllHeads) models.emplace_back(to_string(k));
    std::string bench_out = "bench";
    add_data_flags(*bench, data);
    add_train_flags(*bench, train);
    bench->add_option("--models", models, "Heads to compare");
    bench->add_option("--out", bench_out, "Output directory")->capture_default_str();
    bench->add_option("--seed", seed, "Root seed");

    auto* report = app.add_subcommand("report", "Rebuild report tables from stored result files");
    std::string report_in;
    std::string report_out;
    report->add_option("dir", report_in, "Bench output or directory of result files")->required();
    report->add_option("--out", report_out, "Output directory (default: the input directory)");

    auto* heat = app.add_subcommand("heatmap", "Export a heatmap of one bag under a trained model");
    std::string heat_result;
    std::string heat_bag;
    std::string heat_out = "heatmap";
    heat->add_option("--result", heat_result, "Result file of a trained run")->required();
    heat->add_option("--bag", heat_bag, "MILB bag file with coordinates")->required();
    heat->add_option("--out", heat_out, "Output stem; writes <stem>.csv and <stem>.pgm")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "milpool: usage error: " << e.what() << "\n";
        return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
    }

    try {
        if (*synth) return cmd_synth(data, seed, synth_out);
        if (*trn) return cmd_train(data, train, seed, model, heatmaps, train_out);
        if (*bench) return cmd_bench(data, train, seed, models, bench_out);
        if (*report) return cmd_report(report_in, report_out);
        if (*heat) return cmd_heatmap(heat_result, heat_bag, heat_out);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "milpool: error: " << msg << "\n";
        return 1;
    }
    return 1;
}
