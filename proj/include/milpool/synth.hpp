// Synthetic MIL bags with known witnesses.
//
// Negative bags (label 0) hold i.i.d. N(0, I) instances. A bag of class c >= 1
// carries ceil(w*K) witness instances drawn from N(mu * e_{c-1}, I), placed as
// one contiguous run in raster order; the rest is background.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "milpool/bag_io.hpp"
#include "milpool/dataset.hpp"
#include "milpool/rng.hpp"

namespace milpool {

struct SynthConfig {
    /// Bags per class in train, val, test.
    std::array<std::size_t, 3> bags_per_class = {100, 25, 50};
    std::size_t k_min = 32;
    std::size_t k_max = 64;
    std::size_t dim = 16;
    double witness_rate = 0.1;
    double separability = 6.0;
    std::size_t num_classes = 2;
    std::uint64_t seed = 0;
    bool with_coords = true;

    void validate() const {
        if (!(witness_rate > 0.0 && witness_rate <= 1.0)) throw Error("witness rate must be in (0, 1]");
        if (!(separability >= 0.0) || !std::isfinite(separability)) throw Error("separability must be >= 0");
        if (k_min < 1 || k_max < k_min) throw Error("bag size range must satisfy 1 <= k_min <= k_max");
        if (num_classes < 2) throw Error("need at least 2 classes");
        if (dim < num_classes - 1) throw Error("dim must be >= num_classes - 1");
    }
};

/// Number of witnesses in a positive bag of size K.
inline std::size_t witness_count(double rate, std::size_t K) {
    // The small offset absorbs rounding in rate*K (0.1*30 = 3.0000000000000004).
    auto n = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(K) - 1e-9));
    return std::clamp<std::size_t>(n, 1, K);
}

struct SynthData {
    Dataset dataset;
    /// Per bag: true for witness instances.
    std::vector<std::vector<bool>> witnesses;
};

inline SynthData generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    SynthData out;
    Dataset& ds = out.dataset;
    ds.tag = "synthetic";
    ds.num_labels = cfg.num_classes;
    ds.feature_dim = cfg.dim;
    std::uint64_t bag_counter = 0;
    constexpr std::array<Split, 3> kSplits = {Split::Train, Split::Val, Split::Test};
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t c = 0; c < cfg.num_classes; ++c) {
            for (std::size_t i = 0; i < cfg.bags_per_class[s]; ++i) {
                SplitMix64 rng(SplitMix64::derive(cfg.seed, bag_counter++));
                const std::size_t K = cfg.k_min + rng.below(cfg.k_max - cfg.k_min + 1);
                Matrix x(K, cfg.dim);
                for (double& v : x.data()) v = rng.normal();
                std::vector<bool> witness(K, false);
                if (c >= 1) {
                    const std::size_t n = witness_count(cfg.witness_rate, K);
                    const std::size_t start = rng.below(K - n + 1);
                    for (std::size_t k = start; k < start + n; ++k) {
                        witness[k] = true;
                        x(k, c - 1) += cfg.separability;
                    }
                }
                Bag bag;
                char id[64];
                std::snprintf(id, sizeof id, "%s_c%zu_%04zu", std::string(to_string(kSplits[s])).c_str(), c, i);
                bag.slide_id = id;
                bag.label = static_cast<std::uint32_t>(c);
                // Stored payload is 32-bit; keep the in-memory copy identical to what a reload yields.
                for (double& v : x.data()) v = static_cast<double>(static_cast<float>(v));
                bag.features = std::move(x);
                if (cfg.with_coords) {
                    const auto width = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(K))));
                    std::vector<GridCoord> coords(K);
                    for (std::size_t k = 0; k < K; ++k) {
                        coords[k] = {static_cast<std::uint32_t>(k / width), static_cast<std::uint32_t>(k % width)};
                    }
                    bag.coords = std::move(coords);
                }
                ds.bags.push_back(std::move(bag));
                ds.splits.push_back(kSplits[s]);
                out.witnesses.push_back(std::move(witness));
            }
        }
    }
    ds.validate();
    return out;
}

/// Writes bags/<slide_id>.milb, manifest.csv and witnesses.csv under `dir`.
/// Returns the manifest path.
inline std::filesystem::path write_synthetic(const SynthData& data, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "bags");
    std::vector<ManifestEntry> entries;
    std::string witness_csv = "slide_id,witness_indices\n";
    for (std::size_t i = 0; i < data.dataset.bags.size(); ++i) {
        const Bag& b = data.dataset.bags[i];
        std::string rel = "bags/" + b.slide_id + ".milb";
        save_bag(b, dir / rel);
        entries.push_back({rel, b.slide_id, b.label, data.dataset.splits[i]});
        witness_csv += b.slide_id + ',';
        bool first = true;
        for (std::size_t k = 0; k < data.witnesses[i].size(); ++k) {
            if (!data.witnesses[i][k]) continue;
            if (!first) witness_csv += ';';
            witness_csv += std::to_string(k);
            first = false;
        }
        witness_csv += '\n';
    }
    auto write_text = [](const fs::path& p, const std::string& text) {
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write '" + p.string() + "'");
        f << text;
    };
    const fs::path manifest = dir / "manifest.csv";
    write_text(manifest, manifest_csv(entries));
    write_text(dir / "witnesses.csv", witness_csv);
    return manifest;
}

}  // namespace milpool
