// Dataset manifests and in-memory datasets.
//
// A manifest is a UTF-8 CSV with header `path,slide_id,label,split`. Paths are
// relative to the manifest's directory unless absolute.
#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "milpool/bag_io.hpp"

namespace milpool {

enum class Split { Train, Val, Test };

inline constexpr std::string_view to_string(Split s) noexcept {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw FormatError("unknown split '" + std::string(s) + "'");
}

struct ManifestEntry {
    std::string path;
    std::string slide_id;
    std::uint32_t label = 0;
    Split split = Split::Train;
    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
};

inline constexpr std::string_view kManifestHeader = "path,slide_id,label,split";

inline std::string manifest_csv(const std::vector<ManifestEntry>& entries) {
    std::string out(kManifestHeader);
    out += '\n';
    for (const auto& e : entries) {
        out += e.path + ',' + e.slide_id + ',' + std::to_string(e.label) + ',' + std::string(to_string(e.split)) + '\n';
    }
    return out;
}

/// Parses manifest text; checks structure and unique slide ids only.
inline std::vector<ManifestEntry> parse_manifest(std::string_view text) {
    std::vector<ManifestEntry> entries;
    std::set<std::string> ids;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != kManifestHeader) {
                throw FormatError("manifest header must be '" + std::string(kManifestHeader) + "'");
            }
            header_seen = true;
            continue;
        }
        std::vector<std::string_view> fields;
        std::size_t start = 0;
        for (;;) {
            std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        auto where = [&] { return "manifest line " + std::to_string(line_no); };
        if (fields.size() != 4) throw FormatError(where() + ": expected 4 fields, got " + std::to_string(fields.size()));
        ManifestEntry e;
        e.path = std::string(fields[0]);
        e.slide_id = std::string(fields[1]);
        if (e.path.empty() || e.slide_id.empty()) throw FormatError(where() + ": empty path or slide_id");
        auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), e.label);
        if (ec != std::errc() || ptr != fields[2].data() + fields[2].size()) {
            throw FormatError(where() + ": bad label '" + std::string(fields[2]) + "'");
        }
        e.split = parse_split(fields[3]);
        if (!ids.insert(e.slide_id).second) throw FormatError("duplicate slide_id '" + e.slide_id + "'");
        entries.push_back(std::move(e));
    }
    if (!header_seen) throw FormatError("empty manifest");
    return entries;
}

/// Bags plus split membership. Immutable once loaded.
struct Dataset {
    std::string tag;
    std::vector<Bag> bags;
    std::vector<Split> splits;
    std::size_t num_labels = 0;  // distinct label values (>= 2)
    std::size_t feature_dim = 0;

    /// Output width of a head for this dataset: 1 for binary, else num_labels.
    std::size_t head_classes() const noexcept { return num_labels <= 2 ? 1 : num_labels; }

    std::vector<std::size_t> indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < splits.size(); ++i) {
            if (splits[i] == s) out.push_back(i);
        }
        return out;
    }

    /// Checks shared dimension, unique slide ids and label range.
    void validate() const {
        if (bags.size() != splits.size()) throw Error("dataset bag/split count mismatch");
        std::set<std::string> ids;
        for (const auto& b : bags) {
            if (!ids.insert(b.slide_id).second) throw FormatError("duplicate slide_id '" + b.slide_id + "'");
            if (b.dim() != feature_dim) {
                throw FormatError("bag '" + b.slide_id + "' has feature dim " + std::to_string(b.dim()) +
                                  ", dataset has " + std::to_string(feature_dim));
            }
            if (b.label >= num_labels) throw FormatError("bag '" + b.slide_id + "' label out of range");
        }
    }
};

/// Loads every bag named by a manifest and cross-checks labels and dims.
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw Error("cannot open manifest '" + manifest_path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    auto entries = parse_manifest(ss.str());
    if (entries.empty()) throw FormatError("manifest has no entries");

    Dataset ds;
    ds.tag = manifest_path.parent_path().filename().string();
    if (ds.tag.empty()) ds.tag = manifest_path.stem().string();
    const auto base = manifest_path.parent_path();
    std::uint32_t max_label = 0;
    for (const auto& e : entries) {
        std::filesystem::path p(e.path);
        if (p.is_relative()) p = base / p;
        Bag bag = load_bag(p, e.slide_id);
        if (bag.label != e.label) {
            throw FormatError(p.string() + ": stored label " + std::to_string(bag.label) + " != manifest label " +
                              std::to_string(e.label));
        }
        if (ds.bags.empty()) {
            ds.feature_dim = bag.dim();
        } else if (bag.dim() != ds.feature_dim) {
            throw FormatError(p.string() + ": feature dim " + std::to_string(bag.dim()) + " differs from " +
                              std::to_string(ds.feature_dim));
        }
        max_label = std::max(max_label, e.label);
        ds.bags.push_back(std::move(bag));
        ds.splits.push_back(e.split);
    }
    ds.num_labels = std::max<std::size_t>(2, max_label + 1);
    ds.validate();
    return ds;
}

}  // namespace milpool
