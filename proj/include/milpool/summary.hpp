// Cross-run summaries: mean +- std of test AUC per (method, tag), per-method
// averages, and Welch tests against the best method.
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "milpool/heads.hpp"
#include "milpool/stats.hpp"
#include "milpool/text.hpp"
#include "milpool/trainer.hpp"

namespace milpool {

inline constexpr double kSignificanceLevel = 0.05;

struct SummaryRecord {
    HeadKind method = HeadKind::MeanMIL;
    std::string tag;
    std::uint64_t seed = 0;
    double test_auc = 0.0;
    std::size_t param_count = 0;

    static SummaryRecord from(const RunResult& r) {
        return {r.spec.kind, r.tag, r.seed, r.test.auc, milpool::param_count(r.spec)};
    }
};

struct SummaryCell {
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0;  // sample std, 0 for a single run
};

struct SummaryRow {
    HeadKind method = HeadKind::MeanMIL;
    std::optional<std::size_t> param_count;  // unset when tags disagree
    std::map<std::string, SummaryCell> cells;  // by tag
    double average = 0.0;                      // mean of cell means
    bool reference = false;
    std::optional<WelchResult> welch;  // vs. reference; unset for the reference or if undefined
};

struct Summary {
    std::vector<std::string> tags;
    std::vector<SummaryRow> rows;  // in kAllHeads order
    std::size_t reference_row = 0;
};

/// Groups runs by (method, tag). The Welch comparison uses per-tag means when
/// there are at least two tags, otherwise the per-seed AUCs.
inline Summary summarize(const std::vector<SummaryRecord>& records) {
    if (records.empty()) throw Error("nothing to summarize");
    Summary s;
    std::set<std::string> tag_set;
    for (const auto& r : records) tag_set.insert(r.tag);
    s.tags.assign(tag_set.begin(), tag_set.end());

    std::map<HeadKind, std::set<std::size_t>> counts;
    for (const auto& r : records) counts[r.method].insert(r.param_count);
    // Stable order within a cell regardless of input order.
    std::map<HeadKind, std::map<std::string, std::vector<std::pair<std::uint64_t, double>>>> by_seed;
    for (const auto& r : records) by_seed[r.method][r.tag].emplace_back(r.seed, r.test_auc);

    for (HeadKind k : kAllHeads) {
        auto it = by_seed.find(k);
        if (it == by_seed.end()) continue;
        SummaryRow row;
        row.method = k;
        if (counts[k].size() == 1) row.param_count = *counts[k].begin();
        double total = 0.0;
        for (auto& [tag, vals] : it->second) {
            std::sort(vals.begin(), vals.end());
            std::vector<double> aucs;
            for (auto& [seed, auc] : vals) aucs.push_back(auc);
            SummaryCell c{aucs.size(), mean(aucs), sample_std(aucs)};
            total += c.mean;
            row.cells[tag] = c;
        }
        row.average = total / static_cast<double>(row.cells.size());
        s.rows.push_back(std::move(row));
    }

    for (std::size_t i = 1; i < s.rows.size(); ++i) {
        if (s.rows[i].average > s.rows[s.reference_row].average) s.reference_row = i;
    }
    s.rows[s.reference_row].reference = true;

    auto comparison_values = [&](const SummaryRow& row) {
        std::vector<double> v;
        if (s.tags.size() >= 2) {
            for (const auto& [tag, c] : row.cells) v.push_back(c.mean);
        } else {
            for (const auto& [seed, auc] : by_seed[row.method].begin()->second) v.push_back(auc);
        }
        return v;
    };
    const auto ref_values = comparison_values(s.rows[s.reference_row]);
    for (auto& row : s.rows) {
        if (row.reference) continue;
        try {
            row.welch = welch_t_test(comparison_values(row), ref_values);
        } catch (const Error&) {
            row.welch.reset();
        }
    }
    return s;
}

inline std::string format_auc_cell(const SummaryCell& c) {
    return format_fixed(100.0 * c.mean, 1) + " ± " + format_fixed(100.0 * c.std, 1);
}

inline std::string significance_marker(const SummaryRow& row) {
    if (row.reference) return "Ref.";
    if (!row.welch) return "N/A";
    return row.welch->p_value < kSignificanceLevel ? "*" : "N/S";
}

namespace detail {

/// Display width of a UTF-8 string (code points).
inline std::size_t display_width(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
}

}  // namespace detail

/// Markdown table with padded columns: one row per method, one AUC column
/// per tag (x100).
inline std::string summary_markdown(const Summary& s) {
    std::vector<std::vector<std::string>> table;
    std::vector<std::string> header = {"Method", "# Params."};
    header.insert(header.end(), s.tags.begin(), s.tags.end());
    header.push_back("Avg.");
    header.push_back("p-value");
    table.push_back(header);
    for (const auto& row : s.rows) {
        std::vector<std::string> cells;
        cells.emplace_back(to_string(row.method));
        cells.push_back(row.param_count ? "(" + std::to_string(*row.param_count) + ")" : "-");
        for (const auto& t : s.tags) {
            auto it = row.cells.find(t);
            cells.push_back(it == row.cells.end() ? std::string("-") : format_auc_cell(it->second));
        }
        cells.push_back(format_fixed(100.0 * row.average, 1));
        if (row.reference || !row.welch) {
            cells.push_back(significance_marker(row));
        } else {
            cells.push_back(format_fixed(row.welch->p_value, 3) + " " + significance_marker(row));
        }
        table.push_back(std::move(cells));
    }
    const std::size_t ncol = header.size();
    std::vector<std::size_t> width(ncol, 3);
    for (const auto& r : table) {
        for (std::size_t c = 0; c < ncol; ++c) width[c] = std::max(width[c], detail::display_width(r[c]));
    }
    // Method and p-value columns are left-aligned, numbers right-aligned.
    auto left = [&](std::size_t c) { return c == 0 || c + 1 == ncol; };
    auto line = [&](const std::vector<std::string>& r) {
        std::string out = "|";
        for (std::size_t c = 0; c < ncol; ++c) {
            std::string pad(width[c] - detail::display_width(r[c]), ' ');
            out += " " + (left(c) ? r[c] + pad : pad + r[c]) + " |";
        }
        return out + "\n";
    };
    std::string out = line(table[0]);
    out += "|";
    for (std::size_t c = 0; c < ncol; ++c) {
        out += left(c) ? " " + std::string(width[c], '-') + " |" : " " + std::string(width[c] - 1, '-') + ": |";
    }
    out += "\n";
    for (std::size_t r = 1; r < table.size(); ++r) out += line(table[r]);
    return out;
}

/// method,tag,params,n,mean_auc,std_auc,avg_auc,p_value,marker
inline std::string summary_csv(const Summary& s) {
    std::string out = "method,tag,params,n,mean_auc,std_auc,avg_auc,p_value,marker\n";
    for (const auto& row : s.rows) {
        for (const auto& [tag, c] : row.cells) {
            out += std::string(to_string(row.method)) + "," + tag + ",";
            out += row.param_count ? std::to_string(*row.param_count) : "";
            out += "," + std::to_string(c.n) + "," + format_double(c.mean) + "," + format_double(c.std) + ",";
            out += format_double(row.average) + ",";
            out += row.welch ? format_double(row.welch->p_value) : "";
            out += "," + significance_marker(row) + "\n";
        }
    }
    return out;
}

/// method,tag,seed,auc per run, sorted.
inline std::string boxplot_csv(std::vector<SummaryRecord> records) {
    std::sort(records.begin(), records.end(), [](const SummaryRecord& a, const SummaryRecord& b) {
        return std::tie(a.method, a.tag, a.seed) < std::tie(b.method, b.tag, b.seed);
    });
    std::string out = "method,tag,seed,auc\n";
    for (const auto& r : records) {
        out += std::string(to_string(r.method)) + "," + r.tag + "," + std::to_string(r.seed) + "," + format_double(r.test_auc) + "\n";
    }
    return out;
}

}  // namespace milpool
