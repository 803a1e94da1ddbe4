// Text format for RunResult files ("key: value" per line).
//
//   method, tag, feature_dim, num_classes, abmil_hidden, dsmil_query_dim,
//   mix_literal_sum, lr, seed, epochs, selection, selected_epoch,
//   selected_val_auc, test_auc, test_loss, test_accuracy, test_bags,
//   param_count, wall_time_s, failed, failure
//   history.<epoch>: <train_loss> <val_auc>
//   param.<name>: <rows> <cols> <values...>
//
// Doubles use the shortest round-trip representation.
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "milpool/text.hpp"
#include "milpool/trainer.hpp"

namespace milpool {

inline std::string format_result(const RunResult& r) {
    std::string out;
    auto kv = [&](std::string_view k, const std::string& v) {
        out += k;
        out += ": ";
        out += v;
        out += '\n';
    };
    kv("method", std::string(to_string(r.spec.kind)));
    kv("tag", r.tag);
    kv("feature_dim", std::to_string(r.spec.feature_dim));
    kv("num_classes", std::to_string(r.spec.num_classes));
    kv("abmil_hidden", std::to_string(r.spec.abmil_hidden));
    kv("dsmil_query_dim", std::to_string(r.spec.dsmil_query_dim));
    kv("mix_literal_sum", r.spec.mix_literal_sum ? "1" : "0");
    kv("lr", format_double(r.lr));
    kv("seed", std::to_string(r.seed));
    kv("epochs", std::to_string(r.epochs));
    kv("selection", std::string(to_string(r.selection)));
    kv("selected_epoch", std::to_string(r.selected_epoch));
    kv("selected_val_auc", format_double(r.selected_val_auc));
    kv("test_auc", format_double(r.test.auc));
    kv("test_loss", format_double(r.test.loss));
    kv("test_accuracy", format_double(r.test.accuracy));
    kv("test_bags", std::to_string(r.test.bags));
    kv("param_count", std::to_string(param_count(r.spec)));
    kv("wall_time_s", format_double(r.wall_time_s));
    kv("failed", r.failed ? "1" : "0");
    std::string failure = r.failure;
    for (char& c : failure) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    kv("failure", failure);
    for (std::size_t e = 0; e < r.history.size(); ++e) {
        kv("history." + std::to_string(e), format_double(r.history[e].train_loss) + " " + format_double(r.history[e].val_auc));
    }
    for (const auto& t : r.params.tensors) {
        std::string v = std::to_string(t.value.rows()) + " " + std::to_string(t.value.cols());
        for (double x : t.value.data()) v += " " + format_double(x);
        kv("param." + t.name, v);
    }
    return out;
}

namespace detail {

inline std::vector<std::string_view> split_spaces(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && s[i] == ' ') ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace detail

inline RunResult parse_result(std::string_view text) {
    std::map<std::string, std::string, std::less<>> kv;
    std::vector<std::pair<std::string, std::string>> ordered;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (line.empty()) continue;
        std::size_t colon = line.find(": ");
        std::string key;
        std::string value;
        if (colon == std::string_view::npos) {
            if (line.back() != ':') throw FormatError("result line " + std::to_string(line_no) + ": missing ': '");
            key = std::string(line.substr(0, line.size() - 1));
        } else {
            key = std::string(line.substr(0, colon));
            value = std::string(line.substr(colon + 2));
        }
        if (!kv.emplace(key, value).second) throw FormatError("duplicate result key '" + key + "'");
        ordered.emplace_back(key, value);
    }
    auto get = [&](std::string_view k) -> const std::string& {
        auto it = kv.find(k);
        if (it == kv.end()) throw FormatError("result file lacks key '" + std::string(k) + "'");
        return it->second;
    };

    RunResult r;
    r.spec.kind = parse_head_kind(get("method"));
    r.tag = get("tag");
    r.spec.feature_dim = parse_integer<std::size_t>(get("feature_dim"));
    r.spec.num_classes = parse_integer<std::size_t>(get("num_classes"));
    r.spec.abmil_hidden = parse_integer<std::size_t>(get("abmil_hidden"));
    r.spec.dsmil_query_dim = parse_integer<std::size_t>(get("dsmil_query_dim"));
    r.spec.mix_literal_sum = get("mix_literal_sum") == "1";
    r.lr = parse_double(get("lr"));
    r.seed = parse_integer<std::uint64_t>(get("seed"));
    r.epochs = parse_integer<std::size_t>(get("epochs"));
    r.selection = parse_selection(get("selection"));
    r.selected_epoch = parse_integer<std::size_t>(get("selected_epoch"));
    r.selected_val_auc = parse_double(get("selected_val_auc"));
    r.test.auc = parse_double(get("test_auc"));
    r.test.loss = parse_double(get("test_loss"));
    r.test.accuracy = parse_double(get("test_accuracy"));
    r.test.bags = parse_integer<std::size_t>(get("test_bags"));
    r.wall_time_s = parse_double(get("wall_time_s"));
    r.failed = get("failed") == "1";
    r.failure = get("failure");

    r.params.spec = r.spec;
    for (const auto& [key, value] : ordered) {
        if (key.rfind("history.", 0) == 0) {
            auto idx = parse_integer<std::size_t>(std::string_view(key).substr(8));
            if (idx != r.history.size()) throw FormatError("history entries out of order at '" + key + "'");
            auto f = detail::split_spaces(value);
            if (f.size() != 2) throw FormatError("bad history entry '" + key + "'");
            r.history.push_back({parse_double(f[0]), parse_double(f[1])});
        } else if (key.rfind("param.", 0) == 0) {
            auto f = detail::split_spaces(value);
            if (f.size() < 2) throw FormatError("bad tensor entry '" + key + "'");
            auto rows = parse_integer<std::size_t>(f[0]);
            auto cols = parse_integer<std::size_t>(f[1]);
            if (f.size() != 2 + rows * cols) throw FormatError("tensor '" + key + "' has wrong value count");
            std::vector<double> data;
            data.reserve(rows * cols);
            for (std::size_t i = 2; i < f.size(); ++i) data.push_back(parse_double(f[i]));
            r.params.tensors.push_back({key.substr(6), Matrix(rows, cols, std::move(data))});
        }
    }
    if (!r.failed) {
        auto layout = tensor_layout(r.spec);
        if (layout.size() != r.params.tensors.size()) throw FormatError("result tensors do not match the head layout");
        for (std::size_t i = 0; i < layout.size(); ++i) {
            const auto& t = r.params.tensors[i];
            if (t.name != layout[i].name || t.value.rows() != layout[i].rows || t.value.cols() != layout[i].cols) {
                throw FormatError("result tensor '" + t.name + "' does not match the head layout");
            }
        }
    }
    return r;
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void save_result(const RunResult& r, const std::filesystem::path& path) { write_text_file(path, format_result(r)); }

inline RunResult load_result(const std::filesystem::path& path) {
    try {
        return parse_result(read_text_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

/// epoch,train_loss,val_auc
inline std::string history_csv(const RunResult& r) {
    std::string out = "epoch,train_loss,val_auc\n";
    for (std::size_t e = 0; e < r.history.size(); ++e) {
        out += std::to_string(e) + "," + format_double(r.history[e].train_loss) + "," + format_double(r.history[e].val_auc) + "\n";
    }
    return out;
}

}  // namespace milpool
