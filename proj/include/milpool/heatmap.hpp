// Patch-score heatmaps on the bag's grid coordinates.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "milpool/bag_io.hpp"
#include "milpool/text.hpp"

namespace milpool {

inline constexpr double kHeatmapSentinel = -1.0;

/// Dense (max_row+1) x (max_col+1) grid with -1 where no patch exists.
inline Matrix heatmap_grid(const Bag& bag, std::span<const double> values) {
    if (!bag.coords) throw FormatError("bag '" + bag.slide_id + "' has no coordinates");
    const auto& coords = *bag.coords;
    if (values.size() != coords.size()) {
        throw ShapeError("heatmap values (" + std::to_string(values.size()) + ") do not match bag size (" +
                         std::to_string(coords.size()) + ")");
    }
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    for (const auto& c : coords) {
        rows = std::max(rows, c.row + 1);
        cols = std::max(cols, c.col + 1);
    }
    Matrix grid(rows, cols, kHeatmapSentinel);
    for (std::size_t k = 0; k < coords.size(); ++k) grid(coords[k].row, coords[k].col) = values[k];
    return grid;
}

inline std::string heatmap_csv(const Matrix& grid) {
    std::string out;
    for (std::size_t r = 0; r < grid.rows(); ++r) {
        for (std::size_t c = 0; c < grid.cols(); ++c) {
            if (c) out += ',';
            out += format_double(grid(r, c));
        }
        if (r + 1 < grid.rows()) out += '\n';
    }
    return out;
}

/// Maps a score to a gray level: floor(clamp(s, 0, 1) * 255 + 0.5); sentinel -> 0.
inline std::uint8_t heatmap_pixel(double score) {
    if (score == kHeatmapSentinel || !std::isfinite(score)) return 0;
    double s = std::clamp(score, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(s * 255.0 + 0.5));
}

/// Binary PGM (P5), 8-bit.
inline std::vector<std::uint8_t> heatmap_pgm(const Matrix& grid) {
    std::string header = "P5\n" + std::to_string(grid.cols()) + " " + std::to_string(grid.rows()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    for (double v : grid.data()) out.push_back(heatmap_pixel(v));
    return out;
}

/// Writes `<stem>.csv` and `<stem>.pgm`.
inline void export_heatmap(const Bag& bag, std::span<const double> values, const std::filesystem::path& stem) {
    Matrix grid = heatmap_grid(bag, values);
    auto base = stem.string();
    {
        std::ofstream csv(base + ".csv", std::ios::binary | std::ios::trunc);
        if (!csv) throw Error("cannot write '" + base + ".csv'");
        csv << heatmap_csv(grid) << '\n';
    }
    auto pgm = heatmap_pgm(grid);
    std::ofstream img(base + ".pgm", std::ios::binary | std::ios::trunc);
    if (!img) throw Error("cannot write '" + base + ".pgm'");
    img.write(reinterpret_cast<const char*>(pgm.data()), static_cast<std::streamsize>(pgm.size()));
}

}  // namespace milpool
