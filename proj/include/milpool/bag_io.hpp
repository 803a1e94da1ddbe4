// MILB bag files.
//
// Layout (little-endian):
//   0   char[4]  magic "MILB"
//   4   u32      version (= 1)
//   8   u32      label
//   12  u32      K, number of instances
//   16  u32      d, feature dimension
//   20  u8       coords_present
//   21  u8[3]    padding (zero)
//   24  f32[K*d] features, row-major
//   ..  u32[2K]  (row, col) per instance, only if coords_present
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "milpool/matrix.hpp"

namespace milpool {

struct GridCoord {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    friend auto operator<=>(const GridCoord&, const GridCoord&) = default;
};

struct Bag {
    std::string slide_id;
    std::uint32_t label = 0;
    Matrix features;  // K x d
    std::optional<std::vector<GridCoord>> coords;

    std::size_t size() const noexcept { return features.rows(); }
    std::size_t dim() const noexcept { return features.cols(); }

    void validate() const {
        if (features.rows() == 0) throw FormatError("bag '" + slide_id + "' has no instances");
        if (coords) {
            if (coords->size() != features.rows()) {
                throw FormatError("bag '" + slide_id + "' has " + std::to_string(coords->size()) +
                                  " coordinates for " + std::to_string(features.rows()) + " instances");
            }
            std::set<GridCoord> seen(coords->begin(), coords->end());
            if (seen.size() != coords->size()) throw FormatError("bag '" + slide_id + "' has duplicate coordinates");
        }
    }
};

inline constexpr char kBagMagic[4] = {'M', 'I', 'L', 'B'};
inline constexpr std::uint32_t kBagVersion = 1;
inline constexpr std::size_t kBagHeaderBytes = 24;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

/// Serializes a bag; features are narrowed to 32-bit floats.
inline std::vector<std::uint8_t> encode_bag(const Bag& bag) {
    bag.validate();
    const std::size_t K = bag.size();
    const std::size_t d = bag.dim();
    std::vector<std::uint8_t> out;
    out.reserve(kBagHeaderBytes + 4 * K * d + (bag.coords ? 8 * K : 0));
    out.insert(out.end(), std::begin(kBagMagic), std::end(kBagMagic));
    detail::put_u32(out, kBagVersion);
    detail::put_u32(out, bag.label);
    detail::put_u32(out, static_cast<std::uint32_t>(K));
    detail::put_u32(out, static_cast<std::uint32_t>(d));
    out.push_back(bag.coords ? 1 : 0);
    out.insert(out.end(), 3, 0);
    for (double v : bag.features.data()) {
        float f = static_cast<float>(v);
        if (!std::isfinite(f)) throw NumericError("bag '" + bag.slide_id + "' has a non-finite feature");
        detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    if (bag.coords) {
        for (const auto& c : *bag.coords) {
            detail::put_u32(out, c.row);
            detail::put_u32(out, c.col);
        }
    }
    return out;
}

inline Bag decode_bag(const std::vector<std::uint8_t>& bytes, std::string slide_id = {}) {
    if (bytes.size() < kBagHeaderBytes) {
        throw FormatError("malformed header: expected " + std::to_string(kBagHeaderBytes) + " bytes, got " +
                          std::to_string(bytes.size()));
    }
    if (std::memcmp(bytes.data(), kBagMagic, 4) != 0) throw FormatError("malformed header: bad magic");
    const std::uint8_t* p = bytes.data();
    if (std::uint32_t version = detail::get_u32(p + 4); version != kBagVersion) {
        throw FormatError("malformed header: unsupported version " + std::to_string(version));
    }
    Bag bag;
    bag.slide_id = std::move(slide_id);
    bag.label = detail::get_u32(p + 8);
    const std::size_t K = detail::get_u32(p + 12);
    const std::size_t d = detail::get_u32(p + 16);
    const std::uint8_t has_coords = p[20];
    if (has_coords > 1) throw FormatError("malformed header: coords flag " + std::to_string(has_coords));
    if (K == 0 || d == 0) throw FormatError("malformed header: empty bag (K=" + std::to_string(K) + ", d=" + std::to_string(d) + ")");

    const std::size_t feature_bytes = 4 * K * d;
    const std::size_t coord_bytes = has_coords ? 8 * K : 0;
    const std::size_t have = bytes.size() - kBagHeaderBytes;
    if (have < feature_bytes) {
        throw FormatError("truncated feature block: expected " + std::to_string(feature_bytes) + " bytes, got " +
                          std::to_string(have));
    }
    if (have < feature_bytes + coord_bytes) {
        throw FormatError("truncated coordinate block: expected " + std::to_string(coord_bytes) + " bytes, got " +
                          std::to_string(have - feature_bytes));
    }
    if (have > feature_bytes + coord_bytes) {
        throw FormatError(std::to_string(have - feature_bytes - coord_bytes) + " trailing bytes after bag payload");
    }

    std::vector<double> data(K * d);
    const std::uint8_t* f = p + kBagHeaderBytes;
    for (std::size_t i = 0; i < K * d; ++i) {
        data[i] = static_cast<double>(std::bit_cast<float>(detail::get_u32(f + 4 * i)));
    }
    bag.features = Matrix::from_external(K, d, std::move(data));
    if (has_coords) {
        std::vector<GridCoord> coords(K);
        const std::uint8_t* c = f + feature_bytes;
        for (std::size_t k = 0; k < K; ++k) {
            coords[k] = {detail::get_u32(c + 8 * k), detail::get_u32(c + 8 * k + 4)};
        }
        bag.coords = std::move(coords);
    }
    bag.validate();
    return bag;
}

inline void save_bag(const Bag& bag, const std::filesystem::path& path) {
    auto bytes = encode_bag(bag);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Bag load_bag(const std::filesystem::path& path, std::string slide_id = {}) {
    try {
        return decode_bag(read_file_bytes(path), std::move(slide_id));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const NumericError& e) {
        throw NumericError(path.string() + ": " + e.what());
    }
}

}  // namespace milpool
