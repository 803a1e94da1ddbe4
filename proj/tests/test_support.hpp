// Helpers shared by the unit tests.
#pragma once

#include <filesystem>
#include <string>

#include "milpool/matrix.hpp"
#include "milpool/rng.hpp"

namespace milpool::testing {

inline Matrix random_matrix(SplitMix64& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("milpool_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace milpool::testing
