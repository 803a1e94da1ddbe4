// Dense row-major matrix of doubles used throughout milpool.
#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace milpool {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible operand shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed external input (files, manifests, configs).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    using Error::Error;
};

class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
        }
    }

    /// Nested initializer, one inner list per row.
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("ragged matrix initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    /// Builds a matrix from external data, rejecting NaN and Inf.
    static Matrix from_external(std::size_t rows, std::size_t cols, std::vector<double> data) {
        Matrix m(rows, cols, std::move(data));
        for (std::size_t i = 0; i < m.data_.size(); ++i) {
            if (!std::isfinite(m.data_[i])) {
                throw NumericError("non-finite value at flat index " + std::to_string(i));
            }
        }
        return m;
    }

    static Matrix scalar(double v) { return Matrix(1, 1, v); }

    static Matrix row_vector(std::span<const double> v) {
        return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
    }

    static Matrix column_vector(std::span<const double> v) {
        return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    /// Value of a 1x1 matrix.
    double item() const {
        if (rows_ != 1 || cols_ != 1) throw ShapeError("item() on " + shape_string());
        return data_[0];
    }

    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    std::string shape_string() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool all_finite() const noexcept {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

}  // namespace milpool
