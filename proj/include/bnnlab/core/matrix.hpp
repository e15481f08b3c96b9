#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bnnlab/core/error.hpp"

namespace bnnlab {

/**
 * Dense row-major matrix of doubles.
 *
 * Batched activations are stored with one sample per row, so a layer with
 * K neurons evaluated on a mini-batch of B samples is a B x K matrix.
 */
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {
        if (rows == 0 || cols == 0) {
            throw ShapeError("matrix dimensions must be positive");
        }
    }

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), values_(std::move(values)) {
        if (rows == 0 || cols == 0) {
            throw ShapeError("matrix dimensions must be positive");
        }
        if (values_.size() != rows * cols) {
            throw ShapeError("value count " + std::to_string(values_.size()) + " != " +
                             std::to_string(rows) + "x" + std::to_string(cols));
        }
        if (!all_finite()) {
            throw NumericError("matrix initialised with non-finite values");
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        if (rows_ == 0 || cols_ == 0) {
            throw ShapeError("matrix dimensions must be positive");
        }
        values_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) {
                throw ShapeError("ragged initializer list");
            }
            values_.insert(values_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {values_.data() + r * cols_, cols_};
    }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool all_finite() const noexcept {
        return std::all_of(values_.begin(), values_.end(),
                           [](double v) { return std::isfinite(v); });
    }

    std::string shape_string() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
    }
}

/**
 * C = A * B.
 *
 * Every C(i,j) is accumulated in ascending k order, which makes the result
 * bit-identical to the textbook triple loop. The loop is ordered i-k-j so
 * the inner loop streams over contiguous rows.
 */
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + a.shape_string() + " * " + b.shape_string());
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* out = c.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) {
                out[j] += aik * brow[j];
            }
        }
    }
    if (!c.all_finite()) {
        throw NumericError("matmul produced non-finite values");
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

template <class F>
Matrix map(const Matrix& a, F&& f) {
    Matrix out = a;
    for (double& v : out.values()) {
        v = f(v);
    }
    return out;
}

template <class F>
Matrix zip(const Matrix& a, const Matrix& b, F&& f, const char* op = "zip") {
    require_same_shape(a, b, op);
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = f(a[i], b[i]);
    }
    return out;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
    return zip(a, b, [](double x, double y) { return x + y; }, "add");
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
    return zip(a, b, [](double x, double y) { return x - y; }, "sub");
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    return zip(a, b, [](double x, double y) { return x * y; }, "hadamard");
}

inline Matrix operator*(double s, const Matrix& a) {
    return map(a, [s](double x) { return s * x; });
}

/// Per-column mean as a 1 x cols row vector.
inline Matrix column_mean(const Matrix& a) {
    Matrix m(1, a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            m(0, j) += a(i, j);
        }
    }
    const double inv = 1.0 / static_cast<double>(a.rows());
    for (double& v : m.values()) {
        v *= inv;
    }
    return m;
}

inline Matrix column_sum(const Matrix& a) {
    Matrix m(1, a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            m(0, j) += a(i, j);
        }
    }
    return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

}  // namespace bnnlab
