#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "bnnlab/core/error.hpp"
#include "bnnlab/core/matrix.hpp"

namespace bnnlab::ad {

/// How sign() is differentiated.
enum class SteMode {
    Clipped,   // dX = dY * 1_{[-1,1]}(x)
    Identity,  // dX = dY
};

/// Binarization with sign(0) = +1.
inline double sign_value(double x) noexcept { return x >= 0.0 ? 1.0 : -1.0; }

inline Matrix linear_forward(const Matrix& x, const Matrix& w) {
    if (x.cols() != w.rows()) {
        throw ShapeError("linear: input " + x.shape_string() + " vs weights " + w.shape_string());
    }
    return matmul(x, w);
}

struct LinearGrads {
    Matrix dx;
    Matrix dw;
};

/// dX = dS * W^T, dW = X^T * dS (summed over the batch).
inline LinearGrads linear_backward(const Matrix& x, const Matrix& w, const Matrix& ds) {
    if (x.cols() != w.rows() || ds.rows() != x.rows() || ds.cols() != w.cols()) {
        throw ShapeError("linear_backward: X " + x.shape_string() + ", W " + w.shape_string() +
                         ", dS " + ds.shape_string());
    }
    return {matmul(ds, transpose(w)), matmul(transpose(x), ds)};
}

inline Matrix sign_forward(const Matrix& x) {
    return map(x, [](double v) { return sign_value(v); });
}

inline Matrix sign_backward_ste(const Matrix& x_saved, const Matrix& dy,
                                SteMode mode = SteMode::Clipped) {
    require_same_shape(x_saved, dy, "sign_backward_ste");
    if (mode == SteMode::Identity) {
        return dy;
    }
    return zip(x_saved, dy, [](double x, double g) { return (x >= -1.0 && x <= 1.0) ? g : 0.0; });
}

inline Matrix relu_forward(const Matrix& x) {
    return map(x, [](double v) { return v > 0.0 ? v : 0.0; });
}

inline Matrix relu_backward(const Matrix& x_saved, const Matrix& dy) {
    return zip(x_saved, dy, [](double x, double g) { return x > 0.0 ? g : 0.0; },
               "relu_backward");
}

/// Adds a 1 x K bias row to every row of x.
inline Matrix add_row_forward(const Matrix& x, const Matrix& row) {
    if (row.rows() != 1 || row.cols() != x.cols()) {
        throw ShapeError("row broadcast: " + x.shape_string() + " with " + row.shape_string());
    }
    Matrix out = x;
    for (std::size_t b = 0; b < x.rows(); ++b) {
        for (std::size_t k = 0; k < x.cols(); ++k) {
            out(b, k) += row(0, k);
        }
    }
    return out;
}

/// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
inline double softmax_cross_entropy_forward(const Matrix& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows()) {
        throw ShapeError("cross entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows");
    }
    double total = 0.0;
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        const auto row = logits.row(b);
        const int y = labels[b];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
            throw ContractViolation("label " + std::to_string(y) + " out of range");
        }
        const double peak = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) {
            sum += std::exp(v - peak);
        }
        total += peak + std::log(sum) - row[static_cast<std::size_t>(y)];
    }
    return total / static_cast<double>(logits.rows());
}

/// d(mean CE)/d(logits) = (softmax - onehot) / B.
inline Matrix softmax_cross_entropy_backward(const Matrix& logits, std::span<const int> labels) {
    Matrix grad(logits.rows(), logits.cols());
    const double inv_b = 1.0 / static_cast<double>(logits.rows());
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        const auto row = logits.row(b);
        const double peak = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) {
            sum += std::exp(v - peak);
        }
        for (std::size_t c = 0; c < logits.cols(); ++c) {
            grad(b, c) = std::exp(row[c] - peak) / sum * inv_b;
        }
        grad(b, static_cast<std::size_t>(labels[b])) -= inv_b;
    }
    return grad;
}

}  // namespace bnnlab::ad
