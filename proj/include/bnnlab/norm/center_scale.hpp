#pragma once

#include <cstddef>
#include <vector>

#include "bnnlab/core/error.hpp"
#include "bnnlab/core/matrix.hpp"
#include "bnnlab/norm/normalizer.hpp"

namespace bnnlab::norm {

struct CenterScaleForward {
    Matrix z;
    std::vector<double> mean;  // centering actually applied
};

/// z = (s - mean) * c. Train mode centers on the batch mean, eval mode on running_mean.
/// CenterOnly is c = 1.
inline CenterScaleForward center_scale_forward(const Matrix& s, double c, Mode mode,
                                               const std::vector<double>* running_mean = nullptr) {
    if (!(c > 0.0)) {
        throw ContractViolation("center-scale factor must be positive");
    }
    std::vector<double> mean(s.cols(), 0.0);
    if (mode == Mode::Train) {
        for (std::size_t b = 0; b < s.rows(); ++b) {
            for (std::size_t k = 0; k < s.cols(); ++k) {
                mean[k] += s(b, k);
            }
        }
        for (double& m : mean) {
            m /= static_cast<double>(s.rows());
        }
    } else {
        if (running_mean == nullptr || running_mean->size() != s.cols()) {
            throw ContractViolation("eval-mode centering needs a running mean");
        }
        mean = *running_mean;
    }
    Matrix z(s.rows(), s.cols());
    for (std::size_t b = 0; b < s.rows(); ++b) {
        for (std::size_t k = 0; k < s.cols(); ++k) {
            z(b, k) = (s(b, k) - mean[k]) * c;
        }
    }
    return {std::move(z), std::move(mean)};
}

/// Train-mode backward: dS = c * (dZ - column mean of dZ).
inline Matrix center_scale_backward(const Matrix& dz, double c) {
    const Matrix mean = column_mean(dz);
    Matrix ds(dz.rows(), dz.cols());
    for (std::size_t b = 0; b < dz.rows(); ++b) {
        for (std::size_t k = 0; k < dz.cols(); ++k) {
            ds(b, k) = (dz(b, k) - mean(0, k)) * c;
        }
    }
    return ds;
}

}  // namespace bnnlab::norm
