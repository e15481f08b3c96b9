#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bnnlab/core/error.hpp"
#include "bnnlab/core/matrix.hpp"
#include "bnnlab/norm/normalizer.hpp"

namespace bnnlab::norm {

/**
 * BN followed by sign, folded into one comparison per neuron.
 *
 * With orientation +1 the neuron fires (+1) iff s >= tau; with orientation
 * -1 (negative gamma) it fires iff s <= tau.
 */
struct ThresholdFold {
    std::vector<double> tau;
    std::vector<int> orientation;

    double rounded_tau(std::size_t k) const { return std::round(tau[k]); }

    double fire(double s, std::size_t k) const {
        const bool on = orientation[k] > 0 ? s >= tau[k] : s <= tau[k];
        return on ? 1.0 : -1.0;
    }

    /// Same decision against round(tau), the integer form used for integer dot products.
    double fire_rounded(double s, std::size_t k) const {
        const double t = rounded_tau(k);
        const bool on = orientation[k] > 0 ? s >= t : s <= t;
        return on ? 1.0 : -1.0;
    }

    Matrix apply(const Matrix& s) const {
        Matrix out(s.rows(), s.cols());
        for (std::size_t b = 0; b < s.rows(); ++b) {
            for (std::size_t k = 0; k < s.cols(); ++k) {
                out(b, k) = fire(s(b, k), k);
            }
        }
        return out;
    }

    Matrix apply_rounded(const Matrix& s) const {
        Matrix out(s.rows(), s.cols());
        for (std::size_t b = 0; b < s.rows(); ++b) {
            for (std::size_t k = 0; k < s.cols(); ++k) {
                out(b, k) = fire_rounded(s(b, k), k);
            }
        }
        return out;
    }
};

/// tau_k = mean_k - stddev_k / gamma_k * beta_k.
inline ThresholdFold fold_bn_to_threshold(const BatchStats& stats, const BNParams& params) {
    const std::size_t k_out = stats.mean.size();
    if (params.gamma.cols() != k_out || stats.stddev.size() != k_out) {
        throw ShapeError("threshold folding: stats and params widths differ");
    }
    ThresholdFold fold;
    fold.tau.resize(k_out);
    fold.orientation.resize(k_out);
    for (std::size_t k = 0; k < k_out; ++k) {
        const double g = params.gamma(0, k);
        if (stats.stddev[k] == 0.0) {
            throw SingularityError("stddev is zero for neuron " + std::to_string(k));
        }
        if (g == 0.0) {
            throw SingularityError("gamma is zero for neuron " + std::to_string(k));
        }
        fold.tau[k] = stats.mean[k] - stats.stddev[k] / g * params.beta(0, k);
        fold.orientation[k] = g > 0.0 ? 1 : -1;
    }
    return fold;
}

}  // namespace bnnlab::norm
