#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "bnnlab/core/error.hpp"
#include "bnnlab/core/matrix.hpp"
#include "bnnlab/norm/normalizer.hpp"

namespace bnnlab::norm {

struct BNForward {
    Matrix z;           // gamma * shat + beta
    BatchStats stats;   // statistics actually used (batch or running)
    Matrix shat;        // standardized input, saved for backward
};

namespace detail {

inline void check_params(const Matrix& s, const BNParams& params) {
    if (params.gamma.rows() != 1 || params.gamma.cols() != s.cols() ||
        !params.gamma.same_shape(params.beta)) {
        throw ShapeError("BN params must be 1x" + std::to_string(s.cols()));
    }
}

inline BNForward standardize(const Matrix& s, const BNParams& params, BatchStats stats) {
    const std::size_t batch = s.rows();
    const std::size_t k_out = s.cols();
    Matrix shat(batch, k_out);
    Matrix z(batch, k_out);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t k = 0; k < k_out; ++k) {
            const double h = (s(b, k) - stats.mean[k]) / stats.stddev[k];
            shat(b, k) = h;
            z(b, k) = params.gamma(0, k) * h + params.beta(0, k);
        }
    }
    return {std::move(z), std::move(stats), std::move(shat)};
}

}  // namespace detail

/// Per-neuron batch mean and biased variance (divide by B).
inline BatchStats batch_statistics(const Matrix& s, double epsilon) {
    const std::size_t batch = s.rows();
    BatchStats st;
    st.batch = batch;
    st.mean.assign(s.cols(), 0.0);
    st.variance.assign(s.cols(), 0.0);
    st.stddev.assign(s.cols(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t k = 0; k < s.cols(); ++k) {
            st.mean[k] += s(b, k);
        }
    }
    for (double& m : st.mean) {
        m /= static_cast<double>(batch);
    }
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t k = 0; k < s.cols(); ++k) {
            const double d = s(b, k) - st.mean[k];
            st.variance[k] += d * d;
        }
    }
    for (std::size_t k = 0; k < s.cols(); ++k) {
        st.variance[k] /= static_cast<double>(batch);
        st.stddev[k] = std::sqrt(st.variance[k] + epsilon);
        if (st.stddev[k] == 0.0) {
            throw SingularityError("zero batch variance in neuron " + std::to_string(k) +
                                   " with epsilon = 0");
        }
    }
    return st;
}

/**
 * Batch normalization forward pass, z = gamma * (s - mean) / stddev + beta.
 *
 * Train mode standardizes with the statistics of the current mini-batch and
 * requires B >= 2. Eval mode uses the supplied running statistics.
 */
inline BNForward bn_forward(const Matrix& s, const BNParams& params, const NormalizerConfig& cfg,
                            Mode mode, const RunningStats* running = nullptr) {
    if (cfg.kind != Kind::FullBN) {
        throw ContractViolation("bn_forward requires the FullBN variant");
    }
    detail::check_params(s, params);
    if (mode == Mode::Train) {
        if (s.rows() < 2) {
            throw ContractViolation("train-mode batch norm needs B >= 2");
        }
        return detail::standardize(s, params, batch_statistics(s, cfg.epsilon));
    }
    if (running == nullptr || running->mean.size() != s.cols()) {
        throw ContractViolation("eval-mode batch norm needs running statistics");
    }
    BatchStats st;
    st.batch = s.rows();
    st.mean = running->mean;
    st.variance = running->variance;
    st.stddev.resize(s.cols());
    for (std::size_t k = 0; k < s.cols(); ++k) {
        st.stddev[k] = std::sqrt(running->variance[k] + cfg.epsilon);
    }
    return detail::standardize(s, params, std::move(st));
}

/**
 * Gradient of the loss with respect to the BN input, in closed form:
 *
 *   dS_bk = gamma_k / stddev_k * ( dZ_bk - mean_b'(dZ_b'k) - shat_bk * mean_b'(dZ_b'k * shat_b'k) )
 *
 * Only valid for train-mode statistics, where mean and stddev depend on S.
 */
inline Matrix bn_backward_closed(const Matrix& shat, const Matrix& dz, const BNParams& params,
                                 const BatchStats& stats) {
    require_same_shape(shat, dz, "bn_backward_closed");
    detail::check_params(shat, params);
    const std::size_t batch = shat.rows();
    const std::size_t k_out = shat.cols();
    const double inv_b = 1.0 / static_cast<double>(batch);
    Matrix ds(batch, k_out);
    for (std::size_t k = 0; k < k_out; ++k) {
        if (stats.stddev[k] == 0.0) {
            throw SingularityError("stddev is zero for neuron " + std::to_string(k));
        }
        double sum_dz = 0.0;
        double sum_dz_shat = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            sum_dz += dz(b, k);
            sum_dz_shat += dz(b, k) * shat(b, k);
        }
        const double gain = params.gamma(0, k) / stats.stddev[k];
        for (std::size_t b = 0; b < batch; ++b) {
            ds(b, k) = gain * (-inv_b * sum_dz - shat(b, k) * inv_b * sum_dz_shat + dz(b, k));
        }
    }
    return ds;
}

struct BNParamGrads {
    Matrix dgamma;  // 1 x K
    Matrix dbeta;   // 1 x K
};

inline BNParamGrads bn_param_grads(const Matrix& shat, const Matrix& dz) {
    require_same_shape(shat, dz, "bn_param_grads");
    BNParamGrads g{Matrix(1, dz.cols()), Matrix(1, dz.cols())};
    for (std::size_t b = 0; b < dz.rows(); ++b) {
        for (std::size_t k = 0; k < dz.cols(); ++k) {
            g.dbeta(0, k) += dz(b, k);
            g.dgamma(0, k) += dz(b, k) * shat(b, k);
        }
    }
    return g;
}

}  // namespace bnnlab::norm
