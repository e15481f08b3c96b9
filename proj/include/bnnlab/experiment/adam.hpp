#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "bnnlab/core/error.hpp"
#include "bnnlab/core/matrix.hpp"

namespace bnnlab::exp {

struct AdamHyper {
    double b1 = 0.9;
    double b2 = 0.999;
    double eps = 1e-8;
};

/// First and second moment estimates of one parameter tensor.
struct AdamState {
    Matrix m;
    Matrix v;
    std::size_t t = 0;

    static AdamState for_shape(const Matrix& p) {
        return {Matrix(p.rows(), p.cols(), 0.0), Matrix(p.rows(), p.cols(), 0.0), 0};
    }
};

/// One bias-corrected Adam update in place. With clip_latent the result is
/// clamped to [-1, 1], the range where the clipped estimator passes gradient.
inline void adam_step(Matrix& param, const Matrix& grad, AdamState& state, const AdamHyper& hyper,
                      double lr, bool clip_latent = false) {
    require_same_shape(param, grad, "adam_step");
    require_same_shape(param, state.m, "adam_step");
    require_same_shape(param, state.v, "adam_step");
    ++state.t;
    const double c1 = 1.0 - std::pow(hyper.b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(hyper.b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        state.m[i] = hyper.b1 * state.m[i] + (1.0 - hyper.b1) * g;
        state.v[i] = hyper.b2 * state.v[i] + (1.0 - hyper.b2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        double p = param[i] - lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
        if (clip_latent) {
            p = std::clamp(p, -1.0, 1.0);
        }
        param[i] = p;
    }
}

}  // namespace bnnlab::exp
