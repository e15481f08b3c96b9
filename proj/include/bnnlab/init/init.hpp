#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "bnnlab/autodiff/primitives.hpp"
#include "bnnlab/core/error.hpp"
#include "bnnlab/core/matrix.hpp"
#include "bnnlab/core/rng.hpp"

namespace bnnlab {

enum class InitFamily { UniformSymmetric, GaussianSymmetric, GlorotUniform, FanInUniform };

/// Zero-mean weight distribution. variance is ignored by the Glorot and
/// fan-in families, which derive it from the layer shape.
struct InitScheme {
    InitFamily family = InitFamily::UniformSymmetric;
    double variance = 1e-2;

    static InitScheme uniform(double variance) { return {InitFamily::UniformSymmetric, variance}; }
    static InitScheme gaussian(double variance) { return {InitFamily::GaussianSymmetric, variance}; }
    static InitScheme glorot() { return {InitFamily::GlorotUniform, 0.0}; }
    static InitScheme fan_in() { return {InitFamily::FanInUniform, 0.0}; }

    std::string to_string() const {
        switch (family) {
        case InitFamily::UniformSymmetric: return "uniform";
        case InitFamily::GaussianSymmetric: return "gaussian";
        case InitFamily::GlorotUniform: return "glorot";
        case InitFamily::FanInUniform: return "fanin";
        }
        return "?";
    }
};

inline InitFamily parse_init_family(const std::string& s) {
    if (s == "uniform") return InitFamily::UniformSymmetric;
    if (s == "gaussian") return InitFamily::GaussianSymmetric;
    if (s == "glorot") return InitFamily::GlorotUniform;
    if (s == "fanin") return InitFamily::FanInUniform;
    throw FormatError("unknown init family '" + s + "'");
}

struct GlorotVariance {
    double fan_in;   // 1 / K_in
    double fan_avg;  // 2 / (K_in + K_out)
};

inline GlorotVariance glorot_variance(std::size_t k_in, std::size_t k_out) {
    return {1.0 / static_cast<double>(k_in), 2.0 / static_cast<double>(k_in + k_out)};
}

/// Variance the scheme realises for a k_in x k_out weight matrix.
inline double scheme_variance(const InitScheme& scheme, std::size_t k_in, std::size_t k_out) {
    switch (scheme.family) {
    case InitFamily::GlorotUniform:
        return glorot_variance(k_in, k_out).fan_avg;
    case InitFamily::FanInUniform:
        return glorot_variance(k_in, k_out).fan_in;
    default:
        return scheme.variance;
    }
}

/**
 * Draws a k_in x k_out weight matrix.
 *
 * The uniform families scale one symmetric uniform draw per entry, so two
 * schemes of the same family consuming the same stream are exact positive
 * multiples of each other and binarize identically.
 */
inline Matrix sample_weights(const InitScheme& scheme, std::size_t k_in, std::size_t k_out,
                             RngStream& rng) {
    if (k_in == 0 || k_out == 0) {
        throw ContractViolation("weight dimensions must be positive");
    }
    const double var = scheme_variance(scheme, k_in, k_out);
    if (!(var > 0.0)) {
        throw DomainError("initialization variance must be positive, got " + std::to_string(var));
    }
    Matrix w(k_in, k_out);
    if (scheme.family == InitFamily::GaussianSymmetric) {
        const double sd = std::sqrt(var);
        for (double& v : w.values()) {
            v = sd * rng.normal();
        }
    } else {
        const double half_range = std::sqrt(3.0 * var);
        for (double& v : w.values()) {
            v = half_range * rng.symmetric_uniform();
        }
    }
    return w;
}

/// Elementwise sign with sign(0) = +1.
inline Matrix binarize(const Matrix& w) { return ad::sign_forward(w); }

}  // namespace bnnlab
