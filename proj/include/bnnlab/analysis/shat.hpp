#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bnnlab/core/error.hpp"
#include "bnnlab/core/rng.hpp"

namespace bnnlab::analysis {

enum class ShatMode { Exact, Sampled };

struct ShatEstimate {
    double value = 0.0;
    double standard_error = 0.0;  // 0 for exact enumeration
};

inline constexpr std::size_t kMaxExactFanIn = 30;

namespace detail {

/// Var(shat^2) for shat = s / sqrt(K), s = K - 2j with j ~ Binomial(K, 1/2).
inline double shat_sq_variance_exact(std::size_t k) {
    const double kd = static_cast<double>(k);
    const double total = std::ldexp(1.0, static_cast<int>(k));  // 2^K
    double coef = 1.0;                                          // C(K, j), exact for K <= 30
    double m2 = 0.0;
    double m4 = 0.0;
    for (std::size_t j = 0; j <= k; ++j) {
        const double s = kd - 2.0 * static_cast<double>(j);
        const double p = coef / total;
        const double y = s * s / kd;
        m2 += p * y;
        m4 += p * y * y;
        coef = coef * static_cast<double>(k - j) / static_cast<double>(j + 1);
    }
    return m4 - m2 * m2;
}

/// Sum of k independent Rademacher variables from packed random bits.
inline int rademacher_sum(std::size_t k, RngStream& rng) {
    int ones = 0;
    std::size_t left = k;
    while (left >= 64) {
        ones += std::popcount(rng.next_u64());
        left -= 64;
    }
    if (left > 0) {
        const std::uint64_t mask = (std::uint64_t{1} << left) - 1;
        ones += std::popcount(rng.next_u64() & mask);
    }
    return 2 * ones - static_cast<int>(k);
}

}  // namespace detail

/**
 * Var(shat^2) where shat = s / sqrt(K) and s is a sum of K independent ±1
 * products, i.e. the standardized binary dot product of a layer with fan-in K.
 *
 * Exact mode enumerates the K + 1 lattice values of s and is limited to
 * K <= 30. Sampled mode draws `samples` dot products from rng and also
 * reports the standard error of the estimate.
 */
inline ShatEstimate shat_sq_variance(std::size_t k, ShatMode mode, RngStream* rng = nullptr,
                                     std::size_t samples = 100000) {
    if (k == 0) {
        throw ContractViolation("fan-in must be positive");
    }
    if (mode == ShatMode::Exact) {
        if (k > kMaxExactFanIn) {
            throw ContractViolation("exact enumeration supports K <= 30, got " + std::to_string(k) +
                                    "; use sampled mode");
        }
        return {detail::shat_sq_variance_exact(k), 0.0};
    }
    if (rng == nullptr || samples < 2) {
        throw ContractViolation("sampled mode needs a stream and at least two samples");
    }
    // Two-pass over stored samples keeps the estimate free of cancellation.
    std::vector<double> y(samples);
    const double kd = static_cast<double>(k);
    double mean = 0.0;
    for (double& v : y) {
        const double s = detail::rademacher_sum(k, *rng);
        v = s * s / kd;
        mean += v;
    }
    const double n = static_cast<double>(samples);
    mean /= n;
    double m2 = 0.0;
    double m4 = 0.0;
    for (double v : y) {
        const double d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
    }
    const double var = m2 / (n - 1.0);
    const double central4 = m4 / n;
    const double biased2 = m2 / n;
    const double se = std::sqrt(std::max(0.0, central4 - biased2 * biased2) / n);
    return {var, se};
}

}  // namespace bnnlab::analysis
