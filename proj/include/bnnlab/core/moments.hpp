#pragma once

#include <string>

#include "bnnlab/core/error.hpp"

namespace bnnlab {

struct Moments {
    double mean;
    double variance;
};

/// Mean and variance of 2X - 1 with X ~ Bernoulli(p), i.e. a ±1 variable with P(+1) = p.
inline Moments rademacher_moments(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("probability " + std::to_string(p) + " outside [0, 1]");
    }
    return {2.0 * p - 1.0, 4.0 * p * (1.0 - p)};
}

}  // namespace bnnlab
