#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bnnlab/core/error.hpp"

namespace bnnlab::exp {

/// Step schedule: the rate is divided by `decay` at each milestone epoch.
struct LrSchedule {
    double base = 1e-3;
    std::vector<std::size_t> milestones{16, 24, 28};
    double decay = 10.0;

    void validate(std::size_t epochs) const {
        if (!(base > 0.0)) {
            throw ContractViolation("learning rate must be positive");
        }
        if (!(decay >= 1.0)) {
            throw ContractViolation("decay factor must be at least 1");
        }
        for (std::size_t i = 0; i < milestones.size(); ++i) {
            if (i > 0 && milestones[i] <= milestones[i - 1]) {
                throw ContractViolation("milestones must be strictly increasing");
            }
            if (milestones[i] >= epochs) {
                throw ContractViolation("milestone " + std::to_string(milestones[i]) +
                                        " is not below the epoch count " + std::to_string(epochs));
            }
        }
    }
};

/// Rate for 0-based epoch `epoch`; a milestone applies from its own epoch on.
inline double lr_at_epoch(const LrSchedule& s, std::size_t epoch) {
    double lr = s.base;
    for (std::size_t m : s.milestones) {
        if (epoch >= m) {
            lr /= s.decay;
        }
    }
    return lr;
}

}  // namespace bnnlab::exp
