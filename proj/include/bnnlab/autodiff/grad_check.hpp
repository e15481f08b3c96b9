#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bnnlab/autodiff/ops.hpp"
#include "bnnlab/autodiff/tape.hpp"
#include "bnnlab/core/rng.hpp"

namespace bnnlab::ad {

/// Builds a graph on the tape from leaf variables and returns its output node.
using GraphBuilder = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckReport {
    std::vector<double> max_relative_error;  // one entry per input
    double worst = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

namespace detail {

struct Evaluated {
    Tape tape;
    std::vector<Var> leaves;
    Var out;
    Matrix proj;
};

inline Evaluated evaluate(const GraphBuilder& build, const std::vector<Matrix>& inputs,
                          std::uint64_t projection_seed) {
    Evaluated e;
    for (const Matrix& m : inputs) {
        e.leaves.push_back(e.tape.leaf(m));
    }
    e.out = build(e.tape, e.leaves);
    if (e.tape.contains(OpKind::SignSte)) {
        throw ContractViolation("grad_check cannot verify straight-through estimator nodes");
    }
    const Matrix& ov = e.tape.value(e.out);
    e.proj = Matrix(ov.rows(), ov.cols(), 1.0);
    if (ov.size() > 1) {
        RngStream rng(projection_seed, 0);
        for (double& v : e.proj.values()) {
            v = rng.normal();
        }
    }
    return e;
}

// Extended-precision accumulation keeps the reduction's roundoff out of the difference quotient.
inline long double projected(const Evaluated& e) {
    const Matrix& ov = e.tape.value(e.out);
    long double sum = 0.0L;
    for (std::size_t i = 0; i < ov.size(); ++i) {
        sum += static_cast<long double>(e.proj[i]) * static_cast<long double>(ov[i]);
    }
    return sum;
}

}  // namespace detail

/**
 * Compares tape gradients with central finite differences.
 *
 * A non-scalar output is reduced to a scalar by a fixed random projection.
 * Relative error uses the denominator max(|analytic|, |numeric|, 1e-12).
 */
inline GradCheckReport grad_check(const GraphBuilder& build, const std::vector<Matrix>& inputs,
                                  double tolerance, std::uint64_t projection_seed = 0x5EEDu,
                                  double step = 1e-5) {
    auto base = detail::evaluate(build, inputs, projection_seed);
    base.tape.backward(base.out, base.proj);

    GradCheckReport report;
    report.tolerance = tolerance;
    std::vector<Matrix> probe = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Matrix analytic = base.tape.grad(base.leaves[i]);
        double worst = 0.0;
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            const double original = probe[i][j];
            const double plus = original + step;
            const double minus = original - step;
            probe[i][j] = plus;
            auto up = detail::evaluate(build, probe, projection_seed);
            probe[i][j] = minus;
            auto down = detail::evaluate(build, probe, projection_seed);
            probe[i][j] = original;
            const double numeric = static_cast<double>(
                (detail::projected(up) - detail::projected(down)) / (static_cast<long double>(plus) - minus));
            const double a = analytic[j];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
        report.max_relative_error.push_back(worst);
        report.worst = std::max(report.worst, worst);
    }
    report.pass = report.worst <= tolerance;
    return report;
}

}  // namespace bnnlab::ad
