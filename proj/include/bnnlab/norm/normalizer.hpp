#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "bnnlab/core/error.hpp"
#include "bnnlab/core/matrix.hpp"

namespace bnnlab::norm {

enum class Mode { Train, Eval };

enum class Kind { FullBN, CenterScale, CenterOnly, Identity };

/**
 * Which normalizer a layer applies to its dot products.
 *
 * CenterScale either carries a fixed scale or derives it from the layer's
 * fan-in as 1/sqrt(fan_in_multiplier * fan_in); the latter is how the
 * 1/sqrt(K) and 1/sqrt(3K) ablation cells are expressed without knowing
 * the widths up front.
 */
struct NormalizerConfig {
    Kind kind = Kind::FullBN;
    double scale = 1.0;
    double fan_in_multiplier = 0.0;  // > 0 selects the fan-in rule
    double epsilon = 1e-5;
    double momentum = 0.1;

    static NormalizerConfig full_bn(double epsilon = 1e-5) {
        NormalizerConfig c;
        c.kind = Kind::FullBN;
        c.epsilon = epsilon;
        return c;
    }
    static NormalizerConfig center_scale(double scale) {
        NormalizerConfig c;
        c.kind = Kind::CenterScale;
        c.scale = scale;
        return c;
    }
    static NormalizerConfig center_scale_fan_in(double multiplier = 1.0) {
        NormalizerConfig c;
        c.kind = Kind::CenterScale;
        c.fan_in_multiplier = multiplier;
        return c;
    }
    static NormalizerConfig center_only() {
        NormalizerConfig c;
        c.kind = Kind::CenterOnly;
        return c;
    }
    static NormalizerConfig identity() {
        NormalizerConfig c;
        c.kind = Kind::Identity;
        return c;
    }

    bool centers() const noexcept { return kind != Kind::Identity; }

    /// Effective CenterScale factor for a layer with the given fan-in.
    double resolved_scale(std::size_t fan_in) const {
        switch (kind) {
        case Kind::CenterOnly:
        case Kind::Identity:
            return 1.0;
        case Kind::FullBN:
            throw ContractViolation("FullBN has no fixed scale");
        case Kind::CenterScale:
            break;
        }
        if (fan_in_multiplier > 0.0) {
            return 1.0 / std::sqrt(fan_in_multiplier * static_cast<double>(fan_in));
        }
        return scale;
    }

    void validate() const {
        if (kind == Kind::CenterScale && fan_in_multiplier <= 0.0 && !(scale > 0.0)) {
            throw ContractViolation("CenterScale factor must be positive");
        }
        if (kind == Kind::FullBN && !(epsilon > 0.0)) {
            throw ContractViolation("FullBN epsilon must be positive");
        }
        if (!(momentum > 0.0 && momentum < 1.0)) {
            throw ContractViolation("running-stat momentum must lie in (0, 1)");
        }
    }

    /// Token form used by config files: fullbn, center_scale:0.125,
    /// center_scale:fanin, center_scale:3fanin, center_only, identity.
    std::string to_string() const {
        switch (kind) {
        case Kind::FullBN:
            return "fullbn";
        case Kind::CenterOnly:
            return "center_only";
        case Kind::Identity:
            return "identity";
        case Kind::CenterScale: {
            std::ostringstream os;
            os << "center_scale:";
            if (fan_in_multiplier > 0.0) {
                if (fan_in_multiplier != 1.0) {
                    os << fan_in_multiplier;
                }
                os << "fanin";
            } else {
                os << scale;
            }
            return os.str();
        }
        }
        return "?";
    }
};

inline NormalizerConfig parse_normalizer(const std::string& token) {
    if (token == "fullbn" || token == "bn") {
        return NormalizerConfig::full_bn();
    }
    if (token == "center_only" || token == "noscale") {
        return NormalizerConfig::center_only();
    }
    if (token == "identity" || token == "none") {
        return NormalizerConfig::identity();
    }
    const std::string prefix = "center_scale:";
    if (token.rfind(prefix, 0) == 0) {
        std::string arg = token.substr(prefix.size());
        const std::string suffix = "fanin";
        try {
            if (arg.size() >= suffix.size() &&
                arg.compare(arg.size() - suffix.size(), suffix.size(), suffix) == 0) {
                const std::string mult = arg.substr(0, arg.size() - suffix.size());
                const double m = mult.empty() ? 1.0 : std::stod(mult);
                if (!(m > 0.0)) {
                    throw FormatError("fan-in multiplier must be positive in '" + token + "'");
                }
                return NormalizerConfig::center_scale_fan_in(m);
            }
            std::size_t used = 0;
            const double c = std::stod(arg, &used);
            if (used != arg.size() || !(c > 0.0)) {
                throw FormatError("bad scale in '" + token + "'");
            }
            return NormalizerConfig::center_scale(c);
        } catch (const std::logic_error&) {
            throw FormatError("bad scale in '" + token + "'");
        }
    }
    throw FormatError("unknown normalizer '" + token + "'");
}

/// Per-neuron statistics of one mini-batch. stddev already includes epsilon.
struct BatchStats {
    std::vector<double> mean;
    std::vector<double> variance;
    std::vector<double> stddev;
    std::size_t batch = 0;
};

/// Exponential moving averages used in eval mode.
struct RunningStats {
    std::vector<double> mean;
    std::vector<double> variance;

    static RunningStats fresh(std::size_t neurons) {
        return {std::vector<double>(neurons, 0.0), std::vector<double>(neurons, 1.0)};
    }
};

struct BNParams {
    Matrix gamma;  // 1 x K
    Matrix beta;   // 1 x K

    static BNParams initial(std::size_t neurons) {
        return {Matrix(1, neurons, 1.0), Matrix(1, neurons, 0.0)};
    }
};

/// new = (1 - momentum) * old + momentum * batch, applied to mean and variance.
inline RunningStats update_running_stats(const RunningStats& running, const BatchStats& batch,
                                         double momentum) {
    if (!(momentum > 0.0 && momentum < 1.0)) {
        throw ContractViolation("momentum must lie in (0, 1)");
    }
    if (running.mean.size() != batch.mean.size()) {
        throw ShapeError("running stats width differs from batch stats width");
    }
    RunningStats out = running;
    for (std::size_t k = 0; k < out.mean.size(); ++k) {
        out.mean[k] = (1.0 - momentum) * running.mean[k] + momentum * batch.mean[k];
        if (!batch.variance.empty()) {
            out.variance[k] = (1.0 - momentum) * running.variance[k] + momentum * batch.variance[k];
        }
    }
    return out;
}

}  // namespace bnnlab::norm
