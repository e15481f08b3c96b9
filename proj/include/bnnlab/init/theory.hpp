#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bnnlab/core/error.hpp"
#include "bnnlab/init/network_spec.hpp"

namespace bnnlab {

enum class VarianceModel { NoNorm, BnLeading, BnExact };

inline const char* model_name(VarianceModel m) {
    switch (m) {
    case VarianceModel::NoNorm: return "no-norm";
    case VarianceModel::BnLeading: return "bn-leading-order";
    case VarianceModel::BnExact: return "bn-exact-prefactor";
    }
    return "?";
}

/// Predicted Var(dL/ds^l) for l = 1..L, stored at index l - 1. The entry for
/// layer L equals var_top (1 when reported relative to the top gradient).
struct VariancePrediction {
    std::vector<double> per_layer;
    VarianceModel model = VarianceModel::NoNorm;

    double at(std::size_t l) const { return per_layer.at(l - 1); }
};

/**
 * Forward variance of the dot products of a linear network,
 * Var(s^l) = Var(x) * prod_{l' <= l} K_{l'-1} Var(w^{l'}).
 * Binary layers contribute Var(w) = 1 whatever var_w says.
 */
inline std::vector<double> predict_forward_variance(const NetworkSpec& spec, double var_x,
                                                    std::span<const double> var_w) {
    spec.validate();
    if (var_w.size() != spec.depth()) {
        throw ContractViolation("need one weight variance per layer");
    }
    std::vector<double> out(spec.depth());
    double v = var_x;
    for (std::size_t l = 1; l <= spec.depth(); ++l) {
        const double wv = spec.layer(l).binary ? 1.0 : var_w[l - 1];
        v *= static_cast<double>(spec.fan_in(l)) * wv;
        out[l - 1] = v;
    }
    return out;
}

/// Unnormalized binary network: Var(dL/ds^l) = var_top * prod_{l' = l+1..L} K_{l'}.
inline VariancePrediction predict_backward_variance_no_norm(const NetworkSpec& spec,
                                                            double var_top) {
    spec.validate();
    const std::size_t depth = spec.depth();
    VariancePrediction p;
    p.model = VarianceModel::NoNorm;
    p.per_layer.assign(depth, 0.0);
    double v = var_top;
    p.per_layer[depth - 1] = v;
    for (std::size_t l = depth - 1; l >= 1; --l) {
        v *= static_cast<double>(spec.width(l + 1));
        p.per_layer[l - 1] = v;
    }
    return p;
}

/// One backward step through a gamma = 1 batch-normalized binary layer with
/// fan-in k_prev and batch size B: (B^2 + 2B - 1 + V) / (k_prev * B^2), V = Var(shat^2).
inline double bn_exact_prefactor(std::size_t k_prev, std::size_t batch, double shat_sq_var) {
    const double b = static_cast<double>(batch);
    return (b * b + 2.0 * b - 1.0 + shat_sq_var) / (static_cast<double>(k_prev) * b * b);
}

/**
 * Gradient variance of a batch-normalized binary network at initialization
 * (gamma = 1, beta = 0).
 *
 * Leading order: var_top * prod_{l' = l..L-1} K_{l'+1} / K_{l'-1}.
 * Exact prefactor: each factor 1 / K_{l'-1} is replaced by
 * bn_exact_prefactor(K_{l'-1}, B, V_{l'}), where V_{l'} = Var(shat^2) of
 * layer l' comes from shat_sq_var[l' - 1]. shat_sq_var is only read by the
 * exact model.
 */
inline VariancePrediction predict_backward_variance_bn(const NetworkSpec& spec, double var_top,
                                                       std::size_t batch, VarianceModel model,
                                                       std::span<const double> shat_sq_var = {}) {
    spec.validate();
    if (model == VarianceModel::NoNorm) {
        throw ContractViolation("predict_backward_variance_bn needs a BN model");
    }
    const std::size_t depth = spec.depth();
    for (std::size_t l = 1; l < depth; ++l) {
        if (spec.layer(l).normalizer.kind != norm::Kind::FullBN) {
            throw ContractViolation("layer " + std::to_string(l) + " is not batch-normalized");
        }
    }
    if (model == VarianceModel::BnExact && shat_sq_var.size() != depth) {
        throw ContractViolation("exact model needs Var(shat^2) for every layer");
    }
    VariancePrediction p;
    p.model = model;
    p.per_layer.assign(depth, 0.0);
    double v = var_top;
    p.per_layer[depth - 1] = v;
    for (std::size_t l = depth - 1; l >= 1; --l) {
        const double k_next = static_cast<double>(spec.width(l + 1));
        if (model == VarianceModel::BnLeading) {
            v *= k_next / static_cast<double>(spec.fan_in(l));
        } else {
            v *= k_next * bn_exact_prefactor(spec.fan_in(l), batch, shat_sq_var[l - 1]);
        }
        p.per_layer[l - 1] = v;
    }
    return p;
}

/// Closed form of the leading-order product: (K_{L-1} K_L) / (K_{l-1} K_l).
inline double bn_telescoped_factor(std::span<const std::size_t> widths, std::size_t l) {
    const std::size_t depth = widths.size() - 1;
    if (l < 1 || l > depth) {
        throw ContractViolation("layer index out of range");
    }
    return static_cast<double>(widths[depth - 1]) * static_cast<double>(widths[depth]) /
           (static_cast<double>(widths[l - 1]) * static_cast<double>(widths[l]));
}

}  // namespace bnnlab
