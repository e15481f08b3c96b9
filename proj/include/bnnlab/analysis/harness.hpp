#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bnnlab/analysis/parallel.hpp"
#include "bnnlab/analysis/shat.hpp"
#include "bnnlab/core/error.hpp"
#include "bnnlab/core/rng.hpp"
#include "bnnlab/init/init.hpp"
#include "bnnlab/init/network_spec.hpp"
#include "bnnlab/init/theory.hpp"
#include "bnnlab/net/dense_net.hpp"

namespace bnnlab::analysis {

enum class InputDistribution { Rademacher, Gaussian };

inline constexpr std::size_t kMinTrials = 30;

struct MCConfig {
    std::size_t trials = 200;
    std::size_t batch = 128;
    std::uint64_t master_seed = 1;
    InputDistribution input = InputDistribution::Rademacher;
    // The variance recursion assumes sign'(x) = 1, so measurements default to the
    // unclipped estimator; Clipped measures what training actually back-propagates.
    ad::SteMode ste = ad::SteMode::Identity;
    std::size_t workers = 0;  // 0: read BNNLAB_WORKERS
    std::size_t shat_samples = 200000;
};

/// Which prediction a verdict is checked against.
enum class CompareModel { Matched, NoNorm, BnLeading, BnExact };

struct LayerVariance {
    std::size_t layer = 0;
    std::size_t fan_in = 0;
    std::size_t width = 0;
    std::size_t samples = 0;
    double measured = 0.0;
    double predicted_no_norm = 0.0;
    double predicted_bn_leading = 0.0;
    double predicted_bn_exact = 0.0;
    double predicted_matched = 0.0;
    double shat_sq_var = 0.0;
    double measured_step_ratio = 0.0;   // Var(l) / Var(l + 1); top layer: Var(L) / injected
    double predicted_step_ratio = 0.0;  // same ratio under the matched model
    double ratio = 0.0;                 // measured_step_ratio / predicted_step_ratio
};

/// Per-layer gradient variances at initialization, measured and predicted.
/// Predictions are scaled by the measured top-layer variance.
struct GradVarianceReport {
    std::vector<LayerVariance> layers;
    MCConfig config;
    std::string note;
};

namespace detail {

/// Pooled count / mean / sum of squared deviations, merged in a fixed order.
struct Pooled {
    double n = 0.0;
    double mean = 0.0;
    double m2 = 0.0;

    static Pooled of(const Matrix& m) {
        Pooled p;
        p.n = static_cast<double>(m.size());
        for (double v : m.values()) {
            p.mean += v;
        }
        p.mean /= p.n;
        for (double v : m.values()) {
            p.m2 += (v - p.mean) * (v - p.mean);
        }
        return p;
    }

    void merge(const Pooled& o) {
        if (o.n == 0.0) {
            return;
        }
        const double n_total = n + o.n;
        const double delta = o.mean - mean;
        mean += delta * o.n / n_total;
        m2 += o.m2 + delta * delta * n * o.n / n_total;
        n = n_total;
    }

    double unbiased_variance() const { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
};

inline Matrix draw_inputs(std::size_t rows, std::size_t cols, InputDistribution d, RngStream& rng) {
    Matrix x(rows, cols);
    for (double& v : x.values()) {
        v = d == InputDistribution::Rademacher ? rng.rademacher() : rng.normal();
    }
    return x;
}

/// Backward gain of a layer's normalizer under the recursion's assumptions.
inline double matched_gain_sq(const NetworkSpec& spec, std::size_t l) {
    const auto& cfg = spec.layer(l).normalizer;
    switch (cfg.kind) {
    case norm::Kind::FullBN:
        return 1.0 / static_cast<double>(spec.fan_in(l));
    case norm::Kind::CenterScale: {
        const double c = cfg.resolved_scale(spec.fan_in(l));
        return c * c;
    }
    case norm::Kind::CenterOnly:
    case norm::Kind::Identity:
        return 1.0;
    }
    return 1.0;
}

}  // namespace detail

/**
 * Var(shat^2) for every layer's fan-in: exact enumeration where allowed,
 * otherwise a sampled estimate from a stream reserved for this purpose.
 */
inline std::vector<double> shat_sq_variances(const NetworkSpec& spec, std::uint64_t master_seed,
                                             std::size_t samples) {
    std::vector<double> out;
    for (std::size_t l = 1; l <= spec.depth(); ++l) {
        const std::size_t k = spec.fan_in(l);
        if (k <= kMaxExactFanIn) {
            out.push_back(shat_sq_variance(k, ShatMode::Exact).value);
        } else {
            RngStream rng(master_seed, (std::uint64_t{1} << 63) + l);
            out.push_back(shat_sq_variance(k, ShatMode::Sampled, &rng, samples).value);
        }
    }
    return out;
}

/**
 * Monte-Carlo estimate of Var(dL/ds^l) at initialization.
 *
 * Each trial draws fresh weights, inputs and a unit-variance Gaussian
 * gradient injected at s^L from its own stream (master_seed, trial), runs
 * one forward and one backward pass, and pools the dL/ds^l entries of each
 * layer. Trials are merged in index order, so the report does not depend
 * on the number of workers.
 */
inline GradVarianceReport measure_gradient_variance(const NetworkSpec& spec,
                                                    const InitScheme& scheme, const MCConfig& mc) {
    spec.validate();
    if (mc.trials < kMinTrials) {
        throw ContractViolation("at least " + std::to_string(kMinTrials) + " trials required, got " +
                                std::to_string(mc.trials));
    }
    if (mc.batch < 2) {
        throw ContractViolation("batch size must be at least 2");
    }
    const std::size_t depth = spec.depth();
    const std::size_t workers = mc.workers == 0 ? workers_from_env() : mc.workers;

    auto per_trial = run_indexed<std::vector<detail::Pooled>>(
        mc.trials, workers, [&](std::size_t trial) {
            RngStream rng(mc.master_seed, trial);
            DenseNet net(spec, scheme, rng);
            const Matrix x = detail::draw_inputs(mc.batch, spec.widths.front(), mc.input, rng);
            Matrix top(mc.batch, spec.widths.back());
            for (double& v : top.values()) {
                v = rng.normal();
            }
            ForwardPass fp = net.forward(x, {norm::Mode::Train, mc.ste});
            fp.tape.backward(fp.output, top);
            std::vector<detail::Pooled> pooled;
            pooled.reserve(depth);
            for (std::size_t l = 1; l <= depth; ++l) {
                pooled.push_back(detail::Pooled::of(fp.tape.grad(fp.dot[l - 1])));
            }
            return pooled;
        });

    std::vector<detail::Pooled> total(depth);
    for (const auto& trial : per_trial) {
        for (std::size_t l = 0; l < depth; ++l) {
            total[l].merge(trial[l]);
        }
    }

    GradVarianceReport report;
    report.config = mc;
    report.config.workers = 0;
    const double var_top = total[depth - 1].unbiased_variance();

    const auto shat = shat_sq_variances(spec, mc.master_seed, mc.shat_samples);
    NetworkSpec bn_spec = spec;
    for (auto& ls : bn_spec.layers) {
        ls.normalizer = norm::NormalizerConfig::full_bn();
    }
    const auto no_norm = predict_backward_variance_no_norm(spec, var_top);
    const auto leading =
        predict_backward_variance_bn(bn_spec, var_top, mc.batch, VarianceModel::BnLeading);
    const auto exact =
        predict_backward_variance_bn(bn_spec, var_top, mc.batch, VarianceModel::BnExact, shat);

    std::vector<double> matched(depth);
    matched[depth - 1] = var_top;
    for (std::size_t l = depth - 1; l >= 1; --l) {
        matched[l - 1] = matched[l] * static_cast<double>(spec.width(l + 1)) *
                         detail::matched_gain_sq(spec, l);
    }

    for (std::size_t l = 1; l <= depth; ++l) {
        LayerVariance lv;
        lv.layer = l;
        lv.fan_in = spec.fan_in(l);
        lv.width = spec.width(l);
        lv.samples = static_cast<std::size_t>(total[l - 1].n);
        lv.measured = total[l - 1].unbiased_variance();
        lv.predicted_no_norm = no_norm.at(l);
        lv.predicted_bn_leading = leading.at(l);
        lv.predicted_bn_exact = exact.at(l);
        lv.predicted_matched = matched[l - 1];
        lv.shat_sq_var = shat[l - 1];
        if (l < depth) {
            lv.measured_step_ratio = lv.measured / total[l].unbiased_variance();
            lv.predicted_step_ratio = matched[l - 1] / matched[l];
        } else {
            lv.measured_step_ratio = lv.measured;  // injected variance is 1
            lv.predicted_step_ratio = 1.0;
        }
        lv.ratio = lv.measured_step_ratio / lv.predicted_step_ratio;
        report.layers.push_back(lv);
    }
    report.note =
        "Var(shat^2) is the population value over fresh draws (exact for fan-in <= 30, sampled "
        "otherwise); per-batch values fluctuate around it. STE mode: " +
        std::string(mc.ste == ad::SteMode::Identity ? "identity" : "clipped") + ".";
    return report;
}

struct Verdict {
    std::size_t layer = 0;
    double measured = 0.0;   // measured step ratio
    double predicted = 0.0;  // predicted step ratio under the chosen model
    double ratio = 0.0;
    bool pass = false;
};

/// Per-layer check of measured vs predicted step ratios: pass iff the
/// quotient lies in [1 / tolerance, tolerance].
inline std::vector<Verdict> compare_report(const GradVarianceReport& report, double tolerance = 1.33,
                                           CompareModel model = CompareModel::Matched) {
    if (!(tolerance > 1.0)) {
        throw ContractViolation("tolerance must exceed 1");
    }
    auto prediction = [model](const LayerVariance& lv) {
        switch (model) {
        case CompareModel::NoNorm: return lv.predicted_no_norm;
        case CompareModel::BnLeading: return lv.predicted_bn_leading;
        case CompareModel::BnExact: return lv.predicted_bn_exact;
        case CompareModel::Matched: return lv.predicted_matched;
        }
        return lv.predicted_matched;
    };
    std::vector<Verdict> out;
    const auto& layers = report.layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Verdict v;
        v.layer = layers[i].layer;
        v.measured = layers[i].measured_step_ratio;
        v.predicted = i + 1 < layers.size() ? prediction(layers[i]) / prediction(layers[i + 1])
                                            : 1.0;
        v.ratio = v.measured / v.predicted;
        v.pass = std::isfinite(v.ratio) && v.ratio >= 1.0 / tolerance && v.ratio <= tolerance;
        out.push_back(v);
    }
    return out;
}

/**
 * True iff multiplying the latent weights of `layer` by c leaves the
 * activations of every hidden layer bit-identical.
 */
inline bool scale_invariance_check(const NetworkSpec& spec, double c, std::uint64_t seed,
                                   std::size_t layer = 1,
                                   const InitScheme& scheme = InitScheme::uniform(1e-2)) {
    if (!(c > 0.0)) {
        throw ContractViolation("scale must be positive");
    }
    spec.validate();
    RngStream rng(seed, 0);
    DenseNet net(spec, scheme, rng);
    const Matrix x = detail::draw_inputs(spec.batch, spec.widths.front(), InputDistribution::Gaussian,
                                         rng);
    DenseNet scaled = net;
    for (double& w : scaled.layer(layer).weights.values()) {
        w *= c;
    }
    const ForwardOptions opt{norm::Mode::Train, ad::SteMode::Clipped};
    const ForwardPass a = net.forward(x, opt);
    const ForwardPass b = scaled.forward(x, opt);
    for (std::size_t i = 0; i < a.activation.size(); ++i) {
        if (a.tape.value(a.activation[i]) != b.tape.value(b.activation[i])) {
            return false;
        }
    }
    return true;
}

}  // namespace bnnlab::analysis
