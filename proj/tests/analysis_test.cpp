#include <cmath>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "bnnlab/analysis/harness.hpp"
#include "bnnlab/analysis/shat.hpp"
#include "bnnlab/net/dense_net.hpp"

namespace bnnlab::analysis {
namespace {

NetworkSpec binary_net(std::vector<std::size_t> widths, norm::NormalizerConfig n) {
    LayerSpec l;
    l.binary = true;
    l.normalizer = n;
    return NetworkSpec::uniform(std::move(widths), l, 128);
}

MCConfig mc(std::size_t trials = 200, std::uint64_t seed = 1) {
    MCConfig c;
    c.trials = trials;
    c.batch = 128;
    c.master_seed = seed;
    return c;
}

// Independent oracle: Var(shat^2) from the binomial law of s by direct
// summation of moments, E[shat^4] - E[shat^2]^2 with E[shat^2] = 1.
double binomial_oracle(std::size_t k) {
    double e4 = 0.0;
    for (std::size_t j = 0; j <= k; ++j) {
        const double logp = std::lgamma(k + 1.0) - std::lgamma(j + 1.0) - std::lgamma(k - j + 1.0) -
                            static_cast<double>(k) * std::log(2.0);
        const double s = static_cast<double>(k) - 2.0 * static_cast<double>(j);
        const double shat2 = s * s / static_cast<double>(k);
        e4 += std::exp(logp) * shat2 * shat2;
    }
    return e4 - 1.0;
}

TEST(ShatVariance, DegenerateAndTightCases) {
    EXPECT_EQ(shat_sq_variance(1, ShatMode::Exact).value, 0.0);
    EXPECT_EQ(shat_sq_variance(2, ShatMode::Exact).value, 1.0);
    EXPECT_EQ(shat_sq_variance(2, ShatMode::Exact).standard_error, 0.0);
}

TEST(ShatVariance, ExactRespectsBoundAndMatchesOracle) {
    for (std::size_t k = 1; k <= kMaxExactFanIn; ++k) {
        const double v = shat_sq_variance(k, ShatMode::Exact).value;
        EXPECT_LE(v, static_cast<double>(k) - 1.0 + 1e-12) << "K=" << k;
        EXPECT_NEAR(v, binomial_oracle(k), 1e-10) << "K=" << k;
        EXPECT_NEAR(v, 2.0 - 2.0 / static_cast<double>(k), 1e-10) << "K=" << k;
    }
}

TEST(ShatVariance, ExactRejectsLargeFanIn) {
    EXPECT_THROW(shat_sq_variance(31, ShatMode::Exact), ContractViolation);
    EXPECT_THROW(shat_sq_variance(0, ShatMode::Exact), ContractViolation);
    EXPECT_THROW(shat_sq_variance(8, ShatMode::Sampled), ContractViolation);
}

TEST(ShatVariance, SampledWithinThreeStandardErrors) {
    for (std::size_t k : {64u, 256u}) {
        RngStream rng(3, k);
        const auto est = shat_sq_variance(k, ShatMode::Sampled, &rng, 200000);
        EXPECT_GT(est.standard_error, 0.0);
        EXPECT_LE(est.value, static_cast<double>(k) - 1.0 + 3.0 * est.standard_error);
        EXPECT_NEAR(est.value, binomial_oracle(k), 3.0 * est.standard_error) << "K=" << k;
    }
}

TEST(GradientVariance, NoNormRatioNearFanOut) {
    const auto report =
        measure_gradient_variance(binary_net({64, 64, 64}, norm::NormalizerConfig::identity()),
                                  InitScheme::uniform(1e-2), mc());
    ASSERT_EQ(report.layers.size(), 2u);
    EXPECT_GE(report.layers[0].measured_step_ratio, 48.0);
    EXPECT_LE(report.layers[0].measured_step_ratio, 80.0);
    for (const auto& lv : report.layers) {
        EXPECT_GE(lv.measured, 0.0);
        EXPECT_TRUE(std::isfinite(lv.ratio));
    }
}

TEST(GradientVariance, FullBnRatioNearOne) {
    const auto report =
        measure_gradient_variance(binary_net({64, 64, 64}, norm::NormalizerConfig::full_bn()),
                                  InitScheme::uniform(1e-2), mc());
    EXPECT_GE(report.layers[0].measured_step_ratio, 0.75);
    EXPECT_LE(report.layers[0].measured_step_ratio, 1.33);
}

TEST(GradientVariance, CenterScaleRatioNearOne) {
    const auto report = measure_gradient_variance(
        binary_net({64, 64, 64}, norm::NormalizerConfig::center_scale(1.0 / 8.0)),
        InitScheme::uniform(1e-2), mc());
    EXPECT_GE(report.layers[0].measured_step_ratio, 0.75);
    EXPECT_LE(report.layers[0].measured_step_ratio, 1.33);
}

TEST(GradientVariance, NoNormAcrossWidths) {
    for (std::size_t k : {16u, 64u, 256u}) {
        const auto report =
            measure_gradient_variance(binary_net({k, k, k, k}, norm::NormalizerConfig::identity()),
                                      InitScheme::uniform(1e-2), mc(200, 7));
        for (const auto& v : compare_report(report, 1.33, CompareModel::NoNorm)) {
            EXPECT_TRUE(v.pass) << "K=" << k << " layer " << v.layer << " measured " << v.measured;
        }
    }
}

TEST(GradientVariance, FullBnConstantAndPyramid) {
    for (const auto& widths : {std::vector<std::size_t>{64, 64, 64, 64},
                               std::vector<std::size_t>{32, 64, 128, 64}}) {
        const auto report = measure_gradient_variance(
            binary_net(widths, norm::NormalizerConfig::full_bn()), InitScheme::uniform(1e-2), mc(200, 5));
        for (const auto& v : compare_report(report, 1.33, CompareModel::BnLeading)) {
            EXPECT_TRUE(v.pass) << "layer " << v.layer << " measured " << v.measured << " predicted "
                                << v.predicted;
        }
    }
}

TEST(GradientVariance, NoNormFailsAgainstBnPrediction) {
    const auto report =
        measure_gradient_variance(binary_net({64, 64, 64, 64}, norm::NormalizerConfig::identity()),
                                  InitScheme::uniform(1e-2), mc(50));
    const auto vs_bn = compare_report(report, 1.33, CompareModel::BnLeading);
    for (std::size_t i = 0; i + 1 < vs_bn.size(); ++i) {
        EXPECT_FALSE(vs_bn[i].pass);
    }
}

TEST(GradientVariance, IndependentOfWorkerCount) {
    const auto spec = binary_net({32, 48, 16}, norm::NormalizerConfig::full_bn());
    auto c1 = mc(40, 11);
    c1.workers = 1;
    auto c4 = c1;
    c4.workers = 4;
    const auto a = measure_gradient_variance(spec, InitScheme::uniform(1e-2), c1);
    const auto b = measure_gradient_variance(spec, InitScheme::uniform(1e-2), c4);
    ASSERT_EQ(a.layers.size(), b.layers.size());
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        EXPECT_EQ(a.layers[i].measured, b.layers[i].measured);
        EXPECT_EQ(a.layers[i].predicted_bn_exact, b.layers[i].predicted_bn_exact);
    }
}

TEST(GradientVariance, RequiresThirtyTrials) {
    const auto spec = binary_net({8, 8, 8}, norm::NormalizerConfig::identity());
    EXPECT_THROW(measure_gradient_variance(spec, InitScheme::uniform(1e-2), mc(29)), ContractViolation);
    EXPECT_NO_THROW(measure_gradient_variance(spec, InitScheme::uniform(1e-2), mc(30)));
}

GradVarianceReport synthetic_report(double measured_ratio, double predicted_ratio) {
    GradVarianceReport r;
    LayerVariance a, b;
    a.layer = 1;
    b.layer = 2;
    b.predicted_matched = 1.0;
    a.predicted_matched = predicted_ratio;
    a.measured_step_ratio = measured_ratio;
    b.measured_step_ratio = 1.0;
    r.layers = {a, b};
    return r;
}

TEST(CompareReport, Verdicts) {
    for (double tol : {1.0001, 1.33, 10.0}) {
        EXPECT_TRUE(compare_report(synthetic_report(5.0, 5.0), tol)[0].pass);
    }
    EXPECT_FALSE(compare_report(synthetic_report(10.0, 5.0), 1.33)[0].pass);
    EXPECT_FALSE(compare_report(synthetic_report(2.5, 5.0), 1.33)[0].pass);
    EXPECT_THROW(compare_report(synthetic_report(1.0, 1.0), 1.0), ContractViolation);
}

TEST(ScaleInvariance, BinaryBnLayersIgnoreLatentScale) {
    const auto spec = binary_net({16, 32, 32, 8}, norm::NormalizerConfig::full_bn());
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        EXPECT_TRUE(scale_invariance_check(spec, 1e3, seed));
        EXPECT_TRUE(scale_invariance_check(spec, 1e-3, seed));
        EXPECT_TRUE(scale_invariance_check(spec, 1e3, seed, 2));
    }
}

TEST(ScaleInvariance, ReluIdentityControlIsNotInvariant) {
    LayerSpec l;
    l.binary = false;
    l.normalizer = norm::NormalizerConfig::identity();
    l.activation = Activation::Relu;
    const auto spec = NetworkSpec::uniform({16, 32, 32, 8}, l, 64);
    EXPECT_FALSE(scale_invariance_check(spec, 1e3, 0));
    EXPECT_THROW(scale_invariance_check(spec, 0.0, 0), ContractViolation);
}

// Monte-Carlo cross-check of the forward product for linear binary layers.
TEST(ForwardVariance, MonteCarloMatchesProduct) {
    LayerSpec l;
    l.binary = true;
    l.normalizer = norm::NormalizerConfig::identity();
    l.activation = Activation::Linear;
    const auto spec = NetworkSpec::uniform({8, 16, 4}, l, 256);
    const auto predicted = predict_forward_variance(spec, 1.0, std::vector<double>{1.0, 1.0});
    std::vector<detail::Pooled> pooled(2);
    for (std::uint64_t trial = 0; trial < 200; ++trial) {
        RngStream rng(21, trial);
        DenseNet net(spec, InitScheme::uniform(1e-2), rng);
        const Matrix x = detail::draw_inputs(256, 8, InputDistribution::Rademacher, rng);
        const ForwardPass fp = net.forward(x, {norm::Mode::Train, ad::SteMode::Clipped});
        for (std::size_t i = 0; i < 2; ++i) {
            pooled[i].merge(detail::Pooled::of(fp.tape.value(fp.dot[i])));
        }
    }
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_NEAR(pooled[i].unbiased_variance() / predicted[i], 1.0, 0.05) << "layer " << i + 1;
    }
}

}  // namespace
}  // namespace bnnlab::analysis
