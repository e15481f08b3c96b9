#include <cmath>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "bnnlab/autodiff/ops.hpp"
#include "bnnlab/core/rng.hpp"
#include "bnnlab/norm/batch_norm.hpp"
#include "bnnlab/norm/center_scale.hpp"
#include "bnnlab/norm/threshold.hpp"

namespace bnnlab::norm {
namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng, double scale = 1.0,
                     double shift = 0.0) {
    Matrix m(r, c);
    for (double& v : m.values()) {
        v = shift + scale * rng.normal();
    }
    return m;
}

NormalizerConfig bn_eps(double eps) {
    auto c = NormalizerConfig::full_bn();
    c.epsilon = eps;
    return c;
}

double column_variance(const Matrix& m, std::size_t k) {
    double mean = 0.0;
    for (std::size_t b = 0; b < m.rows(); ++b) mean += m(b, k);
    mean /= static_cast<double>(m.rows());
    double v = 0.0;
    for (std::size_t b = 0; b < m.rows(); ++b) v += (m(b, k) - mean) * (m(b, k) - mean);
    return v / static_cast<double>(m.rows());
}

TEST(BnForward, HandComputedColumn) {
    const Matrix s{{1.0}, {2.0}, {3.0}};
    const auto out = bn_forward(s, BNParams::initial(1), bn_eps(0.0), Mode::Train);
    // mean 2, biased variance 2/3
    const double expected = 1.0 / std::sqrt(2.0 / 3.0);
    EXPECT_NEAR(expected, 1.224745, 1e-6);
    EXPECT_NEAR(out.shat(0, 0), -expected, 1e-15);
    EXPECT_EQ(out.shat(1, 0), 0.0);
    EXPECT_NEAR(out.shat(2, 0), expected, 1e-15);
    EXPECT_DOUBLE_EQ(out.stats.mean[0], 2.0);
    EXPECT_DOUBLE_EQ(out.stats.variance[0], 2.0 / 3.0);
}

TEST(BnForward, ConstantColumnWithEpsilonMapsToBeta) {
    BNParams p = BNParams::initial(2);
    p.beta = Matrix{{0.25, -3.0}};
    const Matrix s(5, 2, 7.5);
    const auto out = bn_forward(s, p, NormalizerConfig::full_bn(), Mode::Train);
    for (std::size_t b = 0; b < 5; ++b) {
        EXPECT_EQ(out.shat(b, 0), 0.0);
        EXPECT_EQ(out.z(b, 0), 0.25);
        EXPECT_EQ(out.z(b, 1), -3.0);
    }
}

TEST(BnForward, ConstantColumnWithoutEpsilonIsSingular) {
    EXPECT_THROW(bn_forward(Matrix(4, 1, 1.0), BNParams::initial(1), bn_eps(0.0), Mode::Train),
                 SingularityError);
}

TEST(BnForward, PowerOfTwoScalingIsBitIdentical) {
    auto rng = seeded_stream(1, 0);
    const Matrix s = random_matrix(16, 5, rng, 3.0, 1.0);
    BNParams p{random_matrix(1, 5, rng), random_matrix(1, 5, rng)};
    const auto base = bn_forward(s, p, bn_eps(0.0), Mode::Train);
    for (double c : {0.125, 2.0, 1024.0, 0x1.0p-20}) {
        EXPECT_EQ(bn_forward(c * s, p, bn_eps(0.0), Mode::Train).z, base.z) << c;
    }
}

TEST(BnForward, ArbitraryPositiveScalingIsInvariantToRounding) {
    auto rng = seeded_stream(2, 0);
    const Matrix s = random_matrix(16, 5, rng, 3.0, 1.0);
    BNParams p{random_matrix(1, 5, rng), random_matrix(1, 5, rng)};
    const auto base = bn_forward(s, p, bn_eps(0.0), Mode::Train);
    for (double c : {1e-3, 0.7, 3.3, 1e4}) {
        EXPECT_LE(max_abs_diff(bn_forward(c * s, p, bn_eps(0.0), Mode::Train).z, base.z), 1e-12)
            << c;
    }
}

TEST(BnForward, OutputVarianceIsGammaSquared) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto rng = seeded_stream(seed, 3);
        const Matrix s = random_matrix(32, 6, rng, 5.0, -2.0);
        BNParams p{random_matrix(1, 6, rng, 2.0), random_matrix(1, 6, rng)};
        const auto out = bn_forward(s, p, bn_eps(0.0), Mode::Train);
        for (std::size_t k = 0; k < 6; ++k) {
            EXPECT_NEAR(column_variance(out.z, k), p.gamma(0, k) * p.gamma(0, k), 1e-10);
        }
    }
}

TEST(BnForward, Preconditions) {
    const Matrix s(1, 3, 1.0);
    EXPECT_THROW(bn_forward(s, BNParams::initial(3), NormalizerConfig::full_bn(), Mode::Train),
                 ContractViolation);
    EXPECT_THROW(bn_forward(Matrix(4, 3), BNParams::initial(3), NormalizerConfig::center_only(),
                            Mode::Train),
                 ContractViolation);
    EXPECT_THROW(bn_forward(Matrix(4, 3), BNParams::initial(3), NormalizerConfig::full_bn(),
                            Mode::Eval),
                 ContractViolation);
    EXPECT_THROW(bn_forward(Matrix(4, 3), BNParams::initial(2), NormalizerConfig::full_bn(),
                            Mode::Train),
                 ShapeError);
}

TEST(BnForward, EvalModeUsesRunningStatistics) {
    RunningStats running{{1.0, -1.0}, {4.0, 0.25}};
    const Matrix s{{3.0, 0.0}};
    const auto out = bn_forward(s, BNParams::initial(2), bn_eps(0.0), Mode::Eval, &running);
    EXPECT_DOUBLE_EQ(out.z(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(out.z(0, 1), 2.0);
}

TEST(BnBackwardClosed, UniformUpstreamGivesZeroInputGradient) {
    auto rng = seeded_stream(4, 0);
    const Matrix s = random_matrix(8, 3, rng);
    BNParams p{random_matrix(1, 3, rng), random_matrix(1, 3, rng)};
    const auto fwd = bn_forward(s, p, NormalizerConfig::full_bn(), Mode::Train);
    Matrix dz(8, 3);
    for (std::size_t b = 0; b < 8; ++b) {
        dz(b, 0) = 1.5;
        dz(b, 1) = -2.0;
        dz(b, 2) = 0.1;
    }
    const Matrix ds = bn_backward_closed(fwd.shat, dz, p, fwd.stats);
    const Matrix sums = column_sum(ds);
    for (double v : sums.values()) {
        EXPECT_NEAR(v, 0.0, 1e-12);
    }
}

// Closed form against the tape differentiating BN assembled from elementary ops.
TEST(BnBackwardClosed, MatchesComposedTapeBackward) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto rng = seeded_stream(seed, 5);
        const Matrix s = random_matrix(8, 4, rng, 2.0, 0.5);
        const BNParams p{random_matrix(1, 4, rng), random_matrix(1, 4, rng)};
        const Matrix dz = random_matrix(8, 4, rng);
        const auto cfg = NormalizerConfig::full_bn();

        const auto fwd = bn_forward(s, p, cfg, Mode::Train);
        const Matrix ds = bn_backward_closed(fwd.shat, dz, p, fwd.stats);

        ad::Tape t;
        ad::Var vs = t.leaf(s), vg = t.leaf(p.gamma), vb = t.leaf(p.beta);
        ad::Var z = ad::batch_norm_composed(t, vs, vg, vb, cfg.epsilon);
        EXPECT_LE(max_abs_diff(t.value(z), fwd.z), 1e-12);
        t.backward(z, dz);
        EXPECT_LE(max_abs_diff(t.grad(vs), ds), 1e-10) << "seed " << seed;
    }
}

TEST(BnBackwardClosed, MatchesFiniteDifferences) {
    auto rng = seeded_stream(6, 0);
    const Matrix s = random_matrix(8, 4, rng);
    const BNParams p{random_matrix(1, 4, rng), random_matrix(1, 4, rng)};
    const Matrix r = random_matrix(8, 4, rng);
    const auto cfg = NormalizerConfig::full_bn();
    auto loss = [&](const Matrix& in) {
        const auto f = bn_forward(in, p, cfg, Mode::Train);
        double l = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) l += r[i] * f.z[i];
        return l;
    };
    const auto fwd = bn_forward(s, p, cfg, Mode::Train);
    const Matrix ds = bn_backward_closed(fwd.shat, r, p, fwd.stats);
    const double h = 1e-5;
    for (std::size_t i = 0; i < s.size(); ++i) {
        Matrix sp = s, sm = s;
        sp[i] += h;
        sm[i] -= h;
        const double numeric = (loss(sp) - loss(sm)) / (2 * h);
        const double denom = std::max({std::abs(numeric), std::abs(ds[i]), 1e-12});
        EXPECT_LE(std::abs(numeric - ds[i]) / denom, 1e-6) << i;
    }
}

TEST(BnBackwardClosed, ZeroStddevIsSingular) {
    BatchStats st{{0.0}, {0.0}, {0.0}, 2};
    EXPECT_THROW(bn_backward_closed(Matrix(2, 1), Matrix(2, 1, 1.0), BNParams::initial(1), st),
                 SingularityError);
}

TEST(BnParamGrads, ZeroUpstream) {
    auto g = bn_param_grads(Matrix(4, 2, 0.3), Matrix(4, 2));
    EXPECT_EQ(g.dgamma, Matrix(1, 2));
    EXPECT_EQ(g.dbeta, Matrix(1, 2));
}

TEST(BnParamGrads, OnesUpstreamOnStandardizedColumns) {
    auto rng = seeded_stream(7, 0);
    const auto fwd =
        bn_forward(random_matrix(8, 3, rng), BNParams::initial(3), bn_eps(0.0), Mode::Train);
    auto g = bn_param_grads(fwd.shat, Matrix(8, 3, 1.0));
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(g.dbeta(0, k), 8.0);
        EXPECT_NEAR(g.dgamma(0, k), 0.0, 1e-14);
    }
}

TEST(BnParamGrads, MatchFiniteDifferences) {
    auto rng = seeded_stream(8, 0);
    const Matrix s = random_matrix(8, 4, rng);
    const BNParams p{random_matrix(1, 4, rng), random_matrix(1, 4, rng)};
    const Matrix r = random_matrix(8, 4, rng);
    const auto cfg = NormalizerConfig::full_bn();
    auto loss = [&](const BNParams& pp) {
        const auto f = bn_forward(s, pp, cfg, Mode::Train);
        double l = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) l += r[i] * f.z[i];
        return l;
    };
    const auto fwd = bn_forward(s, p, cfg, Mode::Train);
    const auto g = bn_param_grads(fwd.shat, r);
    const double h = 1e-5;
    for (std::size_t k = 0; k < 4; ++k) {
        BNParams gp = p, gm = p, bp = p, bm = p;
        gp.gamma(0, k) += h;
        gm.gamma(0, k) -= h;
        bp.beta(0, k) += h;
        bm.beta(0, k) -= h;
        const double ng = (loss(gp) - loss(gm)) / (2 * h);
        const double nb = (loss(bp) - loss(bm)) / (2 * h);
        EXPECT_LE(std::abs(ng - g.dgamma(0, k)) / std::max(std::abs(ng), 1e-12), 1e-6);
        EXPECT_LE(std::abs(nb - g.dbeta(0, k)) / std::max(std::abs(nb), 1e-12), 1e-6);
    }
}

TEST(CenterScale, InverseSqrtFanInGivesUnitVariance) {
    auto rng = seeded_stream(9, 0);
    const std::size_t k = 64, batch = 4096;
    Matrix x(batch, k), w(k, 4);
    for (double& v : x.values()) v = rng.rademacher();
    for (double& v : w.values()) v = rng.rademacher();
    const Matrix s = matmul(x, w);
    const auto out = center_scale_forward(s, 1.0 / std::sqrt(static_cast<double>(k)), Mode::Train);
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_NEAR(column_variance(out.z, j), 1.0, 0.1);
    }
}

TEST(CenterScale, ZeroMeanInputWithUnitScaleIsUnchanged) {
    const Matrix s{{-1.0, 2.5}, {1.0, -2.5}, {0.0, 0.0}};
    EXPECT_EQ(center_scale_forward(s, 1.0, Mode::Train).z, s);
}

TEST(CenterScale, ShiftInvariance) {
    auto rng = seeded_stream(10, 0);
    const Matrix s = random_matrix(16, 3, rng);
    const Matrix shifted = map(s, [](double v) { return v + 17.25; });
    EXPECT_LE(max_abs_diff(center_scale_forward(s, 0.4, Mode::Train).z,
                           center_scale_forward(shifted, 0.4, Mode::Train).z),
              1e-12);
}

TEST(CenterScale, EvalUsesRunningMeanAndRejectsBadScale) {
    const std::vector<double> running{1.0, 2.0};
    const auto out = center_scale_forward(Matrix{{3.0, 3.0}}, 0.5, Mode::Eval, &running);
    EXPECT_EQ(out.z, (Matrix{{1.0, 0.5}}));
    EXPECT_THROW(center_scale_forward(Matrix{{1.0}}, 0.0, Mode::Train), ContractViolation);
    EXPECT_THROW(center_scale_forward(Matrix{{1.0}}, 1.0, Mode::Eval), ContractViolation);
}

TEST(CenterScale, BackwardRemovesMeanAndScales) {
    const Matrix dz{{1.0}, {3.0}};
    EXPECT_EQ(center_scale_backward(dz, 2.0), (Matrix{{-2.0}, {2.0}}));
}

TEST(ThresholdFold, WorkedExample) {
    BatchStats st{{0.0}, {16.0}, {4.0}, 8};
    BNParams p{Matrix{{1.0}}, Matrix{{0.5}}};
    const auto fold = fold_bn_to_threshold(st, p);
    EXPECT_DOUBLE_EQ(fold.tau[0], -2.0);
    EXPECT_EQ(fold.orientation[0], 1);
    EXPECT_EQ(fold.fire(-2.0, 0), 1.0);
    EXPECT_EQ(fold.fire(-3.0, 0), -1.0);
}

TEST(ThresholdFold, ZeroBetaGivesMean) {
    BatchStats st{{3.25}, {1.0}, {1.0}, 8};
    const auto fold = fold_bn_to_threshold(st, BNParams::initial(1));
    EXPECT_EQ(fold.tau[0], 3.25);
}

TEST(ThresholdFold, NegativeGammaFlipsDecision) {
    BatchStats st{{1.0}, {1.0}, {1.0}, 8};
    BNParams pos{Matrix{{2.0}}, Matrix{{0.0}}};
    BNParams neg{Matrix{{-2.0}}, Matrix{{0.0}}};
    const auto fp = fold_bn_to_threshold(st, pos);
    const auto fn = fold_bn_to_threshold(st, neg);
    EXPECT_EQ(fn.orientation[0], -1);
    for (double s : {-3.0, 0.0, 0.5, 2.0, 10.0}) {
        EXPECT_EQ(fp.fire(s, 0), -fn.fire(s, 0)) << s;
    }
}

TEST(ThresholdFold, SingularInputsThrow) {
    EXPECT_THROW(fold_bn_to_threshold({{0.0}, {0.0}, {0.0}, 2}, BNParams::initial(1)),
                 SingularityError);
    EXPECT_THROW(fold_bn_to_threshold({{0.0}, {1.0}, {1.0}, 2}, {Matrix{{0.0}}, Matrix{{1.0}}}),
                 SingularityError);
}

// sign(BN(s)) and the exact threshold predicate agree on every element.
TEST(ThresholdFold, ExactEquivalenceOverRandomDraws) {
    std::size_t rounded_mismatch = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        auto rng = seeded_stream(seed, 11);
        Matrix x(16, 9), w(9, 3);
        for (double& v : x.values()) v = rng.rademacher();
        for (double& v : w.values()) v = rng.rademacher();
        const Matrix s = matmul(x, w);
        BNParams p{Matrix(1, 3), Matrix(1, 3)};
        for (std::size_t k = 0; k < 3; ++k) {
            double g = 0.0;
            while (g == 0.0) g = 3.0 * rng.symmetric_uniform();
            p.gamma(0, k) = g;
            p.beta(0, k) = 2.0 * rng.normal();
        }
        const auto fwd = bn_forward(s, p, NormalizerConfig::full_bn(), Mode::Train);
        const auto fold = fold_bn_to_threshold(fwd.stats, p);
        EXPECT_EQ(ad::sign_forward(fwd.z), fold.apply(s)) << "seed " << seed;
        const Matrix rounded = fold.apply_rounded(s);
        for (std::size_t i = 0; i < s.size(); ++i) {
            rounded_mismatch += rounded[i] != ad::sign_value(fwd.z[i]);
        }
    }
    // The rounded threshold is reported, not required to match.
    RecordProperty("rounded_mismatches", static_cast<int>(rounded_mismatch));
}

TEST(RunningStats, MomentumUpdate) {
    RunningStats r{{0.0}, {1.0}};
    BatchStats b{{2.0}, {3.0}, {std::sqrt(3.0)}, 4};
    const auto u = update_running_stats(r, b, 0.1);
    EXPECT_DOUBLE_EQ(u.mean[0], 0.2);
    EXPECT_DOUBLE_EQ(u.variance[0], 1.2);
    EXPECT_THROW(update_running_stats(r, b, 1.0), ContractViolation);
    EXPECT_THROW(update_running_stats(r, b, 0.0), ContractViolation);
}

TEST(RunningStats, GeometricConvergence) {
    RunningStats r{{0.0}, {1.0}};
    BatchStats b{{1.0}, {1.0}, {1.0}, 4};
    // gap after n steps is 0.9^n, so it halves between steps 6 and 7 (log 0.5 / log 0.9 = 6.58)
    for (int n = 1; n <= 7; ++n) {
        r = update_running_stats(r, b, 0.1);
        const double gap = 1.0 - r.mean[0];
        EXPECT_NEAR(gap, std::pow(0.9, n), 1e-12);
        if (n == 6) {
            EXPECT_GT(gap, 0.5);
        }
        if (n == 7) {
            EXPECT_LT(gap, 0.5);
        }
    }
    for (int n = 0; n < 300; ++n) r = update_running_stats(r, b, 0.1);
    EXPECT_NEAR(r.mean[0], 1.0, 1e-12);
}

TEST(NormalizerConfig, ParsesTokens) {
    EXPECT_EQ(parse_normalizer("fullbn").kind, Kind::FullBN);
    EXPECT_EQ(parse_normalizer("center_only").kind, Kind::CenterOnly);
    EXPECT_EQ(parse_normalizer("identity").kind, Kind::Identity);
    const auto fixed = parse_normalizer("center_scale:0.125");
    EXPECT_EQ(fixed.resolved_scale(64), 0.125);
    const auto fan = parse_normalizer("center_scale:fanin");
    EXPECT_DOUBLE_EQ(fan.resolved_scale(64), 0.125);
    const auto fan3 = parse_normalizer("center_scale:3fanin");
    EXPECT_DOUBLE_EQ(fan3.resolved_scale(12), 1.0 / 6.0);
    EXPECT_EQ(parse_normalizer(fan3.to_string()).fan_in_multiplier, 3.0);
    EXPECT_THROW(parse_normalizer("center_scale:-1"), FormatError);
    EXPECT_THROW(parse_normalizer("layernorm"), FormatError);
}

}  // namespace
}  // namespace bnnlab::norm
