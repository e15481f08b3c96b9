#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "bnnlab/core/matrix.hpp"
#include "bnnlab/core/moments.hpp"
#include "bnnlab/core/rng.hpp"
#include "bnnlab/init/init.hpp"

namespace bnnlab {
namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng) {
    Matrix m(r, c);
    for (double& v : m.values()) {
        v = rng.normal();
    }
    return m;
}

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double sum = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                sum += a(i, k) * b(k, j);
            }
            c(i, j) = sum;
        }
    }
    return c;
}

TEST(RademacherMoments, KnownValues) {
    auto half = rademacher_moments(0.5);
    EXPECT_DOUBLE_EQ(half.mean, 0.0);
    EXPECT_DOUBLE_EQ(half.variance, 1.0);

    auto one = rademacher_moments(1.0);
    EXPECT_DOUBLE_EQ(one.mean, 1.0);
    EXPECT_DOUBLE_EQ(one.variance, 0.0);

    auto quarter = rademacher_moments(0.25);
    EXPECT_DOUBLE_EQ(quarter.mean, -0.5);
    EXPECT_DOUBLE_EQ(quarter.variance, 0.75);
}

TEST(RademacherMoments, VarianceIsOneMinusMeanSquaredOnGrid) {
    for (int i = 0; i <= 100; ++i) {
        const double p = i / 100.0;
        auto m = rademacher_moments(p);
        EXPECT_NEAR(m.variance, 1.0 - m.mean * m.mean, 1e-15) << "p=" << p;
    }
}

TEST(RademacherMoments, RejectsOutOfRange) {
    EXPECT_THROW(rademacher_moments(-0.01), DomainError);
    EXPECT_THROW(rademacher_moments(1.01), DomainError);
    EXPECT_THROW(rademacher_moments(std::numeric_limits<double>::quiet_NaN()), DomainError);
}

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswerVectors) {
    EXPECT_EQ(Philox4x32::generate({0, 0, 0, 0}, {0, 0}),
              (Philox4x32::Block{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
    EXPECT_EQ(Philox4x32::generate({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                                   {0xffffffff, 0xffffffff}),
              (Philox4x32::Block{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
    EXPECT_EQ(Philox4x32::generate({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                                   {0xa4093822, 0x299f31d0}),
              (Philox4x32::Block{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(RngStream, SameSeedAndStreamReproduce) {
    auto a = seeded_stream(42, 0);
    auto b = seeded_stream(42, 0);
    for (int i = 0; i < 1000; ++i) {
        ASSERT_EQ(a.next_u64(), b.next_u64()) << "draw " << i;
    }
}

TEST(RngStream, DistinctStreamsDiffer) {
    auto a = seeded_stream(42, 0);
    auto b = seeded_stream(42, 1);
    int equal = 0;
    for (int i = 0; i < 1000; ++i) {
        equal += a.next_u64() == b.next_u64();
    }
    EXPECT_EQ(equal, 0);
}

TEST(RngStream, UniformMeanLawOfLargeNumbers) {
    auto rng = seeded_stream(7, 3);
    double sum = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    const double mean = sum / n;
    EXPECT_GE(mean, 0.499);
    EXPECT_LE(mean, 0.501);
}

TEST(RngStream, NormalMoments) {
    auto rng = seeded_stream(11, 0);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s1 += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s1 / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(RngStream, BelowStaysInRange) {
    auto rng = seeded_stream(5, 5);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const auto v = rng.below(7);
        ASSERT_LT(v, 7u);
        ++counts[v];
    }
    for (int c : counts) {
        EXPECT_NEAR(c, 10000, 500);
    }
}

TEST(Matmul, IdentityIsNeutral) {
    auto rng = seeded_stream(1, 0);
    const Matrix a = random_matrix(5, 5, rng);
    EXPECT_EQ(matmul(Matrix::identity(5), a), a);
}

TEST(Matmul, HandCheck) {
    const Matrix a{{1, 2}, {3, 4}};
    const Matrix b{{1}, {1}};
    EXPECT_EQ(matmul(a, b), (Matrix{{3}, {7}}));
}

TEST(Matmul, MatchesNaiveTripleLoopBitForBit) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto rng = seeded_stream(seed, 9);
        const Matrix a = random_matrix(8, 8, rng);
        const Matrix b = random_matrix(8, 8, rng);
        EXPECT_EQ(matmul(a, b), naive_matmul(a, b)) << "seed " << seed;
    }
}

TEST(Matmul, ReproducibleAcrossCalls) {
    auto r1 = seeded_stream(3, 3);
    auto r2 = seeded_stream(3, 3);
    const Matrix a1 = random_matrix(16, 9, r1), b1 = random_matrix(9, 4, r1);
    const Matrix a2 = random_matrix(16, 9, r2), b2 = random_matrix(9, 4, r2);
    EXPECT_EQ(matmul(a1, b1), matmul(a2, b2));
}

TEST(Matmul, ShapeMismatchThrows) {
    EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST(Matrix, RejectsNonFiniteAndBadShapes) {
    EXPECT_THROW(Matrix(1, 2, std::vector<double>{1.0, std::nan("")}), NumericError);
    EXPECT_THROW(Matrix(2, 2, std::vector<double>{1.0}), ShapeError);
    EXPECT_THROW(Matrix(0, 3), ShapeError);
}

TEST(Matmul, OverflowIsReported) {
    const Matrix a{{1e200, 1e200}};
    const Matrix b{{1e200}, {1e200}};
    EXPECT_THROW(matmul(a, b), NumericError);
}

// Sign of symmetric uniforms is a Rademacher matrix: column mean -> 0, variance -> 1.
TEST(SignedUniforms, ColumnMomentsApproachRademacher) {
    auto rng = seeded_stream(21, 0);
    const std::size_t n = 100000;
    const Matrix w = binarize(sample_weights(InitScheme::uniform(0.3), n, 3, rng));
    for (std::size_t k = 0; k < 3; ++k) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s1 += w(i, k);
            s2 += w(i, k) * w(i, k);
        }
        const double mean = s1 / n;
        EXPECT_NEAR(mean, 0.0, 0.02);
        EXPECT_NEAR(s2 / n - mean * mean, 1.0, 0.02);
    }
}

}  // namespace
}  // namespace bnnlab
