#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "jumpdrift/model.hpp"

using namespace jumpdrift;

namespace {

ModelSpec linear1d(double slope, double sigma, double gamma) {
    ModelSpec m;
    m.name = "linear";
    m.dim = 1;
    m.drift = [slope](std::span<const double> x, std::span<double> o) { o[0] = slope * x[0]; };
    m.dispersion = [sigma](std::span<const double>, std::span<double> o) { o[0] = sigma; };
    m.jump_coeff = [gamma](std::span<const double>, std::span<double> o) { o[0] = gamma; };
    m.jump_law = JumpLaw::none(1);
    m.initial_law = InitialLaw::fixed({0.0});
    return m;
}

}  // namespace

TEST(ValidateModel, OrnsteinUhlenbeckBounds) {
    const auto rep = validate_model(linear1d(-1.0, 1.0, 0.0), Box::cube(1, -3.0, 3.0), 128);
    EXPECT_EQ(rep.bounds.gamma_sup, 0.0);
    EXPECT_DOUBLE_EQ(rep.bounds.a_sup, 1.0);
    EXPECT_FALSE(rep.dissipativity_flag);
    EXPECT_FALSE(rep.ellipticity_flag);
    EXPECT_GT(rep.eta0_estimate, 0.0);
    EXPECT_NEAR(rep.bounds.b_sup_D, 3.0, 0.05);
}

TEST(ValidateModel, ExpandingDriftIsFlagged) {
    const auto rep = validate_model(linear1d(1.0, 1.0, 0.0), Box::cube(1, -3.0, 3.0), 128);
    EXPECT_TRUE(rep.dissipativity_flag);
}

TEST(ValidateModel, ConstantMatricesIn2d) {
    ModelSpec m;
    m.dim = 2;
    m.drift = [](std::span<const double> x, std::span<double> o) { o[0] = -x[0]; o[1] = -x[1]; };
    m.dispersion = [](std::span<const double>, std::span<double> o) { o[0] = 1; o[1] = 0; o[2] = 0; o[3] = 1; };
    m.jump_coeff = [](std::span<const double>, std::span<double> o) { o[0] = 0.5; o[1] = 0; o[2] = 0; o[3] = 0.5; };
    m.jump_law = JumpLaw::none(2);
    const auto rep = validate_model(m, Box::cube(2, -2.0, 2.0), 256);
    EXPECT_NEAR(rep.bounds.gamma_min, 0.5, 1e-14);
    EXPECT_NEAR(rep.bounds.gamma_sup, 0.5, 1e-14);
    EXPECT_NO_THROW(rep.bounds.require_truncation_ready());
}

TEST(ValidateModel, DegenerateDiffusionFlagsEllipticity) {
    const auto rep = validate_model(linear1d(-1.0, 0.0, 0.0), Box::cube(1, -1.0, 1.0), 16);
    EXPECT_TRUE(rep.ellipticity_flag);
    EXPECT_THROW(rep.bounds.require_truncation_ready(), AssumptionViolationError);
}

TEST(ValidateModel, NonFiniteCoefficientNamesPoint) {
    auto m = linear1d(-1.0, 1.0, 0.0);
    m.drift = [](std::span<const double> x, std::span<double> o) { o[0] = x[0] > 0.5 ? std::log(-1.0) : -x[0]; };
    try {
        validate_model(m, Box::cube(1, -1.0, 1.0), 64);
        FAIL() << "expected ModelEvaluationError";
    } catch (const ModelEvaluationError& e) {
        EXPECT_NE(std::string(e.what()).find("x = ("), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("drift"), std::string::npos);
    }
}

TEST(ValidateModel, Preconditions) {
    EXPECT_THROW(validate_model(linear1d(-1, 1, 0), Box::cube(1, 1.0, 1.0), 8), std::invalid_argument);
    EXPECT_THROW(validate_model(linear1d(-1, 1, 0), Box::cube(1, -1.0, 1.0), 1), std::invalid_argument);
}

TEST(ValidateModel, DeterministicGivenSeed) {
    auto m = linear1d(-1.0, 1.0, 0.3);
    m.drift = [](std::span<const double> x, std::span<double> o) { o[0] = -x[0] + std::sin(7 * x[0]); };
    ValidationOptions opt;
    opt.seed = 11;
    const auto a = validate_model(m, Box::cube(1, -3, 3), 100, opt);
    const auto b = validate_model(m, Box::cube(1, -3, 3), 100, opt);
    EXPECT_EQ(a.bounds.b_sup_D, b.bounds.b_sup_D);
    EXPECT_EQ(a.eta0_estimate, b.eta0_estimate);
    EXPECT_EQ(a.bounds.gamma_min, b.bounds.gamma_min);
}

TEST(LevyMoments, ZeroMeasure) {
    const auto m = levy_moments(JumpLaw::gaussian(1, 0.0, 1.0));
    EXPECT_EQ(m.nu2, 0.0);
    EXPECT_EQ(m.nu3, 0.0);
    EXPECT_EQ(m.mean, std::vector<double>{0.0});
}

TEST(LevyMoments, TwoPointLaw) {
    const auto m = levy_moments(JumpLaw::two_point(1.0, 1.0));
    EXPECT_DOUBLE_EQ(m.nu2, 1.0);
    EXPECT_DOUBLE_EQ(m.nu3, 1.0);
    EXPECT_EQ(m.mean, std::vector<double>{0.0});
}

TEST(LevyMoments, GaussianAgainstClosedFormAndMonteCarlo) {
    const auto law = JumpLaw::gaussian(1, 2.0, 1.0);
    const auto m = levy_moments(law);
    const double nu3_exact = 2.0 * 2.0 * std::sqrt(2.0 / std::numbers::pi);
    EXPECT_NEAR(m.nu2, 2.0, 1e-9);
    EXPECT_NEAR(m.nu3, nu3_exact, 1e-9);
    EXPECT_NEAR(m.nu3, 3.1915, 1e-4);
    EXPECT_LT(m.nu3_error, 1e-6);

    Rng rng(99);
    double s2 = 0.0, s3 = 0.0;
    constexpr int n = 1'000'000;
    std::vector<double> z(1);
    for (int i = 0; i < n; ++i) {
        law.sample_mark(rng, z);
        const double a = std::abs(z[0]);
        s2 += a * a;
        s3 += a * a * a;
    }
    // 2·E|Z|^3 has MC standard error 2·sqrt(15 - 8/π)/1000 ≈ 0.0071
    EXPECT_NEAR(2.0 * s2 / n, 2.0, 0.02);
    EXPECT_NEAR(2.0 * s3 / n, nu3_exact, 0.03);
}

TEST(LevyMoments, GaussianInHigherDimension) {
    const auto m = levy_moments(JumpLaw::gaussian(3, 1.5, 0.5));
    EXPECT_NEAR(m.nu2, 1.5 * 3 * 0.25, 1e-9);
    // E‖Z‖^3 for Z ~ N(0, s²I_3) is s³·2^{3/2}Γ(3)/Γ(3/2) = s³·8·sqrt(2/π)
    EXPECT_NEAR(m.nu3, 1.5 * 0.125 * 8.0 * std::sqrt(2.0 / std::numbers::pi), 1e-9);
}

TEST(LevyMoments, HomogeneousInIntensity) {
    const auto a = levy_moments(JumpLaw::gaussian(2, 1.0, 0.7));
    const auto b = levy_moments(JumpLaw::gaussian(2, 3.0, 0.7));
    EXPECT_NEAR(b.nu2, 3.0 * a.nu2, 1e-12 * b.nu2);
    EXPECT_NEAR(b.nu3, 3.0 * a.nu3, 1e-12 * b.nu3);
    const auto p = levy_moments(JumpLaw::point_mass(1.0, {0.3, -0.4}));
    const auto q = levy_moments(JumpLaw::point_mass(2.5, {0.3, -0.4}));
    EXPECT_NEAR(q.nu3, 2.5 * p.nu3, 1e-15);
    EXPECT_NEAR(q.mean[1], 2.5 * p.mean[1], 1e-15);
}

TEST(LevyMoments, ParetoMomentsAndDivergence) {
    const auto m = levy_moments(JumpLaw::symmetric_pareto(1.0, 3.5, 1.0));
    EXPECT_NEAR(m.nu2, 3.5 / 1.5, 1e-6);
    EXPECT_NEAR(m.nu3, 3.5 / 0.5, 1e-5);
    try {
        levy_moments(JumpLaw::symmetric_pareto(1.0, 2.5, 1.0));
        FAIL() << "expected InfiniteMomentError";
    } catch (const InfiniteMomentError& e) {
        EXPECT_NE(std::string(e.what()).find("nu3"), std::string::npos);
    }
    EXPECT_THROW(levy_moments(JumpLaw::symmetric_pareto(1.0, 1.5, 1.0)), InfiniteMomentError);
}

TEST(JumpLaw, ParetoExponentialMomentDiverges) {
    const auto law = JumpLaw::symmetric_pareto(1.0, 3.5, 1.0);
    const auto e = law.radial_moment([](double r) { return r >= 1.0 ? std::exp(r) : 0.0; });
    EXPECT_FALSE(e.finite());
}

TEST(JumpLaw, SamplersMatchDeclaredLaws) {
    Rng rng(5);
    std::vector<double> z(1);
    const auto tp = JumpLaw::two_point(1.0, 2.0);
    int plus = 0;
    for (int i = 0; i < 10000; ++i) {
        tp.sample_mark(rng, z);
        ASSERT_EQ(std::abs(z[0]), 2.0);
        plus += z[0] > 0;
    }
    EXPECT_NEAR(plus / 10000.0, 0.5, 0.02);
    const auto pa = JumpLaw::symmetric_pareto(1.0, 3.5, 1.0);
    for (int i = 0; i < 1000; ++i) {
        pa.sample_mark(rng, z);
        ASSERT_GE(std::abs(z[0]), 1.0);
    }
}
