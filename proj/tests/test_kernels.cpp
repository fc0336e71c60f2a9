#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <random>

#include "jumpdrift/kernels.hpp"

using namespace jumpdrift;

namespace {

double gk_integrate(const std::function<double(double)>& f, std::vector<double> cuts) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    std::sort(cuts.begin(), cuts.end());
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        if (cuts[i + 1] > cuts[i]) acc += GK::integrate(f, cuts[i], cuts[i + 1], 0, 1e-14);
    return acc;
}

/// Brute-force 1-D convolution of the rescaled kernels, splitting at every kink.
double brute_convolution(const KernelSpec& k, double h, double eta, double x) {
    auto f = [&](double u) { return k(u / h) / h * k((x - u) / eta) / eta; };
    std::vector<double> cuts;
    for (double b : k.shape.breaks()) {
        cuts.push_back(b * h);
        cuts.push_back(x - b * eta);
    }
    const double lo = std::max(-h / 2, x - eta / 2), hi = std::min(h / 2, x + eta / 2);
    if (!(hi > lo)) return 0.0;
    std::vector<double> inside{lo, hi};
    for (double c : cuts)
        if (c > lo && c < hi) inside.push_back(c);
    return gk_integrate(f, inside);
}

}  // namespace

TEST(MakeKernel, TriangleClosedFormValues) {
    const auto k = make_kernel(1);
    EXPECT_NEAR(k.lipschitz_const, 4.0, 1e-12);
    EXPECT_NEAR(k.sup_norm, 2.0, 1e-12);
    EXPECT_NEAR(k.l1_norm, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(k(0.0), 2.0);
    EXPECT_DOUBLE_EQ(k(0.25), 1.0);
    EXPECT_EQ(k(0.5), 0.0);
    EXPECT_EQ(k(-0.5), 0.0);
}

TEST(MakeKernel, MomentsVanishThroughOrder) {
    for (int order = 1; order <= 6; ++order) {
        const auto k = make_kernel(order);
        EXPECT_NEAR(gk_integrate([&](double x) { return k(x); }, {-0.5, 0.0, 0.5}), 1.0, 1e-10) << order;
        for (int i = 1; i <= order; ++i)
            EXPECT_NEAR(gk_integrate([&](double x) { return std::pow(x, i) * k(x); }, {-0.5, 0.0, 0.5}), 0.0, 1e-8)
                << order << " moment " << i;
        ASSERT_EQ(k.moment_residuals.size(), static_cast<std::size_t>(order) + 1);
    }
}

TEST(MakeKernel, SecondOrderKernelSecondMoment) {
    const auto k = make_kernel(2);
    EXPECT_NEAR(gk_integrate([&](double x) { return x * x * k(x); }, {-0.5, 0.5}), 0.0, 1e-8);
}

TEST(MakeKernel, OutsideSupportIsZeroAndSymmetric) {
    for (int order = 1; order <= 4; ++order) {
        const auto k = make_kernel(order);
        EXPECT_EQ(k(0.6), 0.0);
        EXPECT_EQ(k(-0.6), 0.0);
        for (double x : {0.05, 0.17, 0.33, 0.49}) EXPECT_NEAR(k(x), k(-x), 1e-14);
        EXPECT_NEAR(k(0.5 - 1e-12), 0.0, 1e-9) << "order >= 2 kernels are continuous at the support edge";
    }
}

TEST(MakeKernel, RejectsOrderZero) { EXPECT_THROW(make_kernel(0), std::invalid_argument); }

TEST(Bandwidth, ValidatesOpenUnitCube) {
    EXPECT_THROW(Bandwidth({1.0}), std::invalid_argument);
    EXPECT_THROW(Bandwidth({0.0}), std::invalid_argument);
    EXPECT_THROW(Bandwidth(std::vector<double>{}), std::invalid_argument);
    const Bandwidth h({0.5, 0.25});
    EXPECT_DOUBLE_EQ(h.volume(), 0.125);
    EXPECT_DOUBLE_EQ(h.inv_sum(), 6.0);
    EXPECT_DOUBLE_EQ(h.log_inv_sum(), std::log(6.0));
}

TEST(EvalProduct, Examples) {
    const auto k = make_kernel(1);
    const std::vector<double> zero1{0.0}, zero2{0.0, 0.0};
    EXPECT_DOUBLE_EQ(eval_product(k, Bandwidth({0.5}), zero1), 4.0);
    EXPECT_NEAR(eval_product(k, Bandwidth({0.1, 0.2}), zero2), 200.0, 1e-10);
    const std::vector<double> edge{0.25, 0.0};
    EXPECT_EQ(eval_product(k, Bandwidth({0.5, 0.5}), edge), 0.0);
    const std::vector<double> out{0.3, 0.0};
    EXPECT_EQ(eval_product(k, Bandwidth({0.5, 0.5}), out), 0.0);
}

TEST(EvalProduct, Symmetric) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    const auto k = make_kernel(2);
    const Bandwidth h({0.4, 0.3});
    for (int r = 0; r < 100; ++r) {
        const std::vector<double> x{u(rng), u(rng)}, mx{-x[0], -x[1]};
        EXPECT_DOUBLE_EQ(eval_product(k, h, x), eval_product(k, h, mx));
    }
}

TEST(EvalConvolved, SupportAndSelfConvolutionAtZero) {
    const auto k = make_kernel(1);
    const Bandwidth h({0.2}), eta({0.1});
    const std::vector<double> edge{0.5 * (0.2 + 0.1)}, beyond{0.2};
    EXPECT_EQ(eval_convolved(k, h, eta, edge), 0.0);
    EXPECT_EQ(eval_convolved(k, h, eta, beyond), 0.0);
    for (double hv : {0.1, 0.25, 0.5}) {
        const std::vector<double> zero{0.0};
        const double oracle = brute_convolution(k, hv, hv, 0.0);
        EXPECT_NEAR(oracle * hv, 4.0 / 3.0, 1e-12);
        EXPECT_NEAR(eval_convolved(k, Bandwidth({hv}), Bandwidth({hv}), zero), 4.0 / (3.0 * hv), 1e-10);
    }
}

TEST(EvalConvolved, UnitMass) {
    for (int order : {1, 2, 3}) {
        const auto k = make_kernel(order);
        const auto c = AxisKernels::convolved(k, Bandwidth({0.3, 0.07}), Bandwidth({0.11, 0.5}));
        double mass = 1.0;
        for (std::size_t i = 0; i < c.dim(); ++i) mass *= c.axis(i).moment(0);
        EXPECT_NEAR(mass, 1.0, 1e-8);
    }
}

TEST(EvalConvolved, AgreesWithBruteForceOn200Cases) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> hu(0.02, 0.9), t(-1.0, 1.0);
    for (int order : {1, 2, 3}) {
        const auto k = make_kernel(order);
        for (int r = 0; r < 200; ++r) {
            const double h = hu(rng), eta = hu(rng);
            const double x = t(rng) * 0.5 * (h + eta);
            const std::vector<double> xv{x};
            const double got = eval_convolved(k, Bandwidth({h}), Bandwidth({eta}), xv);
            const double ref = brute_convolution(k, h, eta, x);
            EXPECT_NEAR(got, ref, 1e-6 * std::max(std::abs(ref), 1e-3 / std::min(h, eta))) << order << " " << h << " " << eta << " " << x;
        }
    }
}

TEST(GridHT, MembershipExamples) {
    // log(1+T) = 5 gives a cap of 0.2
    const double T = std::expm1(5.0);
    const std::vector<double> h025{0.25}, h1{1.0};
    EXPECT_FALSE(in_HT(T, h025));
    EXPECT_FALSE(in_HT(T, h1));
    EXPECT_THROW(grid_scriptHT(1e6, 1, CandidateGridRule{2.0, 4.0, true, 1.0}).at(5), std::out_of_range);
}

TEST(GridScriptHT, EnumerationAtOneMillion) {
    const double T = 1e6;
    std::vector<double> expect;
    for (int k = 1; k < 60; ++k) {
        const double h = std::pow(2.0, -k);
        if (h < 1.0 / std::log1p(T) && std::pow(2.0, k) * std::pow(std::log(std::pow(2.0, k)), 4) <= 1e3) expect.push_back(h);
    }
    const auto got = grid_scriptHT(T, 1);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_DOUBLE_EQ(got[i][0], expect[i]);
}

TEST(GridScriptHT, EmptyAtDeskScaleHorizon) {
    EXPECT_THROW(grid_scriptHT(8000, 1), EmptyGridError);
    EXPECT_NO_THROW(grid_scriptHT(8000, 1, CandidateGridRule::relaxed()));
}

TEST(GridScriptHT, NestedInHTAndMonotoneInT) {
    auto grid_or_empty = [](double T, std::size_t d) {
        try {
            return grid_scriptHT(T, d);
        } catch (const EmptyGridError&) {
            return std::vector<Bandwidth>{};
        }
    };
    std::size_t seen = 0;
    for (double T : {1e6, 4e6, 1e8, 1e10, 1e12}) {
        for (std::size_t d : {1u, 2u}) {
            const auto grid = grid_or_empty(T, d);
            seen += grid.size();
            const auto member = grid_HT(T, d);
            for (const auto& h : grid) EXPECT_TRUE(member(h));
            const auto bigger = grid_or_empty(4.0 * T, d);
            // the log(1+T) cap shrinks with T, so only members still under the larger cap must survive
            const double cap = 1.0 / std::log1p(4.0 * T);
            for (const auto& h : grid) {
                if (*std::max_element(h.values().begin(), h.values().end()) >= cap) continue;
                EXPECT_NE(std::find(bigger.begin(), bigger.end(), h), bigger.end());
            }
        }
    }
    EXPECT_GT(seen, 10u);
}

TEST(GridScriptHT, RelaxedRuleIsMonotoneInT) {
    const auto rule = CandidateGridRule::relaxed();
    for (double T : {500.0, 2000.0, 8000.0, 32000.0}) {
        const auto grid = grid_scriptHT(T, 2, rule);
        const auto bigger = grid_scriptHT(4.0 * T, 2, rule);
        for (const auto& h : grid) EXPECT_NE(std::find(bigger.begin(), bigger.end(), h), bigger.end());
    }
}

TEST(GridScriptHT, LiteralCapRemovesCoarseBandwidthAsTGrows) {
    const auto small = grid_scriptHT(4e6, 1);
    const auto large = grid_scriptHT(1e8, 1);
    const Bandwidth sixteenth({1.0 / 16});
    EXPECT_NE(std::find(small.begin(), small.end(), sixteenth), small.end());
    EXPECT_EQ(std::find(large.begin(), large.end(), sixteenth), large.end());
}
