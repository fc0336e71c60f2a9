#include <gtest/gtest.h>

#include <random>

#include "jumpdrift/kernel_sum.hpp"

using namespace jumpdrift;

namespace {

struct Cloud {
    std::vector<double> pts, w;
};

Cloud random_cloud(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 0.8);
    Cloud c;
    for (std::size_t i = 0; i < n * d; ++i) c.pts.push_back(nd(rng));
    for (std::size_t i = 0; i < n; ++i) c.w.push_back(nd(rng) * 0.01);
    return c;
}

}  // namespace

TEST(SampleSet, FastPathMatchesDirectForProductAndConvolvedKernels) {
    const auto c = random_cloud(20000, 1, 3);
    const SampleSet s(1, c.pts, c.w);
    const auto grid = EvaluationGrid::standard(Box::cube(1, -1, 1));
    for (int order : {1, 2, 3}) {
        const auto k = make_kernel(order);
        for (double h : {0.5, 0.125, 1.0 / 64}) {
            for (const auto& K : {AxisKernels::product(k, Bandwidth({h})), AxisKernels::convolved(k, Bandwidth({h}), Bandwidth({0.25}))}) {
                const auto fast = s.evaluate(K, grid);
                double scale = 0.0;
                for (std::size_t p = 0; p < grid.size(); ++p) scale = std::max(scale, std::abs(s.evaluate_direct(K, grid.point(p))));
                for (std::size_t p = 0; p < grid.size(); ++p)
                    ASSERT_NEAR(fast[p], s.evaluate_direct(K, grid.point(p)), 1e-10 * std::max(scale, 1.0)) << order << " " << h;
            }
        }
    }
}

TEST(SampleSet, WindowedEvaluationMatchesDirectIn2d) {
    const auto c = random_cloud(5000, 2, 4);
    const SampleSet s(2, c.pts, c.w);
    const auto k = make_kernel(1);
    const auto K = AxisKernels::product(k, Bandwidth({0.3, 0.1}));
    const auto grid = EvaluationGrid::standard(Box::cube(2, -1, 1), 11);
    const auto v = s.evaluate(K, grid);
    for (std::size_t p = 0; p < grid.size(); ++p) EXPECT_NEAR(v[p], s.evaluate_direct(K, grid.point(p)), 1e-12);
}

TEST(SampleSet, WithWeightsKeepsOriginalOrder) {
    const auto c = random_cloud(1000, 1, 5);
    const SampleSet s(1, c.pts, c.w);
    std::vector<double> ones(c.w.size(), 1.0);
    const SampleSet u = s.with_weights(ones);
    const SampleSet fresh(1, c.pts, ones);
    const auto K = AxisKernels::product(make_kernel(1), Bandwidth({0.2}));
    const double x[1] = {0.1};
    EXPECT_EQ(u.evaluate_at(K, x), fresh.evaluate_at(K, x));
}

TEST(SampleSet, ReversedGridGivesReversedValues) {
    const auto c = random_cloud(2000, 1, 6);
    const SampleSet s(1, c.pts, c.w);
    auto grid = EvaluationGrid::standard(Box::cube(1, -1, 1), 11);
    std::reverse(grid.points.begin(), grid.points.end());
    const auto K = AxisKernels::product(make_kernel(1), Bandwidth({0.2}));
    const auto v = s.evaluate(K, grid);
    for (std::size_t p = 0; p < grid.size(); ++p) EXPECT_NEAR(v[p], s.evaluate_direct(K, grid.point(p)), 1e-13);
    const auto w = s.evaluate(K, EvaluationGrid::standard(Box::cube(1, -1, 1), 11));
    for (std::size_t p = 0; p < grid.size(); ++p) EXPECT_EQ(v[p], w[grid.size() - 1 - p]);
}

TEST(SampleSet, EmptyAndTinySampleSets) {
    const SampleSet empty(1, std::vector<double>{}, std::vector<double>{});
    const auto K = AxisKernels::product(make_kernel(1), Bandwidth({0.5}));
    const auto grid = EvaluationGrid::standard(Box::cube(1, -1, 1), 5);
    for (double v : empty.evaluate(K, grid)) EXPECT_EQ(v, 0.0);
    const std::vector<double> pt{0.1}, w{2.0};
    const SampleSet one(1, pt, w);
    const auto v = one.evaluate(K, grid);
    for (std::size_t p = 0; p < grid.size(); ++p) EXPECT_NEAR(v[p], one.evaluate_direct(K, grid.point(p)), 1e-15);
}

TEST(EvaluationGrid, LatticeShapeAndEndpoints) {
    const auto g = EvaluationGrid::standard(Box::cube(1, -1, 1));
    EXPECT_EQ(g.size(), 201u);
    EXPECT_EQ(g.points.front(), -1.0);
    EXPECT_EQ(g.points.back(), 1.0);
    EXPECT_NEAR(g.points[100], 0.0, 1e-15);
    EXPECT_EQ(EvaluationGrid::standard(Box::cube(2, -1, 1)).size(), 201u * 201u);
    EXPECT_EQ(EvaluationGrid::standard(Box::cube(3, -1, 1)).size(), 41u * 41u * 41u);
    EXPECT_TRUE(g.contains_all_in_domain());
}


TEST(SampleSet, FastPathMatchesDirectOnUnsortedPoints) {
    const auto c = random_cloud(30000, 1, 7);
    const SampleSet s(1, c.pts, c.w);
    std::vector<double> xs;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int i = 0; i < 300; ++i) xs.push_back(u(rng));
    for (int order : {1, 2}) {
        for (double h : {0.9, 0.3, 1.0 / 32, 1.0 / 512}) {
            const auto K = AxisKernels::product(make_kernel(order), Bandwidth({h}));
            const auto v = s.evaluate_1d(K.axis(0), xs);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const double ref = s.evaluate_direct(K, std::span<const double>(&xs[i], 1));
                ASSERT_NEAR(v[i], ref, 1e-11 * std::max(1.0, std::abs(ref))) << order << " " << h << " " << xs[i];
            }
        }
    }
    const auto K = AxisKernels::convolved(make_kernel(1), Bandwidth({0.5}), Bandwidth({1.0 / 64}));
    const auto v = s.evaluate_1d(K.axis(0), xs);
    for (std::size_t i = 0; i < xs.size(); ++i)
        ASSERT_NEAR(v[i], s.evaluate_direct(K, std::span<const double>(&xs[i], 1)), 1e-11);
}
