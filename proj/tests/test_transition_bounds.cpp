#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace nndm;
using testutil::box;
using testutil::vec;

namespace {

struct HullInstance {
    Polytope hull;
    KernelTarget target;
};

HullInstance random_instance(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-2.0, 2.0), w(0.1, 2.0);
    std::uniform_int_distribution<int> count(3, 8);
    HullInstance inst;
    const int k = count(rng);
    for (int i = 0; i < k; ++i)
        inst.hull.vertices.push_back(vec({u(rng), u(rng)}));
    const Vector lo = vec({u(rng), u(rng)});
    inst.target = KernelTarget(lo, lo + vec({w(rng), w(rng)}));
    return inst;
}

std::pair<double, double> dense_extremes(const HullInstance& inst) {
    double lo = 1.0, hi = 0.0;
    for (const auto& p : oracle::dense_hull_samples(inst.hull.vertices)) {
        const double g = kernel_g(p, inst.target);
        lo = std::min(lo, g);
        hi = std::max(hi, g);
    }
    return {lo, hi};
}

} // namespace

TEST(HullBounds, PointHull) {
    const KernelTarget t(vec({-1.0, 0.0}), vec({1.0, 2.0}));
    const Polytope p{{vec({0.3, 0.4})}};
    EXPECT_EQ(min_over_hull(p, t), kernel_g(vec({0.3, 0.4}), t));
    EXPECT_EQ(max_over_hull(p, t), kernel_g(vec({0.3, 0.4}), t));
}

TEST(HullBounds, OneDimensionalMinimumAtFarEndpoint) {
    const KernelTarget t(vec({-1.0}), vec({1.0}));
    const Polytope p{{vec({0.0}), vec({2.0})}};
    const double g2 = oracle::gaussian_interval(2.0, -1.0, 1.0);
    EXPECT_NEAR(min_over_hull(p, t), g2, 1e-12);
    EXPECT_NEAR(g2, 0.1573053, 1e-7);
}

TEST(HullBounds, OneDimensionalMaximumAtTargetCenter) {
    const KernelTarget t(vec({-1.0}), vec({1.0}));
    const Polytope p{{vec({-3.0}), vec({3.0})}};
    EXPECT_NEAR(max_over_hull(p, t), 0.6826894921370859, 1e-9);
}

TEST(HullBounds, VertexMinimumEqualsDenseMinimum) {
    std::mt19937_64 rng(101);
    for (int i = 0; i < 40; ++i) {
        const auto inst = random_instance(rng);
        EXPECT_NEAR(min_over_hull(inst.hull, inst.target), dense_extremes(inst).first, 1e-6);
    }
}

TEST(HullBounds, MaximumBetweenDenseAndRectBound) {
    std::mt19937_64 rng(202);
    for (int i = 0; i < 40; ++i) {
        const auto inst = random_instance(rng);
        const double m = max_over_hull(inst.hull, inst.target);
        const double rect = kernel_g(rect_extreme_points(rect_hull(inst.hull), inst.target).z_max, inst.target);
        EXPECT_GE(m, dense_extremes(inst).second - 1e-6);
        EXPECT_LE(m, rect + 1e-12);
    }
}

TEST(HullBounds, MaximumOnLongThinHullFarFromTarget) {
    // The diagonal segment never gets near the target center, so the rect
    // bound is loose and the hull maximum is strictly smaller.
    const KernelTarget t(vec({1.5, -2.5}), vec({2.5, -1.5}));
    const Polytope p{{vec({-3.0, -3.0}), vec({3.0, 3.0})}};
    const double m = max_over_hull(p, t);
    const double rect = kernel_g(rect_extreme_points(rect_hull(p), t).z_max, t);
    double dense = 0.0;
    for (int k = 0; k <= 10000; ++k) {
        const double s = -3.0 + 6.0 * k / 10000.0;
        dense = std::max(dense, kernel_g(vec({s, s}), t));
    }
    EXPECT_GE(m, dense - 1e-6);
    EXPECT_LT(m, rect - 1e-3);
}

TEST(RectExtremePoints, CenterInsideHull) {
    const auto z = rect_extreme_points(box({0, 0}, {2, 2}), KernelTarget(vec({0.5, 0.5}), vec({1.5, 1.5})));
    EXPECT_EQ(z.z_max, vec({1.0, 1.0}));
}

TEST(RectExtremePoints, CenterOutsideHull) {
    const auto z = rect_extreme_points(box({0}, {2}), KernelTarget(vec({2.5}), vec({3.5})));
    EXPECT_EQ(z.z_max(0), 2.0);
    EXPECT_EQ(z.z_min(0), 0.0);
}

TEST(RectExtremePoints, DominatesExactHullBounds) {
    std::mt19937_64 rng(303);
    for (int i = 0; i < 60; ++i) {
        const auto inst = random_instance(rng);
        const auto z = rect_extreme_points(rect_hull(inst.hull), inst.target);
        EXPECT_GE(kernel_g(z.z_max, inst.target), max_over_hull(inst.hull, inst.target) - 1e-12);
        EXPECT_LE(kernel_g(z.z_min, inst.target), min_over_hull(inst.hull, inst.target) + 1e-12);
    }
}

TEST(Grouping, BelowOverlapAbove) {
    const std::vector<HyperRect> cells{box({0}, {1}), box({1}, {2}), box({2}, {3})};
    const auto groups = group_regions(cells, box({1.2}, {1.8}));
    ASSERT_EQ(groups.size(), 3u);
    for (const auto& g : groups)
        EXPECT_EQ(g.members.size(), 1u);
}

TEST(Grouping, BelowIntervalsMerge) {
    const std::vector<HyperRect> cells{box({0}, {1}), box({1}, {2}), box({2}, {3}), box({3}, {4})};
    const auto groups = group_regions(cells, box({2.5}, {3.5}));
    ASSERT_EQ(groups.size(), 3u);
    EXPECT_EQ(groups[0].members, (std::vector<std::size_t>{0, 1}));
    EXPECT_FALSE(groups[0].overlaps_hull);
    EXPECT_EQ(groups[1].members, (std::vector<std::size_t>{2}));
    EXPECT_TRUE(groups[1].overlaps_hull);
    EXPECT_EQ(groups[2].members, (std::vector<std::size_t>{3}));
    EXPECT_TRUE(groups[2].overlaps_hull);
}

TEST(Grouping, MembersShareExtremePoints) {
    const RegionGrid g = build_grid(box({-3, -3}, {3, 3}), mahalanobis(Matrix::Identity(2, 2)), {9, 7}, {});
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-4.0, 4.0), w(0.0, 2.5);
    for (int trial = 0; trial < 50; ++trial) {
        const Vector lo = vec({u(rng), u(rng)});
        const HyperRect hull(lo, lo + vec({w(rng), w(rng)}));
        const auto groups = group_regions(g.cells(), hull);
        std::vector<int> seen(g.num_cells(), 0);
        for (const auto& grp : groups) {
            const auto ref = rect_extreme_points(hull, KernelTarget(g.cell(grp.members.front())));
            for (std::size_t m : grp.members) {
                ++seen[m];
                const auto z = rect_extreme_points(hull, KernelTarget(g.cell(m)));
                EXPECT_EQ(z.z_min, ref.z_min);
                EXPECT_EQ(z.z_max, ref.z_max);
                EXPECT_EQ(grp.overlaps_hull, g.cell(m).intersects(hull));
            }
        }
        for (int s : seen)
            EXPECT_EQ(s, 1);
    }
}

TEST(Rows, IdentityDynamicsSingleCell) {
    const auto nd = testutil::identity_dynamics(2);
    const RegionGrid g = build_grid(box({-10, -10}, {10, 10}), mahalanobis(Matrix::Identity(2, 2)), {1, 1}, {});
    const auto post = make_post_image(relax(nd, 0, g.transform(), g.cell(0)), g.cell(0));
    const auto row = compute_row(g, post, 0, 0);
    // From the corner (10, 10) a quarter of the mass stays; from the center all of it.
    const double corner = std::pow(oracle::gaussian_interval(10.0, -10.0, 10.0), 2);
    EXPECT_NEAR(row.lower(0), corner, 1e-12);
    EXPECT_NEAR(row.upper(0), 1.0, 1e-12);
    EXPECT_NEAR(row.lower(1), 1.0 - 1.0, 1e-12);
    EXPECT_NEAR(row.upper(1), 1.0 - corner, 1e-12);
    row.validate();
}

TEST(Rows, IdentityDynamicsCenteredStaysWithHighProbability) {
    // Point-like cell at the center of a wide domain.
    const auto nd = testutil::identity_dynamics(2);
    const RegionGrid g = build_grid(box({-10, -10}, {10, 10}), mahalanobis(Matrix::Identity(2, 2)), {1, 1}, {});
    const HyperRect tiny = box({-1e-3, -1e-3}, {1e-3, 1e-3});
    const auto post = make_post_image(relax(nd, 0, g.transform(), tiny), tiny);
    const auto row = compute_row(g, post, 0, 0);
    EXPECT_GE(row.lower(0), 0.99);
    EXPECT_LE(row.upper(1), 0.01);
}

TEST(Rows, FeasibleAndGroupedMatchesNaive) {
    const auto nd = preset_networks("fixture2d", 3);
    const RegionGrid g = build_grid(box({-2, -2}, {2, 2}), mahalanobis(0.2 * Matrix::Identity(2, 2)), {6, 6},
                                    {{"D", box({1, 1}, {2, 2})}});
    for (std::size_t q = 0; q < g.num_cells(); ++q)
        for (std::size_t a = 0; a < nd.num_actions(); ++a) {
            const auto post = make_post_image(relax(nd, a, g.transform(), g.cell(q)), g.cell(q));
            const auto fast = compute_row(g, post, q, a);
            const auto naive = compute_row_naive(g, post, q, a);
            ASSERT_EQ(fast, naive);
            EXPECT_LE(fast.sum_lower(), 1.0 + 1e-9);
            EXPECT_GE(fast.sum_upper(), 1.0);
            for (const auto& e : fast.entries)
                EXPECT_LE(e.lower, e.upper);
        }
}

TEST(Rows, PointTransitionProbabilitiesInsideBounds) {
    const auto nd = preset_networks("fixture2d", 3);
    const RegionGrid g = build_grid(box({-2, -2}, {2, 2}), mahalanobis(0.2 * Matrix::Identity(2, 2)), {8, 8}, {});
    std::mt19937_64 rng(12);
    for (std::size_t q : {0u, 27u, 36u, 63u})
        for (std::size_t a = 0; a < nd.num_actions(); ++a) {
            const auto post = make_post_image(relax(nd, a, g.transform(), g.cell(q)), g.cell(q));
            const auto row = compute_row(g, post, q, a);
            for (int i = 0; i < 200; ++i) {
                const Vector z = testutil::uniform_in(g.cell(q), rng);
                const Vector y = g.transform().forward(nd.evaluate(a, g.transform().backward(z)));
                double in_domain = 0.0;
                for (std::size_t t = 0; t < g.num_cells(); ++t) {
                    const double p = kernel_g(y, KernelTarget(g.cell(t)));
                    in_domain += p;
                    const auto* e = row.find(t);
                    if (!e) {
                        EXPECT_LT(p, 1e-12);
                        continue;
                    }
                    EXPECT_GE(p, e->lower - 1e-12);
                    EXPECT_LE(p, e->upper + 1e-12);
                }
                const double out = 1.0 - in_domain;
                EXPECT_GE(out, row.lower(g.unsafe_id()) - 1e-9);
                EXPECT_LE(out, row.upper(g.unsafe_id()) + row.residual + 1e-9);
            }
        }
}

TEST(Rows, MonteCarloFrequenciesInsideBounds) {
    const auto nd = preset_networks("fixture2d", 3);
    const Matrix cov = 0.2 * Matrix::Identity(2, 2);
    const RegionGrid g = build_grid(box({-2, -2}, {2, 2}), mahalanobis(cov), {6, 6}, {});
    const GaussianNoise noise(cov);
    std::mt19937_64 rng(31);
    const std::size_t q = 14, a = 2;
    const auto row = compute_row(g, make_post_image(relax(nd, a, g.transform(), g.cell(q)), g.cell(q)), q, a);
    for (int sample = 0; sample < 5; ++sample) {
        const Vector x = g.transform().backward(testutil::uniform_in(g.cell(q), rng));
        const Vector fx = nd.evaluate(a, x);
        const int n = 100000;
        std::vector<int> hits(g.num_states(), 0);
        for (int i = 0; i < n; ++i) {
            const auto t = g.locate(fx + noise.sample(rng));
            ++hits[t ? *t : g.unsafe_id()];
        }
        for (std::size_t t = 0; t < g.num_states(); ++t) {
            const double upper = row.upper(t);
            if (upper <= 1e-3)
                continue;
            const double p = static_cast<double>(hits[t]) / n;
            const double se = std::sqrt(std::max(p * (1.0 - p), 1e-6) / n);
            EXPECT_GE(p, row.lower(t) - 4.0 * se);
            EXPECT_LE(p, upper + 4.0 * se);
        }
    }
}

TEST(Rows, FinalizeRepairsRoundingDeficit) {
    RawRow raw{{{0, 0.2, 0.5}, {1, 0.0, 0.5 - 5e-10}}, 0};
    const auto row = finalize_row(0, 0, raw, 1);
    EXPECT_DOUBLE_EQ(row.sum_upper(), 1.0);
    RawRow bad{{{0, 0.2, 0.5}, {1, 0.0, 0.4}}, 0};
    EXPECT_THROW(finalize_row(0, 0, bad, 1), Error);
}

TEST(Rows, PrunedTargetsFormResidual) {
    RawRow raw{{{0, 0.4, 1.0}}, 3};
    const auto row = finalize_row(0, 0, raw, 5);
    EXPECT_DOUBLE_EQ(row.residual, 3e-12);
    EXPECT_EQ(row.entries.size(), 1u);
}
