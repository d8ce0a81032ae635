#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace nndm;
using testutil::vec;

TEST(Kernel, StandardIntervalMass) {
    const KernelTarget t(vec({-1.0}), vec({1.0}));
    EXPECT_NEAR(kernel_g(vec({0.0}), t), 0.6826894921370859, 1e-15);
    EXPECT_NEAR(kernel_g(vec({0.0}), t), oracle::gaussian_interval(0.0, -1.0, 1.0), 1e-12);
}

TEST(Kernel, FarTailVanishes) {
    EXPECT_EQ(kernel_g(vec({100.0}), KernelTarget(vec({-1.0}), vec({1.0}))), 0.0);
    EXPECT_EQ(kernel_g(vec({-100.0}), KernelTarget(vec({-1.0}), vec({1.0}))), 0.0);
}

TEST(Kernel, ProductInTwoDimensions) {
    const double p = kernel_g(vec({0.0, 0.0}), KernelTarget(vec({-1.0, -1.0}), vec({1.0, 1.0})));
    EXPECT_NEAR(p, 0.6826894921370859 * 0.6826894921370859, 1e-15);
    EXPECT_NEAR(p, 0.4660649, 1e-7);
}

TEST(Kernel, TailPrecisionKeepsRelativeAccuracy) {
    // Mass of [8, 9] under N(0, 1), far beyond where erf differences cancel.
    const double m = interval_mass(0.0, 8.0, 9.0);
    const double ref = 0.5 * (std::erfc(8.0 / std::sqrt(2.0)) - std::erfc(9.0 / std::sqrt(2.0)));
    EXPECT_NEAR(m / ref, 1.0, 1e-12);
    EXPECT_GT(interval_mass(0.0, 30.0, 31.0), 0.0);
}

TEST(Kernel, MatchesQuadratureOracle) {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-4.0, 4.0), w(0.01, 3.0);
    std::uniform_int_distribution<int> dims(1, 3);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const int n = dims(rng);
        Vector z(n), lo(n), hi(n);
        for (int l = 0; l < n; ++l) {
            z(l) = u(rng);
            lo(l) = u(rng);
            hi(l) = lo(l) + w(rng);
        }
        worst = std::max(worst, std::abs(kernel_g(z, KernelTarget(lo, hi)) - oracle::gaussian_box(z, lo, hi)));
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(Kernel, LogKernelAgreesWithKernelAndGradient) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 200; ++i) {
        const KernelTarget t(vec({-0.5, 0.2}), vec({0.7, 1.5}));
        const Vector z = vec({u(rng), u(rng)});
        Vector grad;
        const double lg = log_kernel_g(z, t, &grad);
        EXPECT_NEAR(lg, std::log(kernel_g(z, t)), 1e-9 * std::max(1.0, std::abs(lg)));
        for (int l = 0; l < 2; ++l) {
            Vector zp = z, zm = z;
            zp(l) += 1e-6;
            zm(l) -= 1e-6;
            const double fd = (log_kernel_g(zp, t) - log_kernel_g(zm, t)) / 2e-6;
            EXPECT_NEAR(grad(l), fd, 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST(Kernel, LogKernelFiniteBeyondUnderflow) {
    const KernelTarget t(vec({-1.0}), vec({1.0}));
    Vector grad;
    const double lg = log_kernel_g(vec({60.0}), t, &grad);
    EXPECT_TRUE(std::isfinite(lg));
    EXPECT_LT(lg, -1500.0);
    EXPECT_LT(grad(0), -50.0);
    EXPECT_LT(log_kernel_g(vec({60.0}), t), log_kernel_g(vec({59.0}), t));
}
