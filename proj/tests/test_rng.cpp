#include <gtest/gtest.h>

#include <cmath>

#include "ssdg/rng.hpp"

using ssdg::Rng;

TEST(Rng, DeterministicAcrossInstances) {
    Rng a(42), b(42);
    for (int i = 0; i < 64; ++i) {
        EXPECT_EQ(a.next_u64(), b.next_u64());
    }
    Rng c(42), d(42);
    for (int i = 0; i < 64; ++i) {
        EXPECT_EQ(c.normal(), d.normal());
        EXPECT_EQ(c.gamma(0.1), d.gamma(0.1));
        EXPECT_EQ(c.beta(0.1, 0.1), d.beta(0.1, 0.1));
    }
}

TEST(Rng, DerivedSeedsDiffer) {
    const uint64_t base = 1234;
    EXPECT_NE(ssdg::derive_seed(base, 0), ssdg::derive_seed(base, 1));
    EXPECT_NE(ssdg::derive_seed(base, 1), ssdg::derive_seed(base, 2));
    EXPECT_NE(ssdg::derive_seed(base, 0), ssdg::derive_seed(base + 1, 0));
}

TEST(Rng, Uniform01Range) {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform01();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(Rng, NormalMoments) {
    Rng rng(11);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double v = rng.normal();
        s += v;
        s2 += v * v;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_NEAR(var, 1.0, 0.02);
}

TEST(Rng, GammaMoments) {
    Rng rng(13);
    const int n = 200000;
    for (double shape : {0.1, 0.5, 2.0}) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            double v = rng.gamma(shape);
            ASSERT_GT(v, 0.0);
            s += v;
        }
        EXPECT_NEAR(s / n, shape, 0.02) << "shape=" << shape;
    }
}

TEST(Rng, BetaTenthTenthIsBimodal) {
    Rng rng(17);
    const int n = 100000;
    double s = 0.0;
    int extreme = 0;
    for (int i = 0; i < n; ++i) {
        double v = rng.beta(0.1, 0.1);
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        s += v;
        if (v < 0.05 || v > 0.95) ++extreme;
    }
    EXPECT_NEAR(s / n, 0.5, 0.01);
    // most of the mass of Beta(0.1, 0.1) sits at the endpoints
    EXPECT_GT(static_cast<double>(extreme) / n, 0.6);
}
