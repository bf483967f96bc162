#include <gtest/gtest.h>

#include "se2net/se2net.hpp"

#include <cmath>

using namespace se2net;

namespace {

[[maybe_unused]] Map random_map(int h, int w, Rng& rng) {
    Map m(h, w);
    for (double& v : m.values()) v = rng.uniform();
    return m;
}

// Quadruple loop over every (x, y) pixel pair with the kernel written out inline.
double brute_force_loss(const Map& p, const Map& g, double sigma, int rho) {
    const double pi = 3.14159265358979323846;
    double total = 0;
    for (int py = 0; py < p.height(); ++py)
        for (int px = 0; px < p.width(); ++px)
            for (int gy = 0; gy < g.height(); ++gy)
                for (int gx = 0; gx < g.width(); ++gx) {
                    const double d2 = double(py - gy) * (py - gy) + double(px - gx) * (px - gx);
                    if (std::sqrt(d2) > rho) continue;
                    const double k = std::exp(-d2 / (2 * sigma * sigma)) / (std::sqrt(2 * pi) * sigma);
                    total += k * (p(py, px) - g(gy, gx)) * (p(py, px) - g(gy, gx));
                }
    return total;
}

}  // namespace

TEST(KernelWeights, CenterValue) {
    const Map k = kernel_weights({0.01, 3});
    EXPECT_EQ(k.height(), 7);
    EXPECT_NEAR(k(3, 3), 39.894228040143268, 1e-12);
}

TEST(KernelWeights, SmallSigmaUnderflowsOffCenter) {
    const Map k = kernel_weights({0.01, 3});
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x)
            if (y != 3 || x != 3) EXPECT_EQ(k(y, x), 0.0);
    EXPECT_EQ(WeightedL2({0.01, 3}).active_taps(), 1u);
}

TEST(KernelWeights, TruncatedOutsideRadiusAndSymmetric) {
    const KernelSpec spec{1.0, 3};
    const Map k = kernel_weights(spec);
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx) {
            const double v = k(dy + 3, dx + 3);
            if (dy * dy + dx * dx > 9) EXPECT_EQ(v, 0.0);
            else EXPECT_GT(v, 0.0);
            EXPECT_EQ(v, k(-dy + 3, -dx + 3));
            EXPECT_EQ(v, k(dx + 3, dy + 3));
        }
    EXPECT_NEAR(k(3, 4), std::exp(-0.5) / std::sqrt(2 * 3.14159265358979323846), 1e-15);
    EXPECT_EQ(WeightedL2(spec).active_taps(), 29u);
}

TEST(KernelWeights, NonPositiveSigmaThrows) {
    EXPECT_THROW(kernel_weights({0.0, 3}), ConfigError);
    EXPECT_THROW(kernel_weights({-1.0, 3}), ConfigError);
    EXPECT_THROW(WeightedL2({0.01, -1}), ConfigError);
}

TEST(WeightedL2, SinglePixel) {
    Map p(1, 1, 1, 1.0), g(1, 1);
    EXPECT_NEAR(weighted_l2(p, g, {0.01, 3}), 39.894228040143268, 1e-12);
}

TEST(WeightedL2, ZeroForEqualConstants) {
    Map p(6, 5, 1, 0.3), g(6, 5, 1, 0.3);
    for (double sigma : {0.01, 1.0}) {
        EXPECT_EQ(weighted_l2(p, g, {sigma, 3}), 0.0);
        const Map grad = gradient(p, g, {sigma, 3});
        for (double v : grad.values()) EXPECT_EQ(v, 0.0);
    }
}

TEST(WeightedL2, ShapeMismatchThrows) { EXPECT_THROW(weighted_l2(Map(3, 3), Map(3, 4), {}), ShapeError); }

TEST(WeightedL2, MatchesBruteForceOracle) {
    Rng rng(123);
    for (int trial = 0; trial < 100; ++trial) {
        const int h = rng.integer(1, 16), w = rng.integer(1, 16);
        const double sigma = trial % 2 ? 1.0 : rng.uniform(0.3, 3.0);
        const int rho = rng.integer(0, 4);
        const Map p = random_map(h, w, rng), g = random_map(h, w, rng);
        const double fast = weighted_l2(p, g, {sigma, rho}), slow = brute_force_loss(p, g, sigma, rho);
        EXPECT_NEAR(fast, slow, 1e-9 * std::abs(slow)) << h << "x" << w << " sigma " << sigma << " rho " << rho;
        EXPECT_GE(fast, 0.0);
    }
}

TEST(WeightedL2, GradientMatchesCentralDifferences) {
    Rng rng(7);
    for (double sigma : {0.01, 1.0}) {
        const KernelSpec spec{sigma, 3};
        for (int trial = 0; trial < 20; ++trial) {
            Map p = random_map(8, 8, rng);
            const Map g = random_map(8, 8, rng);
            const Map grad = gradient(p, g, spec);
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double keep = p.data()[i], h = 1e-4;
                p.data()[i] = keep + h;
                const double up = weighted_l2(p, g, spec);
                p.data()[i] = keep - h;
                const double down = weighted_l2(p, g, spec);
                p.data()[i] = keep;
                const double num = (up - down) / (2 * h);
                EXPECT_LE(std::abs(grad.data()[i] - num), std::max(1e-6, 1e-4 * std::abs(num)));
            }
        }
    }
}

TEST(WeightedL2, BorderPixelsUseClippedNeighbourhood) {
    // unit gt and zero prediction: gradient at x is -2 * (sum of kernel weights inside the image)
    const KernelSpec spec{1.0, 3};
    const Map p(9, 9), g(9, 9, 1, 1.0);
    const Map grad = gradient(p, g, spec);
    const Map k = kernel_weights(spec);
    auto clipped_sum = [&](int y, int x) {
        double s = 0;
        for (int dy = -3; dy <= 3; ++dy)
            for (int dx = -3; dx <= 3; ++dx)
                if (p.contains(y + dy, x + dx)) s += k(dy + 3, dx + 3);
        return s;
    };
    EXPECT_NEAR(grad(0, 0), -2 * clipped_sum(0, 0), 1e-12);
    EXPECT_NEAR(grad(4, 4), -2 * clipped_sum(4, 4), 1e-12);
    EXPECT_LT(std::abs(grad(0, 0)), std::abs(grad(4, 4)));
}

namespace {

SampleMaps constant_maps(int stages, double v, bool edges = true) {
    SampleMaps s;
    for (int t = 0; t <= stages; ++t) {
        if (edges) s.edge.push_back(Map(4, 4, 1, v));
        s.region.push_back(Map(4, 4, 1, v));
    }
    return s;
}

}  // namespace

TEST(TotalObjective, PerfectPredictionIsZero) {
    const Map gt(4, 4, 1, 1.0);
    const std::vector<SampleMaps> p{constant_maps(3, 1.0)};
    const std::vector<LabelPair> l{{&gt, &gt}};
    EXPECT_EQ(total_objective(p, l, {}, 3).total, 0.0);
}

TEST(TotalObjective, SingleStageFormula) {
    Rng rng(5);
    const Map ge = random_map(4, 4, rng), gr = random_map(4, 4, rng);
    SampleMaps s;
    for (int t = 0; t <= 1; ++t) {
        s.edge.push_back(random_map(4, 4, rng));
        s.region.push_back(random_map(4, 4, rng));
    }
    const KernelSpec spec{1.0, 2};
    const std::vector<SampleMaps> p{s};
    const std::vector<LabelPair> l{{&ge, &gr}};
    const LossReport r = total_objective(p, l, spec, 1);
    const double e0 = weighted_l2(s.edge[0], ge, spec), r0 = weighted_l2(s.region[0], gr, spec);
    const double e1 = weighted_l2(s.edge[1], ge, spec), r1 = weighted_l2(s.region[1], gr, spec);
    EXPECT_DOUBLE_EQ(r.total, (e0 + r0 + e1 + r1) / 2);
    EXPECT_EQ(r.total, r.recompute());
    EXPECT_EQ(r.edge[0][1], e1);
    EXPECT_EQ(r.region[0][0], r0);
}

TEST(TotalObjective, DuplicatingTheBatchLeavesJUnchanged) {
    Rng rng(6);
    std::vector<Map> gts;
    for (int i = 0; i < 4; ++i) gts.push_back(random_map(4, 4, rng));
    std::vector<SampleMaps> p;
    for (int i = 0; i < 2; ++i) {
        SampleMaps s;
        for (int t = 0; t <= 2; ++t) {
            s.edge.push_back(random_map(4, 4, rng));
            s.region.push_back(random_map(4, 4, rng));
        }
        p.push_back(s);
    }
    std::vector<LabelPair> l{{&gts[0], &gts[1]}, {&gts[2], &gts[3]}};
    const double j = total_objective(p, l, {1.0, 3}, 2).total;
    std::vector<SampleMaps> p2 = p;
    p2.insert(p2.end(), p.begin(), p.end());
    std::vector<LabelPair> l2 = l;
    l2.insert(l2.end(), l.begin(), l.end());
    EXPECT_NEAR(total_objective(p2, l2, {1.0, 3}, 2).total, j, 1e-12 * j);
}

TEST(TotalObjective, GradientsAreScaledAndEdgeFree) {
    Rng rng(8);
    const Map gt = random_map(4, 4, rng);
    SampleMaps s;
    for (int t = 0; t <= 2; ++t) s.region.push_back(random_map(4, 4, rng));
    std::vector<SampleMaps> grads;
    const std::vector<SampleMaps> p{s};
    const std::vector<LabelPair> l{{nullptr, &gt}};
    const LossReport r = total_objective(p, l, {0.01, 3}, 2, &grads);
    ASSERT_EQ(grads.size(), 1u);
    EXPECT_TRUE(grads[0].edge.empty());
    ASSERT_EQ(grads[0].region.size(), 3u);
    const Map g1 = gradient(s.region[1], gt, {0.01, 3});
    for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(grads[0].region[1].data()[i], g1.data()[i] / 3, 1e-12);
    EXPECT_EQ(r.edge[0][0], 0.0);
}

TEST(TotalObjective, WrongMapCountThrows) {
    const Map gt(4, 4);
    const std::vector<SampleMaps> p{constant_maps(2, 0.5)};
    const std::vector<LabelPair> l{{&gt, &gt}};
    EXPECT_THROW(total_objective(p, l, {}, 3), ShapeError);
}
