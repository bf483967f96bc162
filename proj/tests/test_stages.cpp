#include <gtest/gtest.h>

#include "se2net/se2net.hpp"

#include <cmath>

using namespace se2net;

namespace {

constexpr int kLow = 5, kHigh = 4;

FeatureBundle<double> random_bundle(int side, std::uint64_t seed, int n = 1) {
    Rng rng(seed);
    FeatureBundle<double> b{Tensor<double>(n, kLow, side, side), Tensor<double>(n, kHigh, side, side)};
    for (double& v : b.low.values()) v = rng.normal();
    for (double& v : b.high.values()) v = rng.normal();
    return b;
}

SiameseStages<double> make_stages(int stages, bool edge_branch = true, std::uint64_t seed = 3) {
    SiameseStages<double> s(kLow, kHigh, {stages, {6, 5, 4, 3}, edge_branch});
    Rng rng(seed);
    s.init(rng);
    return s;
}

Tensor<double> map_tensor(int side, double v) { return Tensor<double>(1, 1, side, side, v); }

// Chebyshev radius of the set of output pixels that differ.
int changed_radius(const Tensor<double>& a, const Tensor<double>& b, int cy, int cx) {
    int r = -1;
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
            if (a(0, 0, y, x) != b(0, 0, y, x)) r = std::max(r, std::max(std::abs(y - cy), std::abs(x - cx)));
    return r;
}

}  // namespace

TEST(Layout, MatchesTheStageTables) {
    const HeadWidths w;
    const auto first = first_stage_layout(w), later = later_stage_layout(w);
    ASSERT_EQ(first.size(), 4u);
    ASSERT_EQ(later.size(), 5u);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(first[i], (ConvSpec{3, 256, 1}));
    EXPECT_EQ(first[3], (ConvSpec{1, 512, 0}));
    for (int i = 0; i < 4; ++i) EXPECT_EQ(later[i], (ConvSpec{7, 128, 3}));
    EXPECT_EQ(later[4], (ConvSpec{1, 128, 0}));
}

TEST(Stage1, ShapeAndRange) {
    auto s = make_stages(1);
    const auto [e, r] = s.run_stage1(random_bundle(12, 1, 2), Mode::train);
    for (const auto* m : {&e, &r}) {
        EXPECT_EQ(m->batch(), 2);
        EXPECT_EQ(m->channels(), 1);
        EXPECT_EQ(m->height(), 12);
        for (double v : m->values()) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(Stage1, ReceptiveFieldIsThree) {
    auto s = make_stages(1);
    FeatureBundle<double> b = random_bundle(15, 2);
    const auto [e0, r0] = s.run_stage1(b, Mode::eval);
    b.low(0, 2, 7, 7) += 1.0;
    b.high(0, 1, 7, 7) += 1.0;
    const auto [e1, r1] = s.run_stage1(b, Mode::eval);
    EXPECT_EQ(changed_radius(e0, e1, 7, 7), 3);
    EXPECT_EQ(changed_radius(r0, r1, 7, 7), 3);
}

TEST(Stage1, BranchesShareNoParameters) {
    auto s = make_stages(1);
    const FeatureBundle<double> b = random_bundle(10, 3);
    const auto [e0, r0] = s.run_stage1(b, Mode::eval);
    for (auto& blk : s.edge_head(1).blocks())
        for (double& w : blk.conv().weight().value) w *= -1.7;
    const auto [e1, r1] = s.run_stage1(b, Mode::eval);
    EXPECT_EQ(r0, r1);
    EXPECT_NE(e0, e1);
}

TEST(Stage1, ChannelMismatchIsAConfigError) {
    auto s = make_stages(1);
    FeatureBundle<double> b = random_bundle(8, 1);
    b.low = Tensor<double>(1, kLow + 1, 8, 8);
    EXPECT_THROW(s.run_stage1(b, Mode::eval), ConfigError);
}

TEST(StageT, InputWidthsAndErrors) {
    auto s = make_stages(3);
    EXPECT_EQ(s.edge_head(2).in_channels(), kLow + 2);
    EXPECT_EQ(s.region_head(3).in_channels(), kHigh + 2);
    const FeatureBundle<double> b = random_bundle(8, 1);
    EXPECT_THROW(s.run_stage(4, b, map_tensor(8, 0.5), map_tensor(8, 0.5), Mode::eval), ConfigError);
    EXPECT_THROW(s.run_stage(1, b, map_tensor(8, 0.5), map_tensor(8, 0.5), Mode::eval), ConfigError);
    auto off = make_stages(3, false);
    EXPECT_EQ(off.region_head(2).in_channels(), kHigh + 1);
    EXPECT_THROW(off.edge_head(1), std::out_of_range);
}

TEST(StageT, ZeroFinalLayerGivesOneHalf) {
    auto s = make_stages(2);
    for (auto* h : {&s.edge_head(2), &s.region_head(2)}) {
        std::fill(h->final_conv().weight().value.begin(), h->final_conv().weight().value.end(), 0.0);
        for (double b : h->final_conv().bias().value) EXPECT_EQ(b, 0.0);
    }
    const auto [e, r] = s.run_stage(2, random_bundle(9, 4), map_tensor(9, 0.5), map_tensor(9, 0.5), Mode::eval);
    for (double v : e.values()) EXPECT_EQ(v, 0.5);
    for (double v : r.values()) EXPECT_EQ(v, 0.5);
}

TEST(StageT, ReceptiveFieldOfPreviousMapsIsTwelve) {
    auto s = make_stages(2);
    const FeatureBundle<double> b = random_bundle(31, 5);
    Tensor<double> pe = map_tensor(31, 0.3), pr = map_tensor(31, 0.6);
    const auto [e0, r0] = s.run_stage(2, b, pe, pr, Mode::eval);
    pr(0, 0, 15, 15) = 0.9;
    const auto [e1, r1] = s.run_stage(2, b, pe, pr, Mode::eval);
    EXPECT_EQ(changed_radius(e0, e1, 15, 15), 12);
    EXPECT_EQ(changed_radius(r0, r1, 15, 15), 12);
}

TEST(ForwardAll, SingleStage) {
    auto s = make_stages(1);
    int calls = 0;
    const StagePrediction<double> p = s.forward_all(random_bundle(8, 1), Mode::eval, [&](const StageTrace<double>& t) {
        ++calls;
        EXPECT_EQ(t.prev_edge, nullptr);
        EXPECT_EQ(t.prev_region, nullptr);
    });
    EXPECT_EQ(calls, 1);
    EXPECT_EQ(p.edge_maps.size(), 1u);
    EXPECT_EQ(p.region_maps.size(), 1u);
}

TEST(ForwardAll, EachStageConsumesThePreviousOutputs) {
    auto s = make_stages(3);
    std::vector<Tensor<double>> edges, regions;
    std::vector<std::pair<Tensor<double>, Tensor<double>>> inputs;
    const StagePrediction<double> p = s.forward_all(random_bundle(8, 2), Mode::eval, [&](const StageTrace<double>& t) {
        EXPECT_EQ(t.stage, static_cast<int>(edges.size()) + 1);
        if (t.stage > 1) inputs.push_back({*t.prev_edge, *t.prev_region});
        edges.push_back(*t.edge);
        regions.push_back(*t.region);
    });
    ASSERT_EQ(p.stages(), 3);
    ASSERT_EQ(inputs.size(), 2u);
    for (int t = 2; t <= 3; ++t) {
        EXPECT_EQ(inputs[t - 2].first, edges[t - 2]);
        EXPECT_EQ(inputs[t - 2].second, regions[t - 2]);
    }
    for (int t = 0; t < 3; ++t) {
        EXPECT_EQ(p.edge_maps[t], edges[t]);
        EXPECT_EQ(p.region_maps[t], regions[t]);
    }
    // re-running a stage by hand reproduces the recorded output
    const FeatureBundle<double> b = random_bundle(8, 2);
    const auto [e3, r3] = s.run_stage(3, b, p.edge_maps[1], p.region_maps[1], Mode::eval);
    EXPECT_EQ(e3, p.edge_maps[2]);
    EXPECT_EQ(r3, p.region_maps[2]);
}

TEST(ForwardAll, RegionOnlyRecurrence) {
    auto s = make_stages(3, false);
    const FeatureBundle<double> b = random_bundle(8, 6);
    const StagePrediction<double> p = s.forward_all(b, Mode::eval);
    EXPECT_TRUE(p.edge_maps.empty());
    EXPECT_EQ(p.region_maps.size(), 3u);
    const Tensor<double> manual = s.region_head(2).forward(concat_channels<double>({&b.high, &p.region_maps[0]}), Mode::eval);
    EXPECT_EQ(manual, p.region_maps[1]);
}

TEST(ForwardAll, OutputsFiniteAndInRangeForLargeInputs) {
    auto s = make_stages(3);
    FeatureBundle<double> b = random_bundle(10, 7);
    for (double& v : b.low.values()) v *= 1e3;
    const StagePrediction<double> p = s.forward_all(b, Mode::train);
    for (const auto& list : {p.edge_maps, p.region_maps})
        for (const auto& m : list)
            for (double v : m.values()) {
                EXPECT_TRUE(std::isfinite(v));
                EXPECT_GT(v, 0.0);
                EXPECT_LT(v, 1.0);
            }
}
