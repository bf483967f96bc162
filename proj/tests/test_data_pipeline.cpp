#include <gtest/gtest.h>

#include "se2net/se2net.hpp"

#include <cstdlib>

using namespace se2net;

namespace {

Mask square_mask(int size, int top, int side) {
    Mask m(size, size);
    for (int y = top; y < top + side; ++y)
        for (int x = top; x < top + side; ++x) m(y, x) = 1;
    return m;
}

long long count(const Mask& m) {
    long long c = 0;
    for (auto v : m.values()) c += v;
    return c;
}

// Brute-force oracle: a pixel is in the band iff some foreground pixel with a
// background 8-neighbour lies within Chebyshev distance 2.
Mask band_oracle(const Mask& m) {
    Mask out(m.height(), m.width());
    auto boundary = [&](int y, int x) {
        if (!m(y, x)) return false;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
                if (m.contains(y + dy, x + dx) && !m(y + dy, x + dx)) return true;
        return false;
    };
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            for (int by = y - 2; by <= y + 2; ++by)
                for (int bx = x - 2; bx <= x + 2; ++bx)
                    if (m.contains(by, bx) && boundary(by, bx)) out(y, x) = 1;
    return out;
}

Mask random_blobs(int size, std::uint64_t seed) {
    Rng rng(seed);
    Mask m(size, size);
    for (int k = 0; k < 3; ++k) {
        const int cy = rng.integer(0, size - 1), cx = rng.integer(0, size - 1), r = rng.integer(2, size / 3);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m(y, x) = 1;
    }
    return m;
}

}  // namespace

TEST(MakeEdgeGt, EmptyAndFullMasksGiveNoEdges) {
    EXPECT_EQ(count(make_edge_gt(Mask(32, 32))), 0);
    EXPECT_EQ(count(make_edge_gt(Mask(32, 32, 1, 1))), 0);
}

TEST(MakeEdgeGt, CenteredSquareGivesClosedRing) {
    const Mask m = square_mask(64, 24, 16);
    const Mask e = make_edge_gt(m);
    EXPECT_EQ(e, band_oracle(m));
    // boundary ring of the square is rows/cols 24 and 39; dilation spans 22..41
    // minus the untouched interior 27..36: 20^2 - 10^2
    EXPECT_EQ(count(e), 20 * 20 - 10 * 10);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const bool in_outer = y >= 22 && y <= 41 && x >= 22 && x <= 41;
            const bool in_inner = y >= 27 && y <= 36 && x >= 27 && x <= 36;
            EXPECT_EQ(e(y, x), (in_outer && !in_inner) ? 1 : 0) << y << "," << x;
        }
}

TEST(MakeEdgeGt, MirrorCommutes) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Mask m = random_blobs(40, s);
        EXPECT_EQ(make_edge_gt(flip_horizontal(m)), flip_horizontal(make_edge_gt(m)));
    }
}

TEST(MakeEdgeGt, MatchesBandOracleOnRandomMasks) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Mask m = random_blobs(48, 100 + s);
        EXPECT_EQ(make_edge_gt(m), band_oracle(m));
    }
}

// The band is built from the foreground side only, so m and 1-m give bands that
// coincide up to a one-pixel shift: each contains the other's boundary and they
// differ only next to the boundary.
TEST(MakeEdgeGt, FigureGroundBandsAgreeNearTheBoundary) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Mask m = random_blobs(48, 200 + s);
        Mask inv(m.height(), m.width());
        for (std::size_t i = 0; i < m.size(); ++i) inv.data()[i] = 1 - m.data()[i];
        const Mask a = make_edge_gt(m), b = make_edge_gt(inv);
        const Mask ba = inner_boundary(m), bb = inner_boundary(inv);
        const Mask da = dilate_square(ba, 3), db = dilate_square(bb, 3);
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (bb.data()[i]) EXPECT_TRUE(a.data()[i]);
            if (ba.data()[i]) EXPECT_TRUE(b.data()[i]);
            if (a.data()[i] != b.data()[i]) EXPECT_TRUE(da.data()[i] && db.data()[i]);
        }
    }
}

TEST(MakeEdgeGt, RejectsNonBinary) {
    Mask m(4, 4);
    m(1, 1) = 255;
    EXPECT_THROW(make_edge_gt(m), ShapeError);
}

TEST(Augment, DeterministicInSeed) {
    const auto data = synth_shapes(1, 80, 3);
    EXPECT_EQ(augment(data[0], 11, 64), augment(data[0], 11, 64));
    bool any_differs = false;
    for (std::uint64_t s = 12; s < 20; ++s) any_differs = any_differs || !(augment(data[0], s, 64) == augment(data[0], 11, 64));
    EXPECT_TRUE(any_differs);
}

TEST(Augment, CropMatchesDefinition) {
    const auto data = synth_shapes(1, 80, 4);
    const ImageSample& s = data[0];
    const CropFlip cf{7, 11, 64, false};
    const ImageSample out = apply_crop_flip(s, cf);
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j) {
            for (int c = 0; c < 3; ++c) ASSERT_EQ(out.image(i, j, c), s.image(7 + i, 11 + j, c));
            ASSERT_EQ(out.region_gt(i, j), s.region_gt(7 + i, 11 + j));
            ASSERT_EQ(out.edge_gt(i, j), s.edge_gt(7 + i, 11 + j));
        }
}

TEST(Augment, ForcedFlipTwiceIsIdentity) {
    const auto data = synth_shapes(1, 64, 5);
    const CropFlip cf{0, 0, 64, true};
    EXPECT_EQ(apply_crop_flip(apply_crop_flip(data[0], cf), cf), data[0]);
}

TEST(Augment, LabelsStayCoRegistered) {
    // image channels carry the labels: after augmentation they must still equal them
    auto data = synth_shapes(1, 96, 6);
    ImageSample s = data[0];
    for (int y = 0; y < s.height(); ++y)
        for (int x = 0; x < s.width(); ++x)
        {
            s.image(y, x, 0) = static_cast<float>(s.region_gt(y, x));
            s.image(y, x, 1) = static_cast<float>(s.edge_gt(y, x));
        }
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ImageSample a = augment(s, seed, 64);
        ASSERT_EQ(a.height(), 64);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                ASSERT_EQ(a.image(y, x, 0), static_cast<float>(a.region_gt(y, x)));
                ASSERT_EQ(a.image(y, x, 1), static_cast<float>(a.edge_gt(y, x)));
            }
    }
}

TEST(Augment, SmallImageIsResizedUpFirst) {
    const auto data = synth_shapes(1, 40, 8);
    const ImageSample a = augment(data[0], 1, 64);
    EXPECT_EQ(a.height(), 64);
    EXPECT_EQ(a.width(), 64);
    EXPECT_TRUE(is_binary(a.region_gt));
    EXPECT_TRUE(is_binary(a.edge_gt));
}

TEST(SynthShapes, Deterministic) {
    EXPECT_EQ(synth_shapes(4, 64, 7), synth_shapes(4, 64, 7));
    EXPECT_NE(synth_shapes(1, 64, 7)[0].image, synth_shapes(1, 64, 8)[0].image);
}

TEST(SynthShapes, LabelsAndForegroundFraction) {
    const auto data = synth_shapes(30, 64, 21);
    for (const ImageSample& s : data) {
        EXPECT_EQ(s.edge_gt, make_edge_gt(s.region_gt));
        const double fg = static_cast<double>(count(s.region_gt)) / static_cast<double>(s.region_gt.size());
        EXPECT_GT(fg, 0.05);
        EXPECT_LT(fg, 0.6);
        for (float v : s.image.values()) {
            EXPECT_GE(v, 0.f);
            EXPECT_LE(v, 1.f);
        }
    }
}

TEST(SynthShapes, InvalidArgumentsThrow) {
    EXPECT_THROW(synth_shapes(0, 64, 1), ConfigError);
    EXPECT_THROW(synth_shapes(1, 15, 1), ConfigError);
}

TEST(Io, SampleRoundTripThroughFiles) {
    const auto dir = std::filesystem::temp_directory_path() / "se2net_io_test";
    std::filesystem::remove_all(dir);
    const auto data = synth_shapes(3, 48, 2);
    std::vector<std::string> ids;
    for (const auto& s : data) {
        save_sample(dir, s, ".png");
        ids.push_back(s.id);
    }
    write_id_list(dir / "test.txt", ids);
    DatasetManifest man{dir / "images", dir / "masks", "test", ".png", read_id_list(dir / "test.txt")};
    EXPECT_EQ(man.ids, ids);
    EXPECT_TRUE(missing_files(man).empty());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const ImageSample s = load_sample(man, man.ids[i]);
        EXPECT_EQ(s.region_gt, data[i].region_gt);
        EXPECT_EQ(s.edge_gt, data[i].edge_gt);
        for (std::size_t k = 0; k < s.image.size(); ++k)
            EXPECT_NEAR(s.image.data()[k], data[i].image.data()[k], 0.5 / 255 + 1e-6);
    }
    std::filesystem::remove(man.mask_path(ids[1]));
    EXPECT_EQ(missing_files(man).size(), 1u);
    EXPECT_THROW(load_sample(man, ids[1]), IoError);
    std::filesystem::remove_all(dir);
}
