#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "se2net/error.hpp"
#include "se2net/grid.hpp"
#include "se2net/random.hpp"
#include "se2net/resample.hpp"

namespace se2net {

/// One training/evaluation unit. All three grids share H x W.
struct ImageSample {
    std::string id;
    Image image;     ///< RGB in [0,1]
    Mask region_gt;  ///< {0,1}
    Mask edge_gt;    ///< {0,1}

    int height() const noexcept { return image.height(); }
    int width() const noexcept { return image.width(); }
    friend bool operator==(const ImageSample&, const ImageSample&) = default;
};

inline constexpr int kEdgeBandRadius = 2;  // 5-pixel band

/// Foreground pixels with at least one 8-neighbour in the background. Pixels outside the image do not count.
inline Mask inner_boundary(const Mask& region) {
    Mask out(region.height(), region.width());
    for (int y = 0; y < region.height(); ++y)
        for (int x = 0; x < region.width(); ++x) {
            if (!region(y, x)) continue;
            bool edge = false;
            for (int dy = -1; dy <= 1 && !edge; ++dy)
                for (int dx = -1; dx <= 1 && !edge; ++dx)
                    if (region.contains(y + dy, x + dx) && !region(y + dy, x + dx)) edge = true;
            out(y, x) = edge ? 1 : 0;
        }
    return out;
}

/// Binary dilation with a (2r+1) x (2r+1) square, done separably.
inline Mask dilate_square(const Mask& m, int radius) {
    Mask rows(m.height(), m.width());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            std::uint8_t v = 0;
            for (int dx = std::max(0, x - radius); dx <= std::min(m.width() - 1, x + radius) && !v; ++dx) v = m(y, dx);
            rows(y, x) = v;
        }
    Mask out(m.height(), m.width());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            std::uint8_t v = 0;
            for (int dy = std::max(0, y - radius); dy <= std::min(m.height() - 1, y + radius) && !v; ++dy)
                v = rows(dy, x);
            out(y, x) = v;
        }
    return out;
}

/**
 * @brief Edge label from a region label: boundary extraction followed by
 * dilation to a 5-pixel band. Empty and full masks give an empty edge map.
 */
inline Mask make_edge_gt(const Mask& region) {
    if (!is_binary(region)) throw ShapeError("make_edge_gt: region mask must be binary");
    return dilate_square(inner_boundary(region), kEdgeBandRadius);
}

/// A crop window plus flip decision, applied identically to image and labels.
struct CropFlip {
    int top = 0;
    int left = 0;
    int size = 0;
    bool flip = false;
};

/// Bilinearly upsizes a sample so its short side is at least `crop` (labels re-thresholded at 0.5).
inline ImageSample fit_to_crop(const ImageSample& s, int crop) {
    const int short_side = std::min(s.height(), s.width());
    if (short_side >= crop) return s;
    const double f = static_cast<double>(crop) / short_side;
    const int h = std::max(crop, static_cast<int>(std::lround(s.height() * f)));
    const int w = std::max(crop, static_cast<int>(std::lround(s.width() * f)));
    return {s.id, resize_bilinear(s.image, h, w), resize_mask(s.region_gt, h, w), resize_mask(s.edge_gt, h, w)};
}

inline CropFlip draw_crop_flip(int height, int width, int crop, std::uint64_t seed) {
    Rng rng(seed);
    CropFlip cf;
    cf.size = crop;
    cf.top = rng.integer(0, height - crop);
    cf.left = rng.integer(0, width - crop);
    cf.flip = rng.coin();
    return cf;
}

/// Crops the window, then mirrors horizontally if requested.
inline ImageSample apply_crop_flip(const ImageSample& s, const CropFlip& cf) {
    ImageSample out{s.id, crop(s.image, cf.top, cf.left, cf.size, cf.size),
                    crop(s.region_gt, cf.top, cf.left, cf.size, cf.size),
                    crop(s.edge_gt, cf.top, cf.left, cf.size, cf.size)};
    if (cf.flip) {
        out.image = flip_horizontal(out.image);
        out.region_gt = flip_horizontal(out.region_gt);
        out.edge_gt = flip_horizontal(out.edge_gt);
    }
    return out;
}

/// Random square crop + random horizontal flip, deterministic in `seed`.
inline ImageSample augment(const ImageSample& sample, std::uint64_t seed, int crop_size = 300) {
    if (crop_size < 1) throw ConfigError("augment: crop size must be positive");
    const ImageSample fitted = fit_to_crop(sample, crop_size);
    return apply_crop_flip(fitted, draw_crop_flip(fitted.height(), fitted.width(), crop_size, seed));
}

namespace detail {

struct Rgb {
    double r, g, b;
};

inline Rgb random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

inline double color_distance(const Rgb& a, const Rgb& b) {
    return std::abs(a.r - b.r) + std::abs(a.g - b.g) + std::abs(a.b - b.b);
}

inline void paint_shape(Rng& rng, int size, Mask& region, std::vector<std::uint8_t>& owner, std::uint8_t id) {
    const bool ellipse = rng.coin();
    const double cy = rng.uniform(0.2, 0.8) * size, cx = rng.uniform(0.2, 0.8) * size;
    const double ry = rng.uniform(0.08, 0.3) * size, rx = rng.uniform(0.08, 0.3) * size;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double u = (y + 0.5 - cy) / ry, v = (x + 0.5 - cx) / rx;
            const bool inside = ellipse ? (u * u + v * v <= 1.0) : (std::abs(u) <= 1.0 && std::abs(v) <= 1.0);
            if (inside) {
                region(y, x) = 1;
                owner[static_cast<std::size_t>(y) * size + x] = id;
            }
        }
}

}  // namespace detail

/**
 * @brief Deterministic corpus of 1-3 filled rectangles/ellipses on a textured
 * background, with foreground fraction in (0.05, 0.6).
 */
inline std::vector<ImageSample> synth_shapes(int count, int size, std::uint64_t seed) {
    if (count < 1) throw ConfigError("synth_shapes: count must be >= 1");
    if (size < 16) throw ConfigError("synth_shapes: size must be >= 16");
    std::vector<ImageSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        Mask region;
        std::vector<std::uint8_t> owner;
        int shapes = 0;
        for (;;) {
            region = Mask(size, size);
            owner.assign(static_cast<std::size_t>(size) * size, 0);
            shapes = rng.integer(1, 3);
            for (int s = 0; s < shapes; ++s) detail::paint_shape(rng, size, region, owner, static_cast<std::uint8_t>(s + 1));
            double fg = 0;
            for (auto v : region.values()) fg += v;
            fg /= static_cast<double>(region.size());
            if (fg > 0.05 && fg < 0.6) break;
        }

        const detail::Rgb bg = detail::random_color(rng);
        std::vector<detail::Rgb> fills;
        for (int s = 0; s < shapes; ++s) {
            detail::Rgb c = detail::random_color(rng);
            while (detail::color_distance(c, bg) < 0.9) c = detail::random_color(rng);
            fills.push_back(c);
        }
        const double fy = rng.uniform(0.05, 0.3), fx = rng.uniform(0.05, 0.3), phase = rng.uniform(0.0, 6.283);
        Image img(size, size, 3);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const std::uint8_t who = owner[static_cast<std::size_t>(y) * size + x];
                const detail::Rgb c = who ? fills[who - 1u] : bg;
                const double texture = who ? 0.03 * std::sin(0.7 * x + 0.4 * y)
                                           : 0.12 * std::sin(fy * y * 3.0 + phase) * std::cos(fx * x * 3.0);
                const double rgb[3] = {c.r, c.g, c.b};
                for (int ch = 0; ch < 3; ++ch) {
                    const double noise = (rng.uniform() - 0.5) * 0.08;
                    img(y, x, ch) = static_cast<float>(std::clamp(rgb[ch] + texture + noise, 0.0, 1.0));
                }
            }
        ImageSample s;
        s.id = "synth_" + std::to_string(seed) + "_" + std::to_string(i);
        s.image = std::move(img);
        s.edge_gt = make_edge_gt(region);
        s.region_gt = std::move(region);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace se2net
