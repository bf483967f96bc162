#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <limits>
#include <vector>

#include "se2net/crf.hpp"
#include "se2net/grid.hpp"

namespace se2net {

inline constexpr int kBoxSide = 5;
inline constexpr int kBoxRadius = kBoxSide / 2;

struct Pixel {
    int y;
    int x;
    friend bool operator==(const Pixel&, const Pixel&) = default;
};

/**
 * @brief One 5x5 window centred on an edge pixel (clipped to the image), and,
 * once split, the two regions the edge cuts it into.
 */
struct Box {
    Pixel center;
    int top = 0, left = 0, bottom = 0, right = 0;  ///< inclusive, clipped
    bool split = false;                            ///< exactly two non-edge components
    std::vector<Pixel> part1, part2;               ///< non-edge components in scan order
    std::vector<Pixel> edge;                       ///< edge pixels inside the window
    double eta1 = 0.0, eta2 = 0.0;                 ///< salient / non-salient area ratio (set by filter_parts)

    bool contains(Pixel p) const noexcept { return p.y >= top && p.y <= bottom && p.x >= left && p.x <= right; }
};

struct BoxPartition {
    std::vector<Box> boxes;
    std::size_t size() const noexcept { return boxes.size(); }
};

inline bool boxes_overlap(const Box& a, const Box& b) {
    return a.top <= b.bottom && b.top <= a.bottom && a.left <= b.right && b.left <= a.right;
}

/// Zhang-Suen thinning to 8-connected one-pixel-wide curves.
inline Mask thin_edges(const Mask& edges) {
    Mask m = edges;
    const int h = m.height(), w = m.width();
    auto at = [&](int y, int x) -> int { return m.contains(y, x) ? (m(y, x) ? 1 : 0) : 0; };
    std::vector<Pixel> clear;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            clear.clear();
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (!m(y, x)) continue;
                    // P2..P9 clockwise from north
                    const std::array<int, 8> n{at(y - 1, x),     at(y - 1, x + 1), at(y, x + 1), at(y + 1, x + 1),
                                               at(y + 1, x),     at(y + 1, x - 1), at(y, x - 1), at(y - 1, x - 1)};
                    int count = 0, transitions = 0;
                    for (int k = 0; k < 8; ++k) {
                        count += n[k];
                        transitions += (n[k] == 0 && n[(k + 1) % 8] == 1);
                    }
                    if (count < 2 || count > 6 || transitions != 1) continue;
                    const bool ok = pass == 0 ? (n[0] * n[2] * n[4] == 0 && n[2] * n[4] * n[6] == 0)
                                              : (n[0] * n[2] * n[6] == 0 && n[0] * n[4] * n[6] == 0);
                    if (ok) clear.push_back({y, x});
                }
            for (const Pixel& p : clear) m(p.y, p.x) = 0;
            changed = changed || !clear.empty();
        }
    }
    return m;
}

/**
 * @brief Orders edge pixels by 8-connected contour following.
 *
 * Each connected curve is walked depth-first from its topmost-leftmost pixel,
 * preferring E, S, W, N, then SE, SW, NW, NE. Curves are visited in scan order.
 */
inline std::vector<Pixel> trace_order(const Mask& edges) {
    static constexpr std::array<std::array<int, 2>, 8> kPrefer{
        {{0, 1}, {1, 0}, {0, -1}, {-1, 0}, {1, 1}, {1, -1}, {-1, -1}, {-1, 1}}};
    const int h = edges.height(), w = edges.width();
    std::vector<std::uint8_t> seen(edges.size(), 0);
    std::vector<Pixel> order, stack;
    for (int y0 = 0; y0 < h; ++y0)
        for (int x0 = 0; x0 < w; ++x0) {
            if (!edges(y0, x0) || seen[static_cast<std::size_t>(y0) * w + x0]) continue;
            stack.push_back({y0, x0});
            while (!stack.empty()) {
                const Pixel p = stack.back();
                stack.pop_back();
                auto& s = seen[static_cast<std::size_t>(p.y) * w + p.x];
                if (s) continue;
                s = 1;
                order.push_back(p);
                for (auto it = kPrefer.rbegin(); it != kPrefer.rend(); ++it) {
                    const int y = p.y + (*it)[0], x = p.x + (*it)[1];
                    if (edges.contains(y, x) && edges(y, x) && !seen[static_cast<std::size_t>(y) * w + x])
                        stack.push_back({y, x});
                }
            }
        }
    return order;
}

inline Box make_box(Pixel c, int height, int width) {
    Box b;
    b.center = c;
    b.top = std::max(0, c.y - kBoxRadius);
    b.left = std::max(0, c.x - kBoxRadius);
    b.bottom = std::min(height - 1, c.y + kBoxRadius);
    b.right = std::min(width - 1, c.x + kBoxRadius);
    return b;
}

/**
 * @brief Greedy box placement along the traced edge.
 *
 * Walking the contour order, a 5x5 box is emitted at the current pixel when its
 * nominal window is disjoint from every box emitted so far; the walk then
 * continues, skipping pixels whose window would overlap.
 */
inline BoxPartition trace_boxes(const Mask& edge_mask) {
    BoxPartition part;
    std::vector<Pixel> centers;
    for (const Pixel& p : trace_order(edge_mask)) {
        const bool clear = std::none_of(centers.begin(), centers.end(), [&](const Pixel& c) {
            return std::max(std::abs(c.y - p.y), std::abs(c.x - p.x)) < kBoxSide;
        });
        if (!clear) continue;
        centers.push_back(p);
        part.boxes.push_back(make_box(p, edge_mask.height(), edge_mask.width()));
    }
    return part;
}

/**
 * @brief Splits a box into the 4-connected components of its non-edge pixels.
 * Returns true (and fills part1/part2) only when there are exactly two.
 */
inline bool split_box(Box& box, const Mask& edge_mask) {
    const int bh = box.bottom - box.top + 1, bw = box.right - box.left + 1;
    std::vector<int> label(static_cast<std::size_t>(bh) * bw, -1);
    std::vector<std::vector<Pixel>> comps;
    box.edge.clear();
    for (int y = box.top; y <= box.bottom; ++y)
        for (int x = box.left; x <= box.right; ++x) {
            if (edge_mask(y, x)) {
                box.edge.push_back({y, x});
                continue;
            }
            const std::size_t idx = static_cast<std::size_t>(y - box.top) * bw + (x - box.left);
            if (label[idx] >= 0) continue;
            const int id = static_cast<int>(comps.size());
            comps.emplace_back();
            std::vector<Pixel> queue{{y, x}};
            label[idx] = id;
            for (std::size_t q = 0; q < queue.size(); ++q) {
                const Pixel p = queue[q];
                comps.back().push_back(p);
                static constexpr std::array<std::array<int, 2>, 4> kN{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
                for (const auto& d : kN) {
                    const Pixel n{p.y + d[0], p.x + d[1]};
                    if (!box.contains(n) || edge_mask(n.y, n.x)) continue;
                    const std::size_t ni = static_cast<std::size_t>(n.y - box.top) * bw + (n.x - box.left);
                    if (label[ni] >= 0) continue;
                    label[ni] = id;
                    queue.push_back(n);
                }
            }
        }
    box.split = comps.size() == 2;
    if (box.split) {
        std::sort(comps[0].begin(), comps[0].end(), [](Pixel a, Pixel b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
        std::sort(comps[1].begin(), comps[1].end(), [](Pixel a, Pixel b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
        box.part1 = std::move(comps[0]);
        box.part2 = std::move(comps[1]);
    } else {
        box.part1.clear();
        box.part2.clear();
    }
    return box.split;
}

inline void split_boxes(BoxPartition& partition, const Mask& edge_mask) {
    for (Box& b : partition.boxes) split_box(b, edge_mask);
}

/// Salient / non-salient area ratio; +inf when the part has no non-salient pixel.
inline double area_ratio(const std::vector<Pixel>& part, const Mask& region, long long* salient = nullptr,
                         long long* background = nullptr) {
    long long s = 0, b = 0;
    for (const Pixel& p : part) (region(p.y, p.x) ? s : b)++;
    if (salient) *salient = s;
    if (background) *background = b;
    return b == 0 ? std::numeric_limits<double>::infinity() : static_cast<double>(s) / static_cast<double>(b);
}

/**
 * @brief Majority fill of each part of every split box: a part becomes salient
 * iff eta > 1. Edge pixels of the box take the larger of the two part values.
 *
 * Reads always come from `region`, writes go to the returned copy, so the
 * result does not depend on box order. Pixels outside split boxes are copied.
 */
inline Mask filter_parts(BoxPartition& partition, const Mask& region) {
    Mask out = region;
    for (Box& b : partition.boxes) {
        if (!b.split) continue;
        long long s1 = 0, n1 = 0, s2 = 0, n2 = 0;
        b.eta1 = area_ratio(b.part1, region, &s1, &n1);
        b.eta2 = area_ratio(b.part2, region, &s2, &n2);
        const std::uint8_t v1 = s1 > n1 ? 1 : 0;  // eta > 1, exact in integers
        const std::uint8_t v2 = s2 > n2 ? 1 : 0;
        for (const Pixel& p : b.part1) out(p.y, p.x) = v1;
        for (const Pixel& p : b.part2) out(p.y, p.x) = v2;
        for (const Pixel& p : b.edge) out(p.y, p.x) = std::max(v1, v2);
    }
    return out;
}

struct RefineConfig {
    CrfConfig crf;
    bool use_crf = true;
    bool edge_filter = true;
    bool thin_edges = true;  ///< reduce the predicted edge band to a centre line before box placement
    double threshold = 0.5;
};

struct RefinementResult {
    Map edge;        ///< refined edge probabilities
    Map region;      ///< refined region probabilities
    Mask edge_mask;  ///< binarized (and thinned) edges used for the boxes
    BoxPartition partition;
    Mask mask;  ///< final binary region mask
};

/**
 * @brief CRF-refine both maps, binarize, place boxes along the edge and
 * majority-filter each side of the edge inside every box.
 */
inline RefinementResult edge_guided_refine(const Image& image, const Map& edge_prob, const Map& region_prob,
                                           const RefineConfig& cfg = {}) {
    require_same_extent(edge_prob, region_prob, "edge_guided_refine");
    require_same_extent(image, region_prob, "edge_guided_refine");
    RefinementResult r;
    r.edge = cfg.use_crf ? crf_refine(image, edge_prob, cfg.crf) : edge_prob;
    r.region = cfg.use_crf ? crf_refine(image, region_prob, cfg.crf) : region_prob;
    const Mask region_bin = binarize(r.region, cfg.threshold);
    r.edge_mask = binarize(r.edge, cfg.threshold);
    if (cfg.thin_edges) r.edge_mask = thin_edges(r.edge_mask);
    if (!cfg.edge_filter) {
        r.mask = region_bin;
        return r;
    }
    r.partition = trace_boxes(r.edge_mask);
    split_boxes(r.partition, r.edge_mask);
    r.mask = filter_parts(r.partition, region_bin);
    return r;
}

}  // namespace se2net
