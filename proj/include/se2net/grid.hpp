#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "se2net/error.hpp"

namespace se2net {

/**
 * @brief Dense H x W x C raster with interleaved channels.
 *
 * Used for everything in image space: RGB images, binary masks, probability maps.
 */
template <class T>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    Grid(int height, int width, int channels = 1, T fill = T{})
        : height_(checked(height, 0)), width_(checked(width, 0)), channels_(checked(channels, 1)),
          data_(static_cast<std::size_t>(height) * width * channels, fill) {}

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(int y, int x, int ch = 0) noexcept {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + ch];
    }
    const T& operator()(int y, int x, int ch = 0) const noexcept {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + ch];
    }

    bool contains(int y, int x) const noexcept {
        return y >= 0 && y < height_ && x >= 0 && x < width_;
    }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    /// Same height and width; channel counts may differ.
    template <class U>
    bool same_extent(const Grid<U>& other) const noexcept {
        return height_ == other.height() && width_ == other.width();
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    static int checked(int v, int lo) {
        if (v < lo) throw ShapeError("grid dimensions must be non-negative with at least one channel");
        return v;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 1;
    std::vector<T> data_;
};

using Image = Grid<float>;        ///< RGB, values in [0,1]
using Mask = Grid<std::uint8_t>;  ///< binary {0,1}
using Map = Grid<double>;         ///< single-channel real map

template <class T, class U>
void require_same_extent(const Grid<T>& a, const Grid<U>& b, const char* what) {
    if (!a.same_extent(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()) + ")");
    }
}

template <class T>
Grid<T> flip_horizontal(const Grid<T>& g) {
    Grid<T> out(g.height(), g.width(), g.channels());
    for (int y = 0; y < g.height(); ++y)
        for (int x = 0; x < g.width(); ++x)
            for (int c = 0; c < g.channels(); ++c) out(y, g.width() - 1 - x, c) = g(y, x, c);
    return out;
}

template <class T>
Grid<T> crop(const Grid<T>& g, int top, int left, int height, int width) {
    if (top < 0 || left < 0 || top + height > g.height() || left + width > g.width()) {
        throw ShapeError("crop window exceeds grid bounds");
    }
    Grid<T> out(height, width, g.channels());
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < g.channels(); ++c) out(y, x, c) = g(top + y, left + x, c);
    return out;
}

inline Map to_map(const Mask& m) {
    Map out(m.height(), m.width());
    for (std::size_t i = 0; i < m.size(); ++i) out.data()[i] = m.data()[i] ? 1.0 : 0.0;
    return out;
}

/// v >= threshold -> 1.
inline Mask binarize(const Map& m, double threshold = 0.5) {
    Mask out(m.height(), m.width());
    for (std::size_t i = 0; i < m.size(); ++i) out.data()[i] = m.data()[i] >= threshold ? 1 : 0;
    return out;
}

inline bool is_binary(const Mask& m) {
    return std::all_of(m.values().begin(), m.values().end(), [](std::uint8_t v) { return v <= 1; });
}

}  // namespace se2net
