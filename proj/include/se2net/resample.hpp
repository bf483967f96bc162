#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "se2net/grid.hpp"
#include "se2net/tensor.hpp"

namespace se2net {

/// Two-tap linear interpolation weights for one output coordinate.
struct AxisTap {
    int i0;
    int i1;
    double w0;
    double w1;
};

/**
 * @brief Half-pixel-centred bilinear taps mapping `in` samples onto `out` samples.
 *
 * Source coordinates are clamped to the valid range, so weights always sum to 1
 * and constant signals are reproduced exactly.
 */
inline std::vector<AxisTap> bilinear_taps(int in, int out) {
    std::vector<AxisTap> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const int i0 = static_cast<int>(std::floor(src));
        const int i1 = std::min(i0 + 1, in - 1);
        const double f = src - i0;
        taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - f, f};
    }
    return taps;
}

template <class T>
Grid<T> resize_bilinear(const Grid<T>& src, int height, int width) {
    if (src.height() == height && src.width() == width) return src;
    const auto ty = bilinear_taps(src.height(), height);
    const auto tx = bilinear_taps(src.width(), width);
    Grid<T> out(height, width, src.channels());
    for (int y = 0; y < height; ++y) {
        const AxisTap& a = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < width; ++x) {
            const AxisTap& b = tx[static_cast<std::size_t>(x)];
            for (int c = 0; c < src.channels(); ++c) {
                const double v = a.w0 * (b.w0 * src(a.i0, b.i0, c) + b.w1 * src(a.i0, b.i1, c)) +
                                 a.w1 * (b.w0 * src(a.i1, b.i0, c) + b.w1 * src(a.i1, b.i1, c));
                out(y, x, c) = static_cast<T>(v);
            }
        }
    }
    return out;
}

/// Bilinear resize of a binary mask followed by a 0.5 threshold.
inline Mask resize_mask(const Mask& m, int height, int width) {
    return binarize(resize_bilinear(to_map(m), height, width), 0.5);
}

/**
 * @brief Separable bilinear resampling of every plane of a batched tensor,
 * with its adjoint for backpropagation.
 */
template <class T>
class Resampler {
public:
    Resampler() = default;
    Resampler(int in_h, int in_w, int out_h, int out_w)
        : in_h_(in_h), in_w_(in_w), out_h_(out_h), out_w_(out_w),
          ty_(bilinear_taps(in_h, out_h)), tx_(bilinear_taps(in_w, out_w)) {}

    bool identity() const noexcept { return in_h_ == out_h_ && in_w_ == out_w_; }
    int out_height() const noexcept { return out_h_; }
    int out_width() const noexcept { return out_w_; }

    Tensor<T> forward(const Tensor<T>& in) const {
        check(in.height() == in_h_ && in.width() == in_w_, "resample forward");
        if (identity()) return in;
        Tensor<T> out(in.batch(), in.channels(), out_h_, out_w_);
        for (int n = 0; n < in.batch(); ++n)
            for (int c = 0; c < in.channels(); ++c) {
                const T* s = in.plane(n, c);
                T* d = out.plane(n, c);
                for (int y = 0; y < out_h_; ++y) {
                    const AxisTap& a = ty_[static_cast<std::size_t>(y)];
                    const T* r0 = s + static_cast<std::size_t>(a.i0) * in_w_;
                    const T* r1 = s + static_cast<std::size_t>(a.i1) * in_w_;
                    for (int x = 0; x < out_w_; ++x) {
                        const AxisTap& b = tx_[static_cast<std::size_t>(x)];
                        d[static_cast<std::size_t>(y) * out_w_ + x] =
                            static_cast<T>(a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) +
                                           a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]));
                    }
                }
            }
        return out;
    }

    /// Transpose of forward: scatters output gradients back onto the input grid.
    Tensor<T> adjoint(const Tensor<T>& dout) const {
        check(dout.height() == out_h_ && dout.width() == out_w_, "resample adjoint");
        if (identity()) return dout;
        Tensor<T> din(dout.batch(), dout.channels(), in_h_, in_w_);
        for (int n = 0; n < dout.batch(); ++n)
            for (int c = 0; c < dout.channels(); ++c) {
                const T* g = dout.plane(n, c);
                T* d = din.plane(n, c);
                for (int y = 0; y < out_h_; ++y) {
                    const AxisTap& a = ty_[static_cast<std::size_t>(y)];
                    T* r0 = d + static_cast<std::size_t>(a.i0) * in_w_;
                    T* r1 = d + static_cast<std::size_t>(a.i1) * in_w_;
                    for (int x = 0; x < out_w_; ++x) {
                        const AxisTap& b = tx_[static_cast<std::size_t>(x)];
                        const T v = g[static_cast<std::size_t>(y) * out_w_ + x];
                        r0[b.i0] += static_cast<T>(a.w0 * b.w0 * v);
                        r0[b.i1] += static_cast<T>(a.w0 * b.w1 * v);
                        r1[b.i0] += static_cast<T>(a.w1 * b.w0 * v);
                        r1[b.i1] += static_cast<T>(a.w1 * b.w1 * v);
                    }
                }
            }
        return din;
    }

private:
    static void check(bool ok, const char* what) {
        if (!ok) throw ShapeError(std::string(what) + ": unexpected input size");
    }

    int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
    std::vector<AxisTap> ty_, tx_;
};

}  // namespace se2net
