#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "se2net/error.hpp"

namespace se2net {

/// Batched feature map, NCHW, contiguous.
template <class T>
class Tensor {
public:
    Tensor() = default;
    Tensor(int batch, int channels, int height, int width, T fill = T{})
        : n_(batch), c_(channels), h_(height), w_(width),
          data_(static_cast<std::size_t>(batch) * channels * height * width, fill) {}

    int batch() const noexcept { return n_; }
    int channels() const noexcept { return c_; }
    int height() const noexcept { return h_; }
    int width() const noexcept { return w_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t plane_size() const noexcept { return static_cast<std::size_t>(h_) * w_; }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    T* plane(int n, int c) noexcept { return data_.data() + (static_cast<std::size_t>(n) * c_ + c) * plane_size(); }
    const T* plane(int n, int c) const noexcept {
        return data_.data() + (static_cast<std::size_t>(n) * c_ + c) * plane_size();
    }

    T& operator()(int n, int c, int y, int x) noexcept { return plane(n, c)[static_cast<std::size_t>(y) * w_ + x]; }
    const T& operator()(int n, int c, int y, int x) const noexcept {
        return plane(n, c)[static_cast<std::size_t>(y) * w_ + x];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const noexcept { return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

    Tensor& operator+=(const Tensor& o) {
        if (!same_shape(o)) throw ShapeError("tensor +=: shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<T> data_;
};

template <class T>
std::string shape_string(const Tensor<T>& t) {
    return std::to_string(t.batch()) + "x" + std::to_string(t.channels()) + "x" + std::to_string(t.height()) + "x" +
           std::to_string(t.width());
}

/// Channel concatenation; all parts share batch and spatial size.
template <class T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Tensor<T>& first = *parts.front();
    int channels = 0;
    for (const Tensor<T>* p : parts) {
        if (p->batch() != first.batch() || p->height() != first.height() || p->width() != first.width()) {
            throw ShapeError("concat_channels: " + shape_string(*p) + " vs " + shape_string(first));
        }
        channels += p->channels();
    }
    Tensor<T> out(first.batch(), channels, first.height(), first.width());
    const std::size_t plane = first.plane_size();
    for (int n = 0; n < first.batch(); ++n) {
        int offset = 0;
        for (const Tensor<T>* p : parts) {
            std::copy_n(p->plane(n, 0), plane * p->channels(), out.plane(n, offset));
            offset += p->channels();
        }
    }
    return out;
}

template <class T>
Tensor<T> concat_channels(std::initializer_list<const Tensor<T>*> parts) {
    std::vector<const Tensor<T>*> v(parts);
    return concat_channels<T>(std::span<const Tensor<T>* const>(v));
}

/// Adjoint of concat_channels: adds channel slices of `grad` into `outs` (allocated on first use).
template <class T>
void split_channels_add(const Tensor<T>& grad, std::span<Tensor<T>* const> outs, std::span<const int> channels) {
    const std::size_t plane = grad.plane_size();
    int offset = 0;
    for (std::size_t k = 0; k < outs.size(); ++k) {
        Tensor<T>& dst = *outs[k];
        if (dst.empty()) dst = Tensor<T>(grad.batch(), channels[k], grad.height(), grad.width());
        for (int n = 0; n < grad.batch(); ++n) {
            const T* src = grad.plane(n, offset);
            T* d = dst.plane(n, 0);
            for (std::size_t i = 0; i < plane * channels[k]; ++i) d[i] += src[i];
        }
        offset += channels[k];
    }
    if (offset != grad.channels()) throw ShapeError("split_channels_add: channel count mismatch");
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
    if (src.empty()) return;
    if (dst.empty()) {
        dst = src;
        return;
    }
    dst += src;
}

}  // namespace se2net
