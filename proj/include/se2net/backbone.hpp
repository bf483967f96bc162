#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "se2net/error.hpp"
#include "se2net/layers.hpp"
#include "se2net/resample.hpp"

namespace se2net {

inline constexpr int kPyramidLevels = 5;
inline constexpr int kMinInputSide = 32;

using Channels5 = std::array<int, kPyramidLevels>;

/// Five feature maps at 1, 1/2, 1/4, 1/8 and 1/16 of the input size (ceil rounding).
template <class T>
struct FeaturePyramid {
    std::array<Tensor<T>, kPyramidLevels> maps;
};

/// Low-level (scales 1..3) and high-level (scales 4..5) features on one common grid.
template <class T>
struct FeatureBundle {
    Tensor<T> low;
    Tensor<T> high;
    int height() const noexcept { return low.height(); }
    int width() const noexcept { return low.width(); }
};

inline int ceil_half(int n) { return (n + 1) / 2; }

/// Spatial sizes of the pyramid for a given input side: s_{k+1} = ceil(s_k / 2).
inline std::array<int, kPyramidLevels> pyramid_sides(int side) {
    std::array<int, kPyramidLevels> out{};
    out[0] = side;
    for (int k = 1; k < kPyramidLevels; ++k) out[k] = ceil_half(out[k - 1]);
    return out;
}

inline int working_side(int side, double working_scale) {
    return std::max(1, static_cast<int>(std::ceil(side * working_scale - 1e-9)));
}

/**
 * @brief Plug-in feature extractor interface.
 *
 * Implementations must emit exactly five maps at the pyramid scales and
 * support backpropagation into their own parameters.
 */
template <class T>
class Backbone {
public:
    virtual ~Backbone() = default;
    virtual std::string name() const = 0;
    virtual Channels5 channels() const = 0;
    virtual void init(Rng& rng) = 0;
    virtual void collect(ParamSet<T>& set) = 0;
    virtual FeaturePyramid<T> forward(const Tensor<T>& images, Mode mode) = 0;
    virtual void backward(const std::array<Tensor<T>, kPyramidLevels>& grads) = 0;
};

/**
 * @brief Ten-convolution backbone trainable from scratch.
 *
 * Two 3x3 blocks at full resolution, then for each coarser scale a stride-2
 * 3x3 block followed by a stride-1 3x3 block. Every block is conv+BN+PReLU.
 */
template <class T>
class TinyBackbone final : public Backbone<T> {
public:
    explicit TinyBackbone(Channels5 channels) : channels_(channels) {
        int in = 3;
        for (int k = 0; k < kPyramidLevels; ++k) {
            const std::string base = "backbone.s" + std::to_string(k);
            blocks_.emplace_back(base + ".a", in, channels[k], 3, k == 0 ? 1 : 2, 1);
            blocks_.emplace_back(base + ".b", channels[k], channels[k], 3, 1, 1);
            in = channels[k];
        }
    }

    std::string name() const override { return "tiny"; }
    Channels5 channels() const override { return channels_; }

    void init(Rng& rng) override {
        for (auto& b : blocks_) b.init(rng);
    }
    void collect(ParamSet<T>& set) override {
        for (auto& b : blocks_) b.collect(set);
    }

    FeaturePyramid<T> forward(const Tensor<T>& images, Mode mode) override {
        if (images.channels() != 3) throw ShapeError("backbone expects 3-channel images");
        FeaturePyramid<T> pyr;
        Tensor<T> h = images;
        for (int k = 0; k < kPyramidLevels; ++k) {
            h = blocks_[2 * k].forward(h, mode);
            h = blocks_[2 * k + 1].forward(h, mode);
            pyr.maps[k] = h;
        }
        return pyr;
    }

    void backward(const std::array<Tensor<T>, kPyramidLevels>& grads) override {
        Tensor<T> g;
        for (int k = kPyramidLevels - 1; k >= 0; --k) {
            accumulate(g, grads[k]);
            if (g.empty()) continue;
            g = blocks_[2 * k + 1].backward(g);
            g = blocks_[2 * k].backward(g);
        }
    }

    std::vector<ConvBlock<T>>& blocks() noexcept { return blocks_; }

private:
    Channels5 channels_;
    std::vector<ConvBlock<T>> blocks_;
};

template <class T>
using BackboneFactory = std::function<std::unique_ptr<Backbone<T>>(const Channels5&)>;

template <class T>
std::map<std::string, BackboneFactory<T>>& backbone_registry() {
    static std::map<std::string, BackboneFactory<T>> registry{
        {"tiny", [](const Channels5& c) { return std::make_unique<TinyBackbone<T>>(c); }},
    };
    return registry;
}

/// Adds (or replaces) a backbone implementation under `name`.
template <class T>
void register_backbone(const std::string& name, BackboneFactory<T> factory) {
    backbone_registry<T>()[name] = std::move(factory);
}

template <class T>
std::unique_ptr<Backbone<T>> make_backbone(const std::string& name, const Channels5& channels) {
    auto& reg = backbone_registry<T>();
    auto it = reg.find(name);
    if (it == reg.end()) throw ConfigError("unknown backbone '" + name + "'");
    for (int c : channels)
        if (c < 1) throw ConfigError("backbone channels must be positive");
    return it->second(channels);
}

template <class T>
FeaturePyramid<T> extract_pyramid(Backbone<T>& backbone, const Tensor<T>& images, Mode mode = Mode::eval) {
    if (images.height() < kMinInputSide || images.width() < kMinInputSide) {
        throw ShapeError("input " + std::to_string(images.height()) + "x" + std::to_string(images.width()) +
                         " below backbone minimum of " + std::to_string(kMinInputSide));
    }
    return backbone.forward(images, mode);
}

/**
 * @brief Resamples pyramid levels to the working grid and concatenates
 * levels 0..2 into `low` and levels 3..4 into `high`.
 */
template <class T>
class Bundler {
public:
    explicit Bundler(double working_scale = 0.25) : scale_(working_scale) {
        if (!(working_scale > 0.0 && working_scale <= 1.0)) throw ConfigError("bundle.working_scale must be in (0,1]");
    }

    double working_scale() const noexcept { return scale_; }

    FeatureBundle<T> forward(const FeaturePyramid<T>& pyr) {
        const int h = working_side(pyr.maps[0].height(), scale_);
        const int w = working_side(pyr.maps[0].width(), scale_);
        std::array<Tensor<T>, kPyramidLevels> resized;
        for (int k = 0; k < kPyramidLevels; ++k) {
            const Tensor<T>& m = pyr.maps[k];
            resamplers_[k] = Resampler<T>(m.height(), m.width(), h, w);
            resized[k] = resamplers_[k].forward(m);
            channels_[k] = m.channels();
        }
        FeatureBundle<T> b;
        b.low = concat_channels<T>({&resized[0], &resized[1], &resized[2]});
        b.high = concat_channels<T>({&resized[3], &resized[4]});
        return b;
    }

    std::array<Tensor<T>, kPyramidLevels> backward(const Tensor<T>& dlow, const Tensor<T>& dhigh) const {
        std::array<Tensor<T>, kPyramidLevels> parts;
        if (!dlow.empty()) {
            std::array<Tensor<T>*, 3> outs{&parts[0], &parts[1], &parts[2]};
            std::array<int, 3> ch{channels_[0], channels_[1], channels_[2]};
            split_channels_add<T>(dlow, outs, ch);
        }
        if (!dhigh.empty()) {
            std::array<Tensor<T>*, 2> outs{&parts[3], &parts[4]};
            std::array<int, 2> ch{channels_[3], channels_[4]};
            split_channels_add<T>(dhigh, outs, ch);
        }
        std::array<Tensor<T>, kPyramidLevels> grads;
        for (int k = 0; k < kPyramidLevels; ++k)
            if (!parts[k].empty()) grads[k] = resamplers_[k].adjoint(parts[k]);
        return grads;
    }

private:
    double scale_;
    std::array<Resampler<T>, kPyramidLevels> resamplers_{};
    std::array<int, kPyramidLevels> channels_{};
};

template <class T>
FeatureBundle<T> bundle(const FeaturePyramid<T>& pyr, double working_scale = 0.25) {
    Bundler<T> b(working_scale);
    return b.forward(pyr);
}

}  // namespace se2net
