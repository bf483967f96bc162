#pragma once

#include <span>
#include <string>
#include <vector>

#include "se2net/layers.hpp"

namespace se2net {

inline std::vector<ConvSpec> fusion_layout(int width = 64) { return {{3, width, 1}, {1, width, 0}}; }

/**
 * @brief Three-layer fusion of the T per-stage maps of one branch:
 * 3x3 conv, 1x1 conv (each + BN + PReLU), 1x1 conv to one channel, sigmoid.
 */
template <class T>
class FusionHead {
public:
    FusionHead(const std::string& name, int stages, int width = 64)
        : stages_(stages), head_(name, stages, fusion_layout(width)) {}

    int stages() const noexcept { return stages_; }
    PredictionHead<T>& head() noexcept { return head_; }

    void init(Rng& rng) { head_.init(rng); }
    void collect(ParamSet<T>& set) { head_.collect(set); }

    Tensor<T> forward(std::span<const Tensor<T>> maps, Mode mode) {
        if (static_cast<int>(maps.size()) != stages_) {
            throw ShapeError("fusion expects " + std::to_string(stages_) + " maps, got " + std::to_string(maps.size()));
        }
        std::vector<const Tensor<T>*> parts;
        for (const auto& m : maps) {
            if (m.channels() != 1) throw ShapeError("fusion inputs must be single-channel");
            parts.push_back(&m);
        }
        return head_.forward(concat_channels<T>(std::span<const Tensor<T>* const>(parts)), mode);
    }

    /// Gradient w.r.t. each input map, in stage order.
    std::vector<Tensor<T>> backward(const Tensor<T>& dfused) {
        Tensor<T> g = head_.backward(dfused);
        std::vector<Tensor<T>> out(static_cast<std::size_t>(stages_));
        std::vector<Tensor<T>*> outs;
        for (auto& o : out) outs.push_back(&o);
        std::vector<int> ch(static_cast<std::size_t>(stages_), 1);
        split_channels_add<T>(g, outs, ch);
        return out;
    }

private:
    int stages_;
    PredictionHead<T> head_;
};

}  // namespace se2net
