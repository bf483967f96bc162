#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "se2net/backbone.hpp"
#include "se2net/error.hpp"
#include "se2net/layers.hpp"

namespace se2net {

/// Hidden widths of the stage heads. Defaults are the full-size layout.
struct HeadWidths {
    int first_conv = 256;   ///< three 3x3 convs at stage 1
    int first_point = 512;  ///< 1x1 conv at stage 1
    int later_conv = 128;   ///< four 7x7 convs at stages t > 1
    int later_point = 128;  ///< 1x1 conv at stages t > 1
    friend bool operator==(const HeadWidths&, const HeadWidths&) = default;
};

inline std::vector<ConvSpec> first_stage_layout(const HeadWidths& w) {
    return {{3, w.first_conv, 1}, {3, w.first_conv, 1}, {3, w.first_conv, 1}, {1, w.first_point, 0}};
}

inline std::vector<ConvSpec> later_stage_layout(const HeadWidths& w) {
    return {{7, w.later_conv, 3}, {7, w.later_conv, 3}, {7, w.later_conv, 3}, {7, w.later_conv, 3},
            {1, w.later_point, 0}};
}

struct StageConfig {
    int stages = 3;
    HeadWidths widths;
    bool edge_branch = true;  ///< false: region-only recurrence R^t = f(H, R^{t-1})
};

/// Per-stage maps at working resolution; edge_maps is empty when the edge branch is disabled.
template <class T>
struct StagePrediction {
    std::vector<Tensor<T>> edge_maps;
    std::vector<Tensor<T>> region_maps;
    int stages() const noexcept { return static_cast<int>(region_maps.size()); }
};

/// What the instrumentation hook sees for one stage.
template <class T>
struct StageTrace {
    int stage;
    const Tensor<T>* prev_edge;    ///< null at stage 1 or without edge branch
    const Tensor<T>* prev_region;  ///< null at stage 1
    const Tensor<T>* edge;
    const Tensor<T>* region;
};

template <class T>
using StageHook = std::function<void(const StageTrace<T>&)>;

/**
 * @brief Two-branch multi-stage predictor.
 *
 * Stage 1 maps L to an edge map and H to a region map. Every later stage
 * concatenates its branch features with both previous maps and predicts again.
 * The two branches never share parameters.
 */
template <class T>
class SiameseStages {
public:
    SiameseStages(int low_channels, int high_channels, StageConfig cfg)
        : cfg_(cfg), low_channels_(low_channels), high_channels_(high_channels) {
        if (cfg.stages < 1) throw ConfigError("model.stages must be >= 1");
        const int prev = cfg.edge_branch ? 2 : 1;
        for (int t = 1; t <= cfg.stages; ++t) {
            const auto layout = t == 1 ? first_stage_layout(cfg.widths) : later_stage_layout(cfg.widths);
            const std::string tag = "stage" + std::to_string(t);
            if (cfg.edge_branch) {
                edge_heads_.emplace_back(tag + ".edge", t == 1 ? low_channels : low_channels + prev, layout);
            }
            region_heads_.emplace_back(tag + ".region", t == 1 ? high_channels : high_channels + prev, layout);
        }
    }

    const StageConfig& config() const noexcept { return cfg_; }
    int stages() const noexcept { return cfg_.stages; }
    bool edge_branch() const noexcept { return cfg_.edge_branch; }

    PredictionHead<T>& edge_head(int t) { return edge_heads_.at(static_cast<std::size_t>(t - 1)); }
    PredictionHead<T>& region_head(int t) { return region_heads_.at(static_cast<std::size_t>(t - 1)); }

    void init(Rng& rng) {
        for (int t = 0; t < cfg_.stages; ++t) {
            if (cfg_.edge_branch) edge_heads_[t].init(rng);
            region_heads_[t].init(rng);
        }
    }

    void collect(ParamSet<T>& set) {
        for (auto& h : edge_heads_) h.collect(set);
        for (auto& h : region_heads_) h.collect(set);
    }

    /// Stage 1: edge from low-level features, region from high-level features.
    std::pair<Tensor<T>, Tensor<T>> run_stage1(const FeatureBundle<T>& b, Mode mode) {
        check_bundle(b);
        Tensor<T> edge;
        if (cfg_.edge_branch) edge = edge_heads_[0].forward(b.low, mode);
        Tensor<T> region = region_heads_[0].forward(b.high, mode);
        return {std::move(edge), std::move(region)};
    }

    /// Stage t >= 2 from the branch features and the stage t-1 maps (post-sigmoid).
    std::pair<Tensor<T>, Tensor<T>> run_stage(int t, const FeatureBundle<T>& b, const Tensor<T>& prev_edge,
                                              const Tensor<T>& prev_region, Mode mode) {
        if (t < 2 || t > cfg_.stages) {
            throw ConfigError("stage index " + std::to_string(t) + " outside [2, " + std::to_string(cfg_.stages) + "]");
        }
        check_bundle(b);
        const auto k = static_cast<std::size_t>(t - 1);
        Tensor<T> edge;
        if (cfg_.edge_branch) {
            edge = edge_heads_[k].forward(concat_channels<T>({&b.low, &prev_edge, &prev_region}), mode);
        }
        Tensor<T> region = cfg_.edge_branch
                               ? region_heads_[k].forward(concat_channels<T>({&b.high, &prev_edge, &prev_region}), mode)
                               : region_heads_[k].forward(concat_channels<T>({&b.high, &prev_region}), mode);
        return {std::move(edge), std::move(region)};
    }

    StagePrediction<T> forward_all(const FeatureBundle<T>& b, Mode mode, const StageHook<T>& hook = {}) {
        StagePrediction<T> out;
        auto [e1, r1] = run_stage1(b, mode);
        if (hook) hook({1, nullptr, nullptr, cfg_.edge_branch ? &e1 : nullptr, &r1});
        if (cfg_.edge_branch) out.edge_maps.push_back(std::move(e1));
        out.region_maps.push_back(std::move(r1));
        for (int t = 2; t <= cfg_.stages; ++t) {
            const Tensor<T> empty;
            const Tensor<T>& pe = cfg_.edge_branch ? out.edge_maps.back() : empty;
            const Tensor<T>& pr = out.region_maps.back();
            auto [e, r] = run_stage(t, b, pe, pr, mode);
            if (hook) hook({t, cfg_.edge_branch ? &pe : nullptr, &pr, cfg_.edge_branch ? &e : nullptr, &r});
            if (cfg_.edge_branch) out.edge_maps.push_back(std::move(e));
            out.region_maps.push_back(std::move(r));
        }
        return out;
    }

    /**
     * @brief Backpropagates per-stage map gradients (index t-1; empty = zero)
     * through all heads. Returns gradients w.r.t. the low and high features.
     */
    std::pair<Tensor<T>, Tensor<T>> backward(std::vector<Tensor<T>> d_edge, std::vector<Tensor<T>> d_region) {
        const auto T_ = static_cast<std::size_t>(cfg_.stages);
        d_edge.resize(T_);
        d_region.resize(T_);
        Tensor<T> dlow, dhigh;
        for (int t = cfg_.stages; t >= 2; --t) {
            const auto k = static_cast<std::size_t>(t - 1);
            if (cfg_.edge_branch && !d_edge[k].empty()) {
                Tensor<T> g = edge_heads_[k].backward(d_edge[k]);
                std::array<Tensor<T>*, 3> outs{&dlow, &d_edge[k - 1], &d_region[k - 1]};
                std::array<int, 3> ch{low_channels_, 1, 1};
                split_channels_add<T>(g, outs, ch);
            }
            if (!d_region[k].empty()) {
                Tensor<T> g = region_heads_[k].backward(d_region[k]);
                if (cfg_.edge_branch) {
                    std::array<Tensor<T>*, 3> outs{&dhigh, &d_edge[k - 1], &d_region[k - 1]};
                    std::array<int, 3> ch{high_channels_, 1, 1};
                    split_channels_add<T>(g, outs, ch);
                } else {
                    std::array<Tensor<T>*, 2> outs{&dhigh, &d_region[k - 1]};
                    std::array<int, 2> ch{high_channels_, 1};
                    split_channels_add<T>(g, outs, ch);
                }
            }
        }
        if (cfg_.edge_branch && !d_edge[0].empty()) accumulate(dlow, edge_heads_[0].backward(d_edge[0]));
        if (!d_region[0].empty()) accumulate(dhigh, region_heads_[0].backward(d_region[0]));
        return {std::move(dlow), std::move(dhigh)};
    }

private:
    void check_bundle(const FeatureBundle<T>& b) const {
        if (b.low.channels() != low_channels_ || b.high.channels() != high_channels_) {
            throw ConfigError("bundle channels (" + std::to_string(b.low.channels()) + ", " +
                              std::to_string(b.high.channels()) + ") do not match head input widths (" +
                              std::to_string(low_channels_) + ", " + std::to_string(high_channels_) + ")");
        }
    }

    StageConfig cfg_;
    int low_channels_;
    int high_channels_;
    std::vector<PredictionHead<T>> edge_heads_;
    std::vector<PredictionHead<T>> region_heads_;
};

}  // namespace se2net
