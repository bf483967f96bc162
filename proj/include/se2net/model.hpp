#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "se2net/backbone.hpp"
#include "se2net/fusion.hpp"
#include "se2net/grid.hpp"
#include "se2net/stages.hpp"

namespace se2net {

struct ModelConfig {
    std::string backbone = "tiny";
    Channels5 channels{16, 32, 64, 128, 128};
    double working_scale = 0.25;
    int stages = 3;
    HeadWidths widths;
    int fusion_width = 64;
    bool edge_branch = true;
};

/// Everything one forward pass produces, at working resolution.
template <class T>
struct Prediction {
    StagePrediction<T> stages;
    Tensor<T> fused_edge;  ///< empty without edge branch
    Tensor<T> fused_region;
};

/// Loss gradients w.r.t. each map of a Prediction; empty entries count as zero.
template <class T>
struct PredictionGrad {
    std::vector<Tensor<T>> edge;
    std::vector<Tensor<T>> region;
    Tensor<T> fused_edge;
    Tensor<T> fused_region;
};

/**
 * @brief Backbone, feature bundling, siamese stages and fusion heads, trained end to end.
 *
 * Layers cache activations for backward, so one instance serves one forward/backward
 * sequence at a time.
 */
template <class T>
class Se2Net {
public:
    Se2Net(const ModelConfig& cfg, std::uint64_t seed)
        : cfg_(cfg),
          backbone_(make_backbone<T>(cfg.backbone, cfg.channels)),
          bundler_(cfg.working_scale),
          stages_(cfg.channels[0] + cfg.channels[1] + cfg.channels[2], cfg.channels[3] + cfg.channels[4],
                  StageConfig{cfg.stages, cfg.widths, cfg.edge_branch}),
          region_fusion_("fusion.region", cfg.stages, cfg.fusion_width) {
        if (cfg.edge_branch) edge_fusion_ = std::make_unique<FusionHead<T>>("fusion.edge", cfg.stages, cfg.fusion_width);
        Rng rng(seed);
        backbone_->init(rng);
        stages_.init(rng);
        if (edge_fusion_) edge_fusion_->init(rng);
        region_fusion_.init(rng);

        backbone_->collect(params_);
        stages_.collect(params_);
        if (edge_fusion_) edge_fusion_->collect(params_);
        region_fusion_.collect(params_);
    }

    Se2Net(const Se2Net&) = delete;
    Se2Net& operator=(const Se2Net&) = delete;

    const ModelConfig& config() const noexcept { return cfg_; }
    Backbone<T>& backbone() noexcept { return *backbone_; }
    SiameseStages<T>& stages() noexcept { return stages_; }
    FusionHead<T>* edge_fusion() noexcept { return edge_fusion_.get(); }
    FusionHead<T>& region_fusion() noexcept { return region_fusion_; }
    ParamSet<T>& params() noexcept { return params_; }

    void zero_grad() {
        for (Param<T>* p : params_.params) p->zero_grad();
    }

    Prediction<T> forward(const Tensor<T>& images, Mode mode, const StageHook<T>& hook = {}) {
        FeaturePyramid<T> pyr = extract_pyramid(*backbone_, images, mode);
        FeatureBundle<T> b = bundler_.forward(pyr);
        Prediction<T> out;
        out.stages = stages_.forward_all(b, mode, hook);
        if (edge_fusion_) out.fused_edge = edge_fusion_->forward(out.stages.edge_maps, mode);
        out.fused_region = region_fusion_.forward(out.stages.region_maps, mode);
        return out;
    }

    void backward(PredictionGrad<T> g) {
        const auto T_ = static_cast<std::size_t>(cfg_.stages);
        g.edge.resize(T_);
        g.region.resize(T_);
        if (edge_fusion_ && !g.fused_edge.empty()) {
            auto d = edge_fusion_->backward(g.fused_edge);
            for (std::size_t t = 0; t < T_; ++t) accumulate(g.edge[t], d[t]);
        }
        if (!g.fused_region.empty()) {
            auto d = region_fusion_.backward(g.fused_region);
            for (std::size_t t = 0; t < T_; ++t) accumulate(g.region[t], d[t]);
        }
        auto [dlow, dhigh] = stages_.backward(std::move(g.edge), std::move(g.region));
        backbone_->backward(bundler_.backward(dlow, dhigh));
    }

private:
    ModelConfig cfg_;
    std::unique_ptr<Backbone<T>> backbone_;
    Bundler<T> bundler_;
    SiameseStages<T> stages_;
    std::unique_ptr<FusionHead<T>> edge_fusion_;
    FusionHead<T> region_fusion_;
    ParamSet<T> params_;
};

/// Stacks same-sized RGB images into an N x 3 x H x W tensor.
template <class T>
Tensor<T> to_tensor(std::span<const Image* const> images) {
    if (images.empty()) throw ShapeError("to_tensor: no images");
    const int h = images[0]->height(), w = images[0]->width();
    Tensor<T> out(static_cast<int>(images.size()), 3, h, w);
    for (int n = 0; n < out.batch(); ++n) {
        const Image& img = *images[static_cast<std::size_t>(n)];
        if (img.height() != h || img.width() != w || img.channels() != 3) throw ShapeError("to_tensor: mixed sizes");
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) out(n, c, y, x) = static_cast<T>(img(y, x, c));
    }
    return out;
}

template <class T>
Tensor<T> to_tensor(const Image& image) {
    const Image* p = &image;
    return to_tensor<T>(std::span<const Image* const>(&p, 1));
}

template <class T>
Map plane_to_map(const Tensor<T>& t, int n, int c = 0) {
    Map m(t.height(), t.width());
    const T* p = t.plane(n, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(p[i]);
    return m;
}

}  // namespace se2net
