#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "se2net/error.hpp"
#include "se2net/grid.hpp"

namespace se2net {

/// Truncated Gaussian neighbourhood weighting: std-dev `sigma`, radius `rho` in pixels.
struct KernelSpec {
    double sigma = 0.01;
    int rho = 3;
};

inline void validate(const KernelSpec& spec) {
    if (!(spec.sigma > 0.0)) throw ConfigError("loss.sigma must be > 0");
    if (spec.rho < 0) throw ConfigError("loss.rho must be >= 0");
}

/// K(d) = exp(-|d|^2 / (2 sigma^2)) / (sqrt(2 pi) sigma) for |d| <= rho, else 0.
inline double kernel_value(double dist2, const KernelSpec& spec) {
    if (dist2 > static_cast<double>(spec.rho) * spec.rho) return 0.0;
    return std::exp(-dist2 / (2.0 * spec.sigma * spec.sigma)) / (std::sqrt(2.0 * std::numbers::pi) * spec.sigma);
}

/// (2 rho + 1)^2 stencil of kernel weights indexed by offset (dy + rho, dx + rho).
inline Map kernel_weights(const KernelSpec& spec) {
    validate(spec);
    const int side = 2 * spec.rho + 1;
    Map k(side, side);
    for (int dy = -spec.rho; dy <= spec.rho; ++dy)
        for (int dx = -spec.rho; dx <= spec.rho; ++dx)
            k(dy + spec.rho, dx + spec.rho) = kernel_value(static_cast<double>(dy * dy + dx * dx), spec);
    return k;
}

/**
 * @brief Neighbourhood-weighted squared error between a prediction and its label.
 *
 *   L = sum_x sum_{y in N(x)} K(x - y) (pred(x) - gt(y))^2
 *
 * Neighbourhoods are clipped at the borders. Offsets whose weight is exactly
 * zero (outside the radius, or underflowed for small sigma) are dropped once
 * when the stencil is built.
 */
class WeightedL2 {
public:
    explicit WeightedL2(const KernelSpec& spec) : spec_(spec) {
        const Map k = kernel_weights(spec);
        for (int dy = -spec.rho; dy <= spec.rho; ++dy)
            for (int dx = -spec.rho; dx <= spec.rho; ++dx) {
                const double w = k(dy + spec.rho, dx + spec.rho);
                if (w != 0.0) taps_.push_back({dy, dx, w});
            }
    }

    const KernelSpec& spec() const noexcept { return spec_; }
    std::size_t active_taps() const noexcept { return taps_.size(); }

    double value(const Map& pred, const Map& gt) const { return evaluate(pred, gt, nullptr); }

    /// dL/dpred(x) = 2 sum_{y in N(x)} K(x - y) (pred(x) - gt(y)).
    Map gradient(const Map& pred, const Map& gt) const {
        Map g(pred.height(), pred.width());
        evaluate(pred, gt, &g);
        return g;
    }

    double value_and_gradient(const Map& pred, const Map& gt, Map& grad) const {
        grad = Map(pred.height(), pred.width());
        return evaluate(pred, gt, &grad);
    }

private:
    struct Tap {
        int dy, dx;
        double w;
    };

    double evaluate(const Map& pred, const Map& gt, Map* grad) const {
        require_same_extent(pred, gt, "weighted_l2");
        const int h = pred.height(), w = pred.width();
        double total = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double p = pred(y, x);
                double value = 0.0, slope = 0.0;
                for (const Tap& t : taps_) {
                    const int yy = y + t.dy, xx = x + t.dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    const double d = p - gt(yy, xx);
                    value += t.w * d * d;
                    slope += t.w * d;
                }
                total += value;
                if (grad) (*grad)(y, x) = 2.0 * slope;
            }
        return total;
    }

    KernelSpec spec_;
    std::vector<Tap> taps_;
};

inline double weighted_l2(const Map& pred, const Map& gt, const KernelSpec& spec) {
    return WeightedL2(spec).value(pred, gt);
}

inline Map gradient(const Map& pred, const Map& gt, const KernelSpec& spec) {
    return WeightedL2(spec).gradient(pred, gt);
}

/// Maps of one sample at label resolution; index 0 is the fused output, 1..T the stages.
struct SampleMaps {
    std::vector<Map> edge;  ///< empty when the edge branch is disabled
    std::vector<Map> region;
};

struct LabelPair {
    const Map* edge;
    const Map* region;
};

/**
 * @brief Per-sample, per-stage loss terms and their average
 *   J = 1 / (N (T + 1)) sum_i sum_{t=0..T} (E_i^t + R_i^t).
 */
struct LossReport {
    int stages = 0;
    std::vector<std::vector<double>> edge;    ///< [sample][t], t = 0..T
    std::vector<std::vector<double>> region;  ///< [sample][t]
    double total = 0.0;

    int samples() const noexcept { return static_cast<int>(region.size()); }

    /// J recomputed from the stored terms in the canonical summation order.
    double recompute() const {
        double sum = 0.0;
        for (std::size_t i = 0; i < region.size(); ++i)
            for (int t = 0; t <= stages; ++t) sum += edge[i][t] + region[i][t];
        return sum / (static_cast<double>(region.size()) * (stages + 1));
    }

    /// Batch mean of E^t.
    double edge_mean(int t) const {
        double s = 0.0;
        for (const auto& e : edge) s += e[static_cast<std::size_t>(t)];
        return edge.empty() ? 0.0 : s / static_cast<double>(edge.size());
    }
    double region_mean(int t) const {
        double s = 0.0;
        for (const auto& r : region) s += r[static_cast<std::size_t>(t)];
        return region.empty() ? 0.0 : s / static_cast<double>(region.size());
    }
};

/**
 * @brief Evaluates the overall objective. When `grads` is non-null it receives
 * dJ/d(map) for every map in `preds`, already scaled by 1 / (N (T + 1)).
 */
inline LossReport total_objective(std::span<const SampleMaps> preds, std::span<const LabelPair> labels,
                                  const KernelSpec& spec, int stages, std::vector<SampleMaps>* grads = nullptr) {
    if (preds.size() != labels.size()) throw ShapeError("total_objective: prediction/label count mismatch");
    if (preds.empty()) throw ShapeError("total_objective: empty batch");
    const WeightedL2 loss(spec);
    LossReport rep;
    rep.stages = stages;
    const double norm = 1.0 / (static_cast<double>(preds.size()) * (stages + 1));
    if (grads) grads->assign(preds.size(), SampleMaps{});
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const SampleMaps& p = preds[i];
        if (static_cast<int>(p.region.size()) != stages + 1 ||
            (!p.edge.empty() && static_cast<int>(p.edge.size()) != stages + 1)) {
            throw ShapeError("total_objective: expected T + 1 maps per branch");
        }
        std::vector<double> e(static_cast<std::size_t>(stages + 1), 0.0), r(e.size(), 0.0);
        for (int t = 0; t <= stages; ++t) {
            const auto k = static_cast<std::size_t>(t);
            Map g;
            if (!p.edge.empty()) {
                e[k] = loss.value_and_gradient(p.edge[k], *labels[i].edge, g);
                if (grads) {
                    for (double& v : g.values()) v *= norm;
                    (*grads)[i].edge.push_back(std::move(g));
                }
            }
            r[k] = loss.value_and_gradient(p.region[k], *labels[i].region, g);
            if (grads) {
                for (double& v : g.values()) v *= norm;
                (*grads)[i].region.push_back(std::move(g));
            }
        }
        rep.edge.push_back(std::move(e));
        rep.region.push_back(std::move(r));
    }
    rep.total = rep.recompute();
    return rep;
}

}  // namespace se2net
