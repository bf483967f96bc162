#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "se2net/error.hpp"
#include "se2net/grid.hpp"

namespace se2net {

inline constexpr int kThresholds = 256;
inline constexpr double kDefaultBeta2 = 0.3;

/// Precision/recall/F over the thresholds k/255, k = 0..255 (binarize with pred >= k/255).
struct PrCurve {
    std::array<double, kThresholds> precision{};
    std::array<double, kThresholds> recall{};
    std::array<double, kThresholds> f{};
    double max_f = 0.0;
};

inline double threshold_value(int k) { return static_cast<double>(k) / 255.0; }

/// F = (1 + b2) P R / (b2 P + R), 0 when the denominator vanishes.
inline double f_score(double precision, double recall, double beta2) {
    const double den = beta2 * precision + recall;
    return den > 0.0 ? (1.0 + beta2) * precision * recall / den : 0.0;
}

inline void finish_curve(PrCurve& c, double beta2) {
    c.max_f = 0.0;
    for (int k = 0; k < kThresholds; ++k) {
        c.f[k] = f_score(c.precision[k], c.recall[k], beta2);
        c.max_f = std::max(c.max_f, c.f[k]);
    }
}

/// Largest k with k/255 <= v, or -1 when v < 0.
inline int highest_passed_threshold(double v) {
    int k = static_cast<int>(std::floor(v * 255.0));
    k = std::clamp(k, -1, kThresholds - 1);
    while (k + 1 < kThresholds && threshold_value(k + 1) <= v) ++k;
    while (k >= 0 && threshold_value(k) > v) --k;
    return k;
}

/**
 * @brief F-measure curve of a saliency map against a binary label.
 *
 * Precision is 1 when nothing is predicted positive; recall is 0 when the
 * label is empty.
 */
inline PrCurve f_measure(const Map& pred, const Mask& gt, double beta2 = kDefaultBeta2) {
    require_same_extent(pred, gt, "f_measure");
    if (!is_binary(gt)) throw ShapeError("f_measure: ground truth must be binary");
    // hist[k]: pixels whose highest passed threshold is k
    std::array<long long, kThresholds> pos{}, neg{};
    long long gt_pos = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int k = highest_passed_threshold(pred.data()[i]);
        const bool label = gt.data()[i] != 0;
        gt_pos += label;
        if (k < 0) continue;
        (label ? pos : neg)[k]++;
    }
    PrCurve c;
    long long tp = 0, fp = 0;
    for (int k = kThresholds - 1; k >= 0; --k) {
        tp += pos[k];
        fp += neg[k];
        c.precision[k] = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
        c.recall[k] = gt_pos > 0 ? static_cast<double>(tp) / static_cast<double>(gt_pos) : 0.0;
    }
    finish_curve(c, beta2);
    return c;
}

inline double mae(const Map& pred, const Mask& gt) {
    require_same_extent(pred, gt, "mae");
    if (pred.size() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred.data()[i] - (gt.data()[i] ? 1.0 : 0.0));
    return s / static_cast<double>(pred.size());
}

struct SampleScore {
    std::string id;
    double max_f = 0.0;
    double mae = 0.0;
};

/**
 * @brief Dataset-level scores.
 *
 * `max_f` is the maximum of the dataset-mean PR curve (primary number);
 * `mean_sample_max_f` averages per-sample maxima. MAE is the per-sample mean.
 */
struct MetricsReport {
    PrCurve mean_curve;
    double max_f = 0.0;
    double mean_sample_max_f = 0.0;
    double mae = 0.0;
    std::vector<SampleScore> per_sample;
};

class MetricsAccumulator {
public:
    explicit MetricsAccumulator(double beta2 = kDefaultBeta2) : beta2_(beta2) {}

    void add(const std::string& id, const Map& pred, const Mask& gt) {
        const PrCurve c = f_measure(pred, gt, beta2_);
        const double e = mae(pred, gt);
        for (int k = 0; k < kThresholds; ++k) {
            precision_sum_[k] += c.precision[k];
            recall_sum_[k] += c.recall[k];
        }
        scores_.push_back({id, c.max_f, e});
    }

    std::size_t count() const noexcept { return scores_.size(); }

    MetricsReport report() const {
        MetricsReport r;
        r.per_sample = scores_;
        if (scores_.empty()) return r;
        const double n = static_cast<double>(scores_.size());
        for (int k = 0; k < kThresholds; ++k) {
            r.mean_curve.precision[k] = precision_sum_[k] / n;
            r.mean_curve.recall[k] = recall_sum_[k] / n;
        }
        finish_curve(r.mean_curve, beta2_);
        r.max_f = r.mean_curve.max_f;
        double f = 0.0, e = 0.0;
        for (const auto& s : scores_) {
            f += s.max_f;
            e += s.mae;
        }
        r.mean_sample_max_f = f / n;
        r.mae = e / n;
        return r;
    }

private:
    double beta2_;
    std::array<double, kThresholds> precision_sum_{};
    std::array<double, kThresholds> recall_sum_{};
    std::vector<SampleScore> scores_;
};

}  // namespace se2net
