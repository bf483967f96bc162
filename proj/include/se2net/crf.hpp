#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <vector>

#include "se2net/error.hpp"
#include "se2net/grid.hpp"
#include "se2net/resample.hpp"

namespace se2net {

/**
 * @brief Fully connected two-label CRF with Potts compatibility.
 *
 * Pairwise kernel between pixels i and j:
 *   w_appearance * exp(-|p_i - p_j|^2 / 2 theta_alpha^2 - |I_i - I_j|^2 / 2 theta_beta^2)
 * + w_spatial    * exp(-|p_i - p_j|^2 / 2 theta_gamma^2)
 * with positions in pixels and colours on a 0..255 scale.
 */
struct CrfConfig {
    double w_appearance = 3.0;
    double w_spatial = 1.0;
    double theta_alpha = 30.0;
    double theta_beta = 13.0;
    double theta_gamma = 3.0;
    int iterations = 5;
    int max_side = 128;  ///< larger inputs are refined on a downsampled grid
};

inline void validate(const CrfConfig& c) {
    if (c.iterations < 0) throw ConfigError("crf iterations must be >= 0");
    if (c.w_appearance < 0 || c.w_spatial < 0) throw ConfigError("crf weights must be >= 0");
    if (!(c.theta_alpha > 0 && c.theta_beta > 0 && c.theta_gamma > 0)) throw ConfigError("crf bandwidths must be > 0");
    if (c.max_side < 1) throw ConfigError("crf max_side must be >= 1");
}

namespace detail {

inline Map clamp_probabilities(const Map& prob) {
    Map p = prob;
    bool warned = false;
    for (double& v : p.values()) {
        if (v < 0.0 || v > 1.0 || std::isnan(v)) {
            if (!warned) {
                std::cerr << "warning: crf input probability outside [0,1], clamping\n";
                warned = true;
            }
            v = std::isnan(v) ? 0.5 : std::clamp(v, 0.0, 1.0);
        }
    }
    return p;
}

/// Naive O(N^2) synchronous mean-field updates.
inline Map mean_field(const Image& image, const Map& prob, const CrfConfig& cfg) {
    const int h = prob.height(), w = prob.width();
    const std::size_t n = prob.size();
    const int nc = image.channels();

    std::vector<double> ey_a(static_cast<std::size_t>(h)), ex_a(static_cast<std::size_t>(w));
    std::vector<double> ey_s(static_cast<std::size_t>(h)), ex_s(static_cast<std::size_t>(w));
    for (int d = 0; d < h; ++d) {
        ey_a[d] = std::exp(-double(d) * d / (2 * cfg.theta_alpha * cfg.theta_alpha));
        ey_s[d] = std::exp(-double(d) * d / (2 * cfg.theta_gamma * cfg.theta_gamma));
    }
    for (int d = 0; d < w; ++d) {
        ex_a[d] = std::exp(-double(d) * d / (2 * cfg.theta_alpha * cfg.theta_alpha));
        ex_s[d] = std::exp(-double(d) * d / (2 * cfg.theta_gamma * cfg.theta_gamma));
    }
    const double color_scale = 255.0 * 255.0 / (2 * cfg.theta_beta * cfg.theta_beta);

    auto kernel = [&](std::size_t i, std::size_t j) {
        const int yi = static_cast<int>(i) / w, xi = static_cast<int>(i) % w;
        const int yj = static_cast<int>(j) / w, xj = static_cast<int>(j) % w;
        const int dy = std::abs(yi - yj), dx = std::abs(xi - xj);
        double c2 = 0.0;
        for (int c = 0; c < nc; ++c) {
            const double d = static_cast<double>(image(yi, xi, c)) - image(yj, xj, c);
            c2 += d * d;
        }
        return cfg.w_appearance * ey_a[dy] * ex_a[dx] * std::exp(-c2 * color_scale) + cfg.w_spatial * ey_s[dy] * ex_s[dx];
    };

    constexpr double eps = 1e-12;
    std::vector<double> log_fg(n), log_bg(n), q(n), total(n, 0.0), agree(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(prob.data()[i], eps, 1.0 - eps);
        log_fg[i] = std::log(p);
        log_bg[i] = std::log(1.0 - p);
        q[i] = prob.data()[i];
    }
    for (int it = 0; it < cfg.iterations; ++it) {
        std::fill(agree.begin(), agree.end(), 0.0);
        const bool first = it == 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double k = kernel(i, j);
                agree[i] += k * q[j];
                agree[j] += k * q[i];
                if (first) {
                    total[i] += k;
                    total[j] += k;
                }
            }
        // Potts: penalty for label fg is the mass of neighbours labelled bg, and vice versa.
        for (std::size_t i = 0; i < n; ++i) {
            const double a = log_fg[i] - (total[i] - agree[i]);
            const double b = log_bg[i] - agree[i];
            q[i] = 1.0 / (1.0 + std::exp(b - a));
        }
    }
    Map out(h, w);
    std::copy(q.begin(), q.end(), out.data());
    return out;
}

}  // namespace detail

/**
 * @brief Mean-field refinement of a foreground probability map; returns the
 * foreground marginal. Unary terms are -log p and -log(1 - p).
 */
inline Map crf_refine(const Image& image, const Map& prob, const CrfConfig& cfg = {}) {
    validate(cfg);
    require_same_extent(image, prob, "crf_refine");
    Map p = detail::clamp_probabilities(prob);
    if (cfg.iterations == 0 || (cfg.w_appearance == 0.0 && cfg.w_spatial == 0.0)) return p;

    const int side = std::max(p.height(), p.width());
    if (side <= cfg.max_side) return detail::mean_field(image, p, cfg);

    const double f = static_cast<double>(cfg.max_side) / side;
    const int h = std::max(1, static_cast<int>(std::lround(p.height() * f)));
    const int w = std::max(1, static_cast<int>(std::lround(p.width() * f)));
    Map small = detail::mean_field(resize_bilinear(image, h, w), resize_bilinear(p, h, w), cfg);
    return resize_bilinear(small, p.height(), p.width());
}

}  // namespace se2net
