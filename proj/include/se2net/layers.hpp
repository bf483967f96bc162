#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "se2net/error.hpp"
#include "se2net/random.hpp"
#include "se2net/tensor.hpp"

namespace se2net {

enum class Mode { train, eval };

/// A named learnable array together with its accumulated gradient.
template <class T>
struct Param {
    std::string name;
    std::vector<T> value;
    std::vector<T> grad;
    bool decay = true;

    Param() = default;
    Param(std::string n, std::size_t size, T fill = T{}, bool weight_decay = true)
        : name(std::move(n)), value(size, fill), grad(size, T{}), decay(weight_decay) {}

    void zero_grad() { std::fill(grad.begin(), grad.end(), T{}); }
};

/// Non-owning view over every learnable parameter and persistent buffer of a model.
template <class T>
struct ParamSet {
    std::vector<Param<T>*> params;
    std::vector<Param<T>*> buffers;  ///< running statistics: serialized, never optimized
};

/// 2-D convolution (cross-correlation) with square kernel, lowered to GEMM via im2col.
template <class T>
class Conv2d {
public:
    using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

    Conv2d() = default;
    Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride = 1, int pad = 0)
        : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(pad),
          weight_(name + ".weight", static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel),
          bias_(name + ".bias", static_cast<std::size_t>(out_channels), T{}, false) {
        if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || pad < 0) {
            throw ConfigError("conv " + name + ": invalid geometry");
        }
    }

    static int output_size(int n, int kernel, int stride, int pad) { return (n + 2 * pad - kernel) / stride + 1; }

    int in_channels() const noexcept { return in_; }
    int out_channels() const noexcept { return out_; }
    int kernel() const noexcept { return k_; }
    int stride() const noexcept { return stride_; }
    int padding() const noexcept { return pad_; }

    Param<T>& weight() noexcept { return weight_; }
    Param<T>& bias() noexcept { return bias_; }
    const Param<T>& weight() const noexcept { return weight_; }
    const Param<T>& bias() const noexcept { return bias_; }

    /// He-normal weights (std = sqrt(2 / fan_in)), zero bias.
    void init(Rng& rng) {
        const double stddev = std::sqrt(2.0 / (static_cast<double>(in_) * k_ * k_));
        for (T& w : weight_.value) w = static_cast<T>(stddev * rng.normal());
        std::fill(bias_.value.begin(), bias_.value.end(), T{});
    }

    void collect(ParamSet<T>& set) {
        set.params.push_back(&weight_);
        set.params.push_back(&bias_);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.channels() != in_) {
            throw ShapeError(weight_.name + ": expected " + std::to_string(in_) + " input channels, got " +
                             std::to_string(x.channels()));
        }
        in_h_ = x.height();
        in_w_ = x.width();
        out_h_ = output_size(in_h_, k_, stride_, pad_);
        out_w_ = output_size(in_w_, k_, stride_, pad_);
        if (out_h_ < 1 || out_w_ < 1) throw ShapeError(weight_.name + ": input smaller than kernel");
        batch_ = x.batch();

        const int K = rows();
        const int P = out_h_ * out_w_;
        Tensor<T> y(batch_, out_, out_h_, out_w_);
        Eigen::Map<const Matrix> w(weight_.value.data(), out_, K);
        Eigen::Map<const Vector> b(bias_.value.data(), out_);
        if (pointwise()) {
            input_ = x;
        } else {
            cols_.resize(static_cast<std::size_t>(batch_) * K * P);
        }
        for (int n = 0; n < batch_; ++n) {
            const T* c = pointwise() ? x.plane(n, 0) : cols_.data() + static_cast<std::size_t>(n) * K * P;
            if (!pointwise()) im2col(x.plane(n, 0), cols_.data() + static_cast<std::size_t>(n) * K * P);
            Eigen::Map<const Matrix> cm(c, K, P);
            Eigen::Map<Matrix> ym(y.plane(n, 0), out_, P);
            ym.noalias() = w * cm;
            ym.colwise() += b;
        }
        return y;
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    Tensor<T> backward(const Tensor<T>& dy) {
        if (dy.batch() != batch_ || dy.channels() != out_ || dy.height() != out_h_ || dy.width() != out_w_) {
            throw ShapeError(weight_.name + ": gradient shape does not match last forward");
        }
        const int K = rows();
        const int P = out_h_ * out_w_;
        Tensor<T> dx(batch_, in_, in_h_, in_w_);
        Eigen::Map<const Matrix> w(weight_.value.data(), out_, K);
        Eigen::Map<Matrix> dw(weight_.grad.data(), out_, K);
        Eigen::Map<Vector> db(bias_.grad.data(), out_);
        Matrix dcols;
        for (int n = 0; n < batch_; ++n) {
            const T* c = pointwise() ? input_.plane(n, 0) : cols_.data() + static_cast<std::size_t>(n) * K * P;
            Eigen::Map<const Matrix> cm(c, K, P);
            Eigen::Map<const Matrix> g(dy.plane(n, 0), out_, P);
            dw.noalias() += g * cm.transpose();
            db += g.rowwise().sum();
            if (pointwise()) {
                Eigen::Map<Matrix> dxm(dx.plane(n, 0), K, P);
                dxm.noalias() = w.transpose() * g;
            } else {
                dcols.noalias() = w.transpose() * g;
                col2im(dcols.data(), dx.plane(n, 0));
            }
        }
        return dx;
    }

private:
    bool pointwise() const noexcept { return k_ == 1 && stride_ == 1 && pad_ == 0; }
    int rows() const noexcept { return in_ * k_ * k_; }

    void im2col(const T* src, T* cols) const {
        const int P = out_h_ * out_w_;
        for (int ci = 0; ci < in_; ++ci) {
            const T* plane = src + static_cast<std::size_t>(ci) * in_h_ * in_w_;
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx) {
                    T* row = cols + (static_cast<std::size_t>(ci * k_ + ky) * k_ + kx) * P;
                    for (int oy = 0; oy < out_h_; ++oy) {
                        const int iy = oy * stride_ - pad_ + ky;
                        T* dst = row + static_cast<std::size_t>(oy) * out_w_;
                        if (iy < 0 || iy >= in_h_) {
                            std::fill_n(dst, out_w_, T{});
                            continue;
                        }
                        const T* line = plane + static_cast<std::size_t>(iy) * in_w_;
                        for (int ox = 0; ox < out_w_; ++ox) {
                            const int ix = ox * stride_ - pad_ + kx;
                            dst[ox] = (ix >= 0 && ix < in_w_) ? line[ix] : T{};
                        }
                    }
                }
        }
    }

    void col2im(const T* cols, T* dst) const {
        const int P = out_h_ * out_w_;
        for (int ci = 0; ci < in_; ++ci) {
            T* plane = dst + static_cast<std::size_t>(ci) * in_h_ * in_w_;
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx) {
                    const T* row = cols + (static_cast<std::size_t>(ci * k_ + ky) * k_ + kx) * P;
                    for (int oy = 0; oy < out_h_; ++oy) {
                        const int iy = oy * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= in_h_) continue;
                        const T* src = row + static_cast<std::size_t>(oy) * out_w_;
                        T* line = plane + static_cast<std::size_t>(iy) * in_w_;
                        for (int ox = 0; ox < out_w_; ++ox) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (ix >= 0 && ix < in_w_) line[ix] += src[ox];
                        }
                    }
                }
        }
    }

    int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
    Param<T> weight_, bias_;

    int batch_ = 0, in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
    std::vector<T> cols_;
    Tensor<T> input_;
};

/**
 * @brief Per-channel batch normalization.
 *
 * Training mode normalizes with batch statistics and updates running estimates
 * (momentum 0.1, unbiased variance); evaluation mode uses the running estimates.
 */
template <class T>
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(const std::string& name, int channels, double momentum = 0.1, double eps = 1e-5)
        : channels_(channels), momentum_(momentum), eps_(eps),
          gamma_(name + ".gamma", static_cast<std::size_t>(channels), T(1), false),
          beta_(name + ".beta", static_cast<std::size_t>(channels), T(0), false),
          running_mean_(name + ".running_mean", static_cast<std::size_t>(channels), T(0), false),
          running_var_(name + ".running_var", static_cast<std::size_t>(channels), T(1), false) {}

    void init() {
        std::fill(gamma_.value.begin(), gamma_.value.end(), T(1));
        std::fill(beta_.value.begin(), beta_.value.end(), T(0));
        std::fill(running_mean_.value.begin(), running_mean_.value.end(), T(0));
        std::fill(running_var_.value.begin(), running_var_.value.end(), T(1));
    }

    void collect(ParamSet<T>& set) {
        set.params.push_back(&gamma_);
        set.params.push_back(&beta_);
        set.buffers.push_back(&running_mean_);
        set.buffers.push_back(&running_var_);
    }

    Param<T>& gamma() noexcept { return gamma_; }
    Param<T>& beta() noexcept { return beta_; }
    Param<T>& running_mean() noexcept { return running_mean_; }
    Param<T>& running_var() noexcept { return running_var_; }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        if (x.channels() != channels_) throw ShapeError(gamma_.name + ": channel mismatch");
        mode_ = mode;
        xhat_ = Tensor<T>(x.batch(), x.channels(), x.height(), x.width());
        inv_std_.assign(static_cast<std::size_t>(channels_), T{});
        Tensor<T> y(x.batch(), x.channels(), x.height(), x.width());
        const std::size_t plane = x.plane_size();
        const double count = static_cast<double>(plane) * x.batch();
        for (int c = 0; c < channels_; ++c) {
            double mean = 0.0, var = 0.0;
            if (mode == Mode::train) {
                for (int n = 0; n < x.batch(); ++n) {
                    const T* p = x.plane(n, c);
                    for (std::size_t i = 0; i < plane; ++i) mean += p[i];
                }
                mean /= count;
                for (int n = 0; n < x.batch(); ++n) {
                    const T* p = x.plane(n, c);
                    for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
                }
                var /= count;
                const double unbiased = count > 1 ? var * count / (count - 1) : var;
                running_mean_.value[c] = static_cast<T>((1 - momentum_) * running_mean_.value[c] + momentum_ * mean);
                running_var_.value[c] = static_cast<T>((1 - momentum_) * running_var_.value[c] + momentum_ * unbiased);
            } else {
                mean = running_mean_.value[c];
                var = running_var_.value[c];
            }
            const double inv = 1.0 / std::sqrt(var + eps_);
            inv_std_[c] = static_cast<T>(inv);
            const T g = gamma_.value[c], b = beta_.value[c];
            for (int n = 0; n < x.batch(); ++n) {
                const T* p = x.plane(n, c);
                T* h = xhat_.plane(n, c);
                T* o = y.plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) {
                    h[i] = static_cast<T>((p[i] - mean) * inv);
                    o[i] = g * h[i] + b;
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        if (!dy.same_shape(xhat_)) throw ShapeError(gamma_.name + ": gradient shape does not match last forward");
        Tensor<T> dx(dy.batch(), dy.channels(), dy.height(), dy.width());
        const std::size_t plane = dy.plane_size();
        const double count = static_cast<double>(plane) * dy.batch();
        for (int c = 0; c < channels_; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int n = 0; n < dy.batch(); ++n) {
                const T* g = dy.plane(n, c);
                const T* h = xhat_.plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_dy += g[i];
                    sum_dy_xhat += static_cast<double>(g[i]) * h[i];
                }
            }
            gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
            beta_.grad[c] += static_cast<T>(sum_dy);
            const double scale = static_cast<double>(gamma_.value[c]) * inv_std_[c];
            for (int n = 0; n < dy.batch(); ++n) {
                const T* g = dy.plane(n, c);
                const T* h = xhat_.plane(n, c);
                T* d = dx.plane(n, c);
                if (mode_ == Mode::train) {
                    for (std::size_t i = 0; i < plane; ++i) {
                        d[i] = static_cast<T>(scale / count * (count * g[i] - sum_dy - h[i] * sum_dy_xhat));
                    }
                } else {
                    for (std::size_t i = 0; i < plane; ++i) d[i] = static_cast<T>(scale * g[i]);
                }
            }
        }
        return dx;
    }

private:
    int channels_ = 0;
    double momentum_ = 0.1;
    double eps_ = 1e-5;
    Param<T> gamma_, beta_, running_mean_, running_var_;

    Mode mode_ = Mode::eval;
    Tensor<T> xhat_;
    std::vector<T> inv_std_;
};

/// Parametric ReLU with one learnable slope per channel (initial slope 0.25).
template <class T>
class PReLU {
public:
    PReLU() = default;
    PReLU(const std::string& name, int channels)
        : slope_(name + ".slope", static_cast<std::size_t>(channels), T(0.25), false) {}

    void init() { std::fill(slope_.value.begin(), slope_.value.end(), T(0.25)); }
    void collect(ParamSet<T>& set) { set.params.push_back(&slope_); }
    Param<T>& slope() noexcept { return slope_; }

    Tensor<T> forward(const Tensor<T>& x) {
        input_ = x;
        Tensor<T> y(x.batch(), x.channels(), x.height(), x.width());
        const std::size_t plane = x.plane_size();
        for (int n = 0; n < x.batch(); ++n)
            for (int c = 0; c < x.channels(); ++c) {
                const T a = slope_.value[c];
                const T* p = x.plane(n, c);
                T* o = y.plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) o[i] = p[i] > T(0) ? p[i] : a * p[i];
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(dy.batch(), dy.channels(), dy.height(), dy.width());
        const std::size_t plane = dy.plane_size();
        for (int c = 0; c < dy.channels(); ++c) {
            const T a = slope_.value[c];
            double da = 0.0;
            for (int n = 0; n < dy.batch(); ++n) {
                const T* p = input_.plane(n, c);
                const T* g = dy.plane(n, c);
                T* d = dx.plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) {
                    if (p[i] > T(0)) {
                        d[i] = g[i];
                    } else {
                        d[i] = a * g[i];
                        da += static_cast<double>(g[i]) * p[i];
                    }
                }
            }
            slope_.grad[c] += static_cast<T>(da);
        }
        return dx;
    }

private:
    Param<T> slope_;
    Tensor<T> input_;
};

/// Logistic function, kept strictly inside (0,1) at the precision of T.
template <class T>
class Sigmoid {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        constexpr T lo = std::numeric_limits<T>::min();
        constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / 2;
        output_ = x;
        for (T& v : output_.values())
            v = std::clamp(static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v)))), lo, hi);
        return output_;
    }

    Tensor<T> backward(const Tensor<T>& dy) const {
        Tensor<T> dx = dy;
        auto y = output_.values();
        auto d = dx.values();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (T(1) - y[i]);
        return dx;
    }

private:
    Tensor<T> output_;
};

/// Conv + BN + PReLU.
template <class T>
class ConvBlock {
public:
    ConvBlock() = default;
    ConvBlock(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int pad)
        : conv_(name + ".conv", in_channels, out_channels, kernel, stride, pad),
          bn_(name + ".bn", out_channels),
          act_(name + ".prelu", out_channels) {}

    void init(Rng& rng) {
        conv_.init(rng);
        bn_.init();
        act_.init();
    }

    void collect(ParamSet<T>& set) {
        conv_.collect(set);
        bn_.collect(set);
        act_.collect(set);
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) { return act_.forward(bn_.forward(conv_.forward(x), mode)); }
    Tensor<T> backward(const Tensor<T>& dy) { return conv_.backward(bn_.backward(act_.backward(dy))); }

    Conv2d<T>& conv() noexcept { return conv_; }
    const Conv2d<T>& conv() const noexcept { return conv_; }
    BatchNorm2d<T>& bn() noexcept { return bn_; }
    PReLU<T>& act() noexcept { return act_; }

private:
    Conv2d<T> conv_;
    BatchNorm2d<T> bn_;
    PReLU<T> act_;
};

/// One hidden layer of a prediction head: kernel size, output width, padding.
struct ConvSpec {
    int kernel;
    int width;
    int pad;
    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/**
 * @brief Stack of ConvBlocks followed by a 1x1 conv to one channel and a sigmoid.
 *
 * Shared by the per-stage edge/region heads and by the fusion heads.
 */
template <class T>
class PredictionHead {
public:
    PredictionHead() = default;
    PredictionHead(const std::string& name, int in_channels, std::vector<ConvSpec> layout)
        : in_(in_channels), layout_(std::move(layout)) {
        int ch = in_channels;
        for (std::size_t i = 0; i < layout_.size(); ++i) {
            const ConvSpec& s = layout_[i];
            blocks_.emplace_back(name + ".block" + std::to_string(i), ch, s.width, s.kernel, 1, s.pad);
            ch = s.width;
        }
        final_ = Conv2d<T>(name + ".out", ch, 1, 1, 1, 0);
    }

    int in_channels() const noexcept { return in_; }
    const std::vector<ConvSpec>& layout() const noexcept { return layout_; }
    std::vector<ConvBlock<T>>& blocks() noexcept { return blocks_; }
    Conv2d<T>& final_conv() noexcept { return final_; }

    void init(Rng& rng) {
        for (auto& b : blocks_) b.init(rng);
        final_.init(rng);
    }

    void collect(ParamSet<T>& set) {
        for (auto& b : blocks_) b.collect(set);
        final_.collect(set);
    }

    /// Returns probabilities in (0,1).
    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        Tensor<T> h = x;
        for (auto& b : blocks_) h = b.forward(h, mode);
        return sigmoid_.forward(final_.forward(h));
    }

    /// Takes the gradient w.r.t. the probabilities; returns the gradient w.r.t. the head input.
    Tensor<T> backward(const Tensor<T>& dprob) {
        Tensor<T> g = final_.backward(sigmoid_.backward(dprob));
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
        return g;
    }

private:
    int in_ = 0;
    std::vector<ConvSpec> layout_;
    std::vector<ConvBlock<T>> blocks_;
    Conv2d<T> final_;
    Sigmoid<T> sigmoid_;
};

}  // namespace se2net
