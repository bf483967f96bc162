#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "se2net/checkpoint.hpp"
#include "se2net/config.hpp"
#include "se2net/data_pipeline.hpp"
#include "se2net/model.hpp"
#include "se2net/objective.hpp"

namespace se2net {

/// SGD with momentum and L2 weight decay: v = m v + (g + wd w); w -= lr v.
template <class T>
class SgdMomentum {
public:
    SgdMomentum(ParamSet<T>& set, double momentum, double weight_decay)
        : set_(&set), momentum_(momentum), weight_decay_(weight_decay) {
        for (Param<T>* p : set.params) velocity_.emplace_back(p->value.size(), T{});
    }

    void step(double lr) {
        for (std::size_t k = 0; k < set_->params.size(); ++k) {
            Param<T>& p = *set_->params[k];
            auto& v = velocity_[k];
            const double wd = p.decay ? weight_decay_ : 0.0;
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                v[i] = static_cast<T>(momentum_ * v[i] + p.grad[i] + wd * p.value[i]);
                p.value[i] = static_cast<T>(p.value[i] - lr * v[i]);
            }
        }
    }

    std::vector<NamedArray> state() const {
        std::vector<NamedArray> out;
        for (std::size_t k = 0; k < velocity_.size(); ++k)
            out.push_back({set_->params[k]->name, {velocity_[k].begin(), velocity_[k].end()}});
        return out;
    }

    void load_state(const std::vector<NamedArray>& stored) {
        if (stored.empty()) return;
        std::map<std::string, const NamedArray*> by_name;
        for (const auto& a : stored) by_name[a.name] = &a;
        for (std::size_t k = 0; k < velocity_.size(); ++k) {
            auto it = by_name.find(set_->params[k]->name);
            if (it == by_name.end() || it->second->values.size() != velocity_[k].size()) continue;
            for (std::size_t i = 0; i < velocity_[k].size(); ++i) velocity_[k][i] = static_cast<T>(it->second->values[i]);
        }
    }

private:
    ParamSet<T>* set_;
    double momentum_;
    double weight_decay_;
    std::vector<std::vector<T>> velocity_;
};

using Model = Se2Net<float>;

/// Builds a model from configuration, loading external backbone weights when configured.
inline std::unique_ptr<Model> build_model(const ExperimentConfig& cfg, std::uint64_t seed) {
    auto model = std::make_unique<Model>(cfg.model, seed);
    if (!cfg.backbone_weights.empty()) {
        const Checkpoint ck = Checkpoint::load(cfg.backbone_weights);
        restore(model->params().params, ck.params, "backbone.");
        restore(model->params().buffers, ck.buffers, "backbone.");
    }
    return model;
}

template <class T>
Checkpoint capture(Se2Net<T>& model, const SgdMomentum<T>* opt, const Config& config, std::uint64_t iteration) {
    Checkpoint c;
    c.iteration = iteration;
    c.config_text = config.serialize();
    c.params = snapshot(model.params().params);
    c.buffers = snapshot(model.params().buffers);
    if (opt) c.velocity = opt->state();
    return c;
}

template <class T>
void restore(Se2Net<T>& model, const Checkpoint& c) {
    restore(model.params().params, c.params);
    restore(model.params().buffers, c.buffers);
}

/// Model + configuration recovered from a checkpoint file.
struct LoadedModel {
    ExperimentConfig config;
    std::unique_ptr<Model> model;
};

inline LoadedModel load_model(const std::filesystem::path& path) {
    const Checkpoint ck = Checkpoint::load(path);
    LoadedModel m;
    m.config = ExperimentConfig::from(Config::parse(ck.config_text, path.string()));
    m.config.backbone_weights.clear();
    m.model = std::make_unique<Model>(m.config.model, 0);
    restore(*m.model, ck);
    return m;
}

/// Upsamples every map of `pred` to label resolution: index 0 fused, 1..T stages.
template <class T>
std::vector<SampleMaps> label_resolution_maps(const Prediction<T>& pred, int height, int width) {
    auto expand = [&](const Tensor<T>& t) {
        return Resampler<T>(t.height(), t.width(), height, width).forward(t);
    };
    const int n = pred.fused_region.batch();
    std::vector<SampleMaps> out(static_cast<std::size_t>(n));
    auto add = [&](const Tensor<T>& t, bool edge) {
        const Tensor<T> up = expand(t);
        for (int i = 0; i < n; ++i) (edge ? out[i].edge : out[i].region).push_back(plane_to_map(up, i));
    };
    if (!pred.fused_edge.empty()) {
        add(pred.fused_edge, true);
        for (const auto& m : pred.stages.edge_maps) add(m, true);
    }
    add(pred.fused_region, false);
    for (const auto& m : pred.stages.region_maps) add(m, false);
    return out;
}

/**
 * @brief Overall objective of one batch; optionally fills the gradient of J
 * w.r.t. every working-resolution map.
 */
template <class T>
LossReport batch_objective(const Prediction<T>& pred, std::span<const ImageSample* const> batch,
                           const KernelSpec& spec, PredictionGrad<T>* grad = nullptr) {
    const int h = batch.front()->height(), w = batch.front()->width();
    const std::vector<SampleMaps> maps = label_resolution_maps(pred, h, w);
    std::vector<Map> edges, regions;
    std::vector<LabelPair> labels;
    for (const ImageSample* s : batch) {
        edges.push_back(to_map(s->edge_gt));
        regions.push_back(to_map(s->region_gt));
    }
    for (std::size_t i = 0; i < batch.size(); ++i) labels.push_back({&edges[i], &regions[i]});
    std::vector<SampleMaps> g;
    const int stages = pred.stages.stages();
    LossReport rep = total_objective(maps, labels, spec, stages, grad ? &g : nullptr);
    if (!grad) return rep;

    const int n = static_cast<int>(batch.size());
    auto shrink = [&](const Tensor<T>& like, auto pick) {
        Tensor<T> up(n, 1, h, w);
        for (int i = 0; i < n; ++i) {
            const Map& m = pick(g[static_cast<std::size_t>(i)]);
            T* dst = up.plane(i, 0);
            for (std::size_t k = 0; k < m.size(); ++k) dst[k] = static_cast<T>(m.data()[k]);
        }
        return Resampler<T>(like.height(), like.width(), h, w).adjoint(up);
    };
    grad->edge.assign(static_cast<std::size_t>(stages), {});
    grad->region.assign(static_cast<std::size_t>(stages), {});
    if (!pred.fused_edge.empty()) {
        grad->fused_edge = shrink(pred.fused_edge, [](const SampleMaps& s) -> const Map& { return s.edge[0]; });
        for (int t = 1; t <= stages; ++t)
            grad->edge[t - 1] = shrink(pred.stages.edge_maps[t - 1],
                                       [t](const SampleMaps& s) -> const Map& { return s.edge[t]; });
    }
    grad->fused_region = shrink(pred.fused_region, [](const SampleMaps& s) -> const Map& { return s.region[0]; });
    for (int t = 1; t <= stages; ++t)
        grad->region[t - 1] = shrink(pred.stages.region_maps[t - 1],
                                     [t](const SampleMaps& s) -> const Map& { return s.region[t]; });
    return rep;
}

/// One `iter,J,E0,R0,...,ET,RT` line.
inline std::string format_log_line(long long iteration, const LossReport& r) {
    char buf[64];
    std::string line = std::to_string(iteration);
    std::snprintf(buf, sizeof buf, ",%.9g", r.total);
    line += buf;
    for (int t = 0; t <= r.stages; ++t) {
        std::snprintf(buf, sizeof buf, ",%.9g,%.9g", r.edge_mean(t), r.region_mean(t));
        line += buf;
    }
    return line;
}

inline std::string log_header(int stages) {
    std::string h = "iter,J";
    for (int t = 0; t <= stages; ++t) h += ",E" + std::to_string(t) + ",R" + std::to_string(t);
    return h;
}

struct TrainResult {
    std::vector<std::string> log;  ///< header + one line per iteration
    LossReport first;
    LossReport last;
    Checkpoint checkpoint;
};

/**
 * @brief Minimizes the overall objective with momentum SGD and a step learning-rate
 * schedule (x lr_decay every lr_decay_epochs epochs). Deterministic for a fixed seed.
 */
class Trainer {
public:
    explicit Trainer(ExperimentConfig cfg) : cfg_(std::move(cfg)) {}

    /// Called after every iteration with (iteration, report).
    std::function<void(long long, const LossReport&)> on_iteration;

    TrainResult train(Model& model, const std::vector<ImageSample>& data) {
        if (data.empty()) throw ConfigError("training set is empty");
        const TrainerConfig& tc = cfg_.trainer;
        const auto n = static_cast<long long>(data.size());
        const long long batches_per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
        const long long total = tc.iterations > 0 ? tc.iterations : static_cast<long long>(tc.epochs) * batches_per_epoch;
        // the run directory is where files go, not part of the model, so checkpoints omit it
        ExperimentConfig stored = cfg_;
        stored.trainer.out_dir.clear();
        const Config snapshot_cfg = stored.to_config();

        SgdMomentum<float> opt(model.params(), tc.momentum, tc.weight_decay);
        TrainResult result;
        result.log.push_back(log_header(cfg_.model.stages));
        std::ofstream log_file;
        if (!tc.out_dir.empty()) {
            std::filesystem::create_directories(tc.out_dir);
            log_file.open(tc.out_dir / "loss.csv");
            log_file << result.log.back() << '\n';
        }

        std::vector<std::size_t> perm;
        long long perm_epoch = -1;
        for (long long it = 0; it < total; ++it) {
            const long long first_slot = it * tc.batch_size;
            const long long epoch = first_slot / n;
            std::vector<ImageSample> batch;
            for (int b = 0; b < tc.batch_size; ++b) {
                const long long slot = first_slot + b;
                if (slot / n != perm_epoch) {
                    perm_epoch = slot / n;
                    perm = permutation(data.size(), derive_seed(tc.seed, 0x5eed, static_cast<std::uint64_t>(perm_epoch)));
                }
                const ImageSample& s = data[perm[static_cast<std::size_t>(slot % n)]];
                batch.push_back(tc.augment ? augment(s, derive_seed(tc.seed, static_cast<std::uint64_t>(slot), 1), tc.crop)
                                           : s);
            }
            std::vector<const ImageSample*> ptrs;
            std::vector<const Image*> images;
            for (const auto& s : batch) {
                ptrs.push_back(&s);
                images.push_back(&s.image);
            }

            const double lr = learning_rate(epoch);
            model.zero_grad();
            const Prediction<float> pred = model.forward(to_tensor<float>(images), Mode::train);
            PredictionGrad<float> grad;
            const LossReport rep = batch_objective(pred, ptrs, cfg_.loss, &grad);
            if (!std::isfinite(rep.total)) dump_divergence(it, batch, rep);
            model.backward(std::move(grad));
            opt.step(lr);

            if (it == 0) result.first = rep;
            result.last = rep;
            result.log.push_back(format_log_line(it, rep));
            if (log_file) log_file << result.log.back() << '\n';
            if (on_iteration) on_iteration(it, rep);

            const long long next_epoch = ((it + 1) * tc.batch_size) / n;
            if (!tc.out_dir.empty() && tc.checkpoint_every > 0 && next_epoch > epoch && next_epoch % tc.checkpoint_every == 0 &&
                it + 1 < total) {
                capture(model, &opt, snapshot_cfg, static_cast<std::uint64_t>(it + 1))
                    .save(tc.out_dir / ("epoch" + std::to_string(next_epoch) + ".ckpt"));
            }
        }
        result.checkpoint = capture(model, &opt, snapshot_cfg, static_cast<std::uint64_t>(total));
        if (!tc.out_dir.empty()) result.checkpoint.save(tc.out_dir / "final.ckpt");
        return result;
    }

    double learning_rate(long long epoch) const {
        const TrainerConfig& tc = cfg_.trainer;
        if (tc.lr_decay_epochs <= 0) return tc.learning_rate;
        return tc.learning_rate * std::pow(tc.lr_decay, static_cast<double>(epoch / tc.lr_decay_epochs));
    }

private:
    static std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        Rng rng(seed);
        for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[static_cast<std::size_t>(rng.integer(0, static_cast<int>(i - 1)))]);
        return p;
    }

    [[noreturn]] void dump_divergence(long long it, const std::vector<ImageSample>& batch, const LossReport& rep) const {
        std::string msg = "objective became non-finite at iteration " + std::to_string(it) + "; batch:";
        for (const auto& s : batch) msg += " " + s.id;
        msg += "\n" + log_header(rep.stages) + "\n" + format_log_line(it, rep);
        if (!cfg_.trainer.out_dir.empty()) {
            std::ofstream(cfg_.trainer.out_dir / "divergence.txt") << msg << '\n';
        }
        throw DivergenceError(msg);
    }

    ExperimentConfig cfg_;
};

}  // namespace se2net
