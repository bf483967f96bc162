#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "se2net/config.hpp"
#include "se2net/io.hpp"
#include "se2net/metrics.hpp"
#include "se2net/refine.hpp"
#include "se2net/trainer.hpp"

namespace se2net {

/// Loads the train or test split named by the configuration.
inline std::vector<ImageSample> load_split(const DataConfig& d, const std::string& split,
                                           std::vector<std::string>* skipped = nullptr) {
    if (d.source == "synth") {
        return split == "train" ? synth_shapes(d.synth_count, d.synth_size, d.synth_seed)
                                : synth_shapes(d.synth_test_count, d.synth_size, d.synth_test_seed);
    }
    DatasetManifest m;
    m.image_root = d.image_root;
    m.mask_root = d.mask_root;
    m.image_ext = d.image_ext;
    m.split = split;
    const auto path = split == "train" ? d.train_manifest : d.test_manifest;
    if (path.empty()) throw ConfigError("no manifest configured for split '" + split + "'");
    m.ids = read_id_list(path);
    std::vector<ImageSample> out;
    for (const auto& id : m.ids) {
        if (!fs::exists(m.image_path(id)) || !fs::exists(m.mask_path(id))) {
            if (!skipped) throw IoError("missing files for sample '" + id + "'");
            std::cerr << "warning: skipping '" << id << "': missing image or mask\n";
            skipped->push_back(id);
            continue;
        }
        out.push_back(load_sample(m, id));
    }
    return out;
}

/// Inference result for one image, everything at input resolution.
struct InferenceOutput {
    Map edge;    ///< fused edge map; empty without edge branch
    Map region;  ///< fused region map
    std::vector<Map> stage_edges;
    std::vector<Map> stage_regions;
    std::optional<Mask> refined;  ///< present when CRF or the edge filter is enabled
};

inline bool refinement_enabled(const RefineConfig& r) { return r.use_crf || r.edge_filter; }

inline InferenceOutput infer_image(Model& model, const Image& image, const RefineConfig& refine) {
    if (image.height() < kMinInputSide || image.width() < kMinInputSide) {
        throw ShapeError("image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                         " below backbone minimum " + std::to_string(kMinInputSide));
    }
    const Prediction<float> pred = model.forward(to_tensor<float>(image), Mode::eval);
    const auto maps = label_resolution_maps(pred, image.height(), image.width());
    InferenceOutput out;
    const SampleMaps& s = maps.front();
    out.region = s.region[0];
    out.stage_regions.assign(s.region.begin() + 1, s.region.end());
    if (!s.edge.empty()) {
        out.edge = s.edge[0];
        out.stage_edges.assign(s.edge.begin() + 1, s.edge.end());
    }
    if (refinement_enabled(refine)) {
        RefineConfig r = refine;
        if (out.edge.empty()) r.edge_filter = false;
        const Map& edge = out.edge.empty() ? out.region : out.edge;
        out.refined = edge_guided_refine(image, edge, out.region, r).mask;
    }
    return out;
}

/// Writes `<id>_edge.png`, `<id>_region.png` and, when refined, `<id>_refined.png`.
inline void write_inference(const fs::path& dir, const std::string& id, const InferenceOutput& out) {
    if (!out.edge.empty()) save_map(dir / (id + "_edge.png"), out.edge);
    save_map(dir / (id + "_region.png"), out.region);
    if (out.refined) save_mask(dir / (id + "_refined.png"), *out.refined);
}

struct EvalReport {
    std::optional<MetricsReport> edges;
    MetricsReport regions;
    std::optional<MetricsReport> refined;
    std::vector<MetricsReport> stage_regions;  ///< t = 1..T
    std::size_t skipped = 0;
};

inline EvalReport evaluate(Model& model, const std::vector<ImageSample>& samples, const RefineConfig& refine,
                           double beta2 = kDefaultBeta2) {
    MetricsAccumulator edges(beta2), regions(beta2), refined(beta2);
    std::vector<MetricsAccumulator> stages(static_cast<std::size_t>(model.config().stages), MetricsAccumulator(beta2));
    for (const auto& s : samples) {
        const InferenceOutput out = infer_image(model, s.image, refine);
        if (!out.edge.empty()) edges.add(s.id, out.edge, s.edge_gt);
        regions.add(s.id, out.region, s.region_gt);
        for (std::size_t t = 0; t < out.stage_regions.size(); ++t) stages[t].add(s.id, out.stage_regions[t], s.region_gt);
        if (out.refined) refined.add(s.id, to_map(*out.refined), s.region_gt);
    }
    EvalReport r;
    if (edges.count()) r.edges = edges.report();
    r.regions = regions.report();
    if (refined.count()) r.refined = refined.report();
    for (const auto& a : stages) r.stage_regions.push_back(a.report());
    return r;
}

inline std::string fmt_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline std::string metrics_csv_header() { return "dataset,condition,target,maxF,meanF,MAE,samples"; }

inline std::string metrics_csv_row(const std::string& dataset, const std::string& condition, const std::string& target,
                                   const MetricsReport& m) {
    return dataset + "," + condition + "," + target + "," + fmt_metric(m.max_f) + "," + fmt_metric(m.mean_sample_max_f) +
           "," + fmt_metric(m.mae) + "," + std::to_string(m.per_sample.size());
}

/// Edge row, region row and (if refinement ran) a refined-region row.
inline std::vector<std::string> eval_csv(const EvalReport& r, const std::string& dataset, const std::string& condition) {
    std::vector<std::string> lines{metrics_csv_header()};
    if (r.edges) lines.push_back(metrics_csv_row(dataset, condition, "edges", *r.edges));
    lines.push_back(metrics_csv_row(dataset, condition, "regions", r.regions));
    if (r.refined) lines.push_back(metrics_csv_row(dataset, condition, "regions_refined", *r.refined));
    return lines;
}

inline std::vector<std::string> per_sample_csv(const EvalReport& r) {
    std::vector<std::string> lines{"id,target,maxF,MAE"};
    auto add = [&](const std::string& target, const MetricsReport& m) {
        for (const auto& s : m.per_sample) lines.push_back(s.id + "," + target + "," + fmt_metric(s.max_f) + "," + fmt_metric(s.mae));
    };
    if (r.edges) add("edges", *r.edges);
    add("regions", r.regions);
    if (r.refined) add("regions_refined", *r.refined);
    return lines;
}

inline void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& l : lines) out << l << '\n';
}

struct AblationRow {
    std::string condition;
    std::string seed;   ///< seed value or "mean"
    std::string stage;  ///< "1".."T", "fused" or "refined"
    double max_f = 0.0;
    double mae = 0.0;
};

/**
 * @brief Trains and evaluates the requested condition grid:
 * stage counts (edge branch on), edge branch on/off, edge filter on/off.
 * Each condition is run for every seed and also reported as the seed mean.
 */
class Ablation {
public:
    explicit Ablation(ExperimentConfig cfg) : cfg_(std::move(cfg)) {}

    std::function<void(const std::string&)> on_progress;

    std::vector<AblationRow> run() {
        train_ = load_split(cfg_.data, "train");
        eval_ = cfg_.ablate.eval_split == "train" ? train_ : load_split(cfg_.data, "test");
        std::vector<AblationRow> rows;
        for (int stages : cfg_.ablate.stages) {
            const std::string cond = "stages=" + std::to_string(stages);
            std::vector<std::vector<AblationRow>> per_seed;
            for (int seed : cfg_.ablate.seeds) {
                const Outcome& o = outcome(stages, true, seed);
                std::vector<AblationRow> r;
                for (int t = 0; t < stages; ++t)
                    r.push_back({cond, std::to_string(seed), std::to_string(t + 1), o.stage_regions[t].max_f,
                                 o.stage_regions[t].mae});
                r.push_back({cond, std::to_string(seed), "fused", o.fused.max_f, o.fused.mae});
                per_seed.push_back(r);
            }
            append_with_mean(rows, per_seed);
        }
        const int base_stages = cfg_.model.stages;
        if (cfg_.ablate.edge_branch) {
            for (bool on : {true, false}) {
                std::vector<std::vector<AblationRow>> per_seed;
                const std::string cond = std::string("edge_branch=") + (on ? "on" : "off");
                for (int seed : cfg_.ablate.seeds) {
                    const Outcome& o = outcome(base_stages, on, seed);
                    per_seed.push_back({{cond, std::to_string(seed), "fused", o.fused.max_f, o.fused.mae}});
                }
                append_with_mean(rows, per_seed);
            }
        }
        if (cfg_.ablate.edge_filter) {
            for (bool on : {false, true}) {
                std::vector<std::vector<AblationRow>> per_seed;
                const std::string cond = std::string("edge_filter=") + (on ? "on" : "off");
                for (int seed : cfg_.ablate.seeds) {
                    const Outcome& o = outcome(base_stages, true, seed);
                    const MetricsReport& m = on ? o.filter_on : o.filter_off;
                    per_seed.push_back({{cond, std::to_string(seed), "refined", m.max_f, m.mae}});
                }
                append_with_mean(rows, per_seed);
            }
        }
        return rows;
    }

    static std::vector<std::string> csv(const std::vector<AblationRow>& rows) {
        std::vector<std::string> lines{"condition,seed,stage,maxF,MAE"};
        for (const auto& r : rows)
            lines.push_back(r.condition + "," + r.seed + "," + r.stage + "," + fmt_metric(r.max_f) + "," + fmt_metric(r.mae));
        return lines;
    }

private:
    struct Outcome {
        std::vector<MetricsReport> stage_regions;
        MetricsReport fused;
        MetricsReport filter_off;
        MetricsReport filter_on;
    };

    const Outcome& outcome(int stages, bool edge_branch, int seed) {
        const auto key = std::make_tuple(stages, edge_branch, seed);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        if (on_progress) {
            on_progress("training stages=" + std::to_string(stages) + " edge_branch=" + (edge_branch ? "on" : "off") +
                        " seed=" + std::to_string(seed));
        }
        ExperimentConfig c = cfg_;
        c.model.stages = stages;
        c.model.edge_branch = edge_branch;
        c.trainer.seed = static_cast<std::uint64_t>(seed);
        c.trainer.out_dir.clear();
        auto model = build_model(c, c.trainer.seed);
        Trainer(c).train(*model, train_);

        RefineConfig none = c.refine;
        none.use_crf = false;
        none.edge_filter = false;
        Outcome o;
        const EvalReport raw = evaluate(*model, eval_, none, c.beta2);
        o.stage_regions = raw.stage_regions;
        o.fused = raw.regions;
        if (edge_branch && cfg_.ablate.edge_filter && stages == cfg_.model.stages) {
            RefineConfig off = c.refine;
            off.edge_filter = false;
            RefineConfig on = c.refine;
            on.edge_filter = true;
            MetricsAccumulator a_off(c.beta2), a_on(c.beta2);
            for (const auto& s : eval_) {
                // one forward pass; the filter variants differ only in post-processing
                const InferenceOutput out = infer_image(*model, s.image, RefineConfig{c.refine.crf, false, false, true, 0.5});
                a_off.add(s.id, to_map(edge_guided_refine(s.image, out.edge, out.region, off).mask), s.region_gt);
                a_on.add(s.id, to_map(edge_guided_refine(s.image, out.edge, out.region, on).mask), s.region_gt);
            }
            o.filter_off = a_off.report();
            o.filter_on = a_on.report();
        }
        return cache_.emplace(key, std::move(o)).first->second;
    }

    static void append_with_mean(std::vector<AblationRow>& rows, const std::vector<std::vector<AblationRow>>& per_seed) {
        if (per_seed.empty()) return;
        for (const auto& r : per_seed) rows.insert(rows.end(), r.begin(), r.end());
        for (std::size_t k = 0; k < per_seed.front().size(); ++k) {
            AblationRow m = per_seed.front()[k];
            m.seed = "mean";
            m.max_f = 0.0;
            m.mae = 0.0;
            for (const auto& r : per_seed) {
                m.max_f += r[k].max_f;
                m.mae += r[k].mae;
            }
            m.max_f /= static_cast<double>(per_seed.size());
            m.mae /= static_cast<double>(per_seed.size());
            rows.push_back(m);
        }
    }

    ExperimentConfig cfg_;
    std::vector<ImageSample> train_, eval_;
    std::map<std::tuple<int, bool, int>, Outcome> cache_;
};

}  // namespace se2net
