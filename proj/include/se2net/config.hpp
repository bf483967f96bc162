#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "se2net/error.hpp"
#include "se2net/model.hpp"
#include "se2net/objective.hpp"
#include "se2net/refine.hpp"

namespace se2net {

/**
 * @brief Flat `key = value` configuration with dotted section names.
 *
 * Lines starting with '#' are comments. Later assignments win.
 */
class Config {
public:
    static Config parse(const std::string& text, const std::string& origin = "<string>") {
        Config c;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            }
            c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return c;
    }

    static Config load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path.string());
    }

    void set(const std::string& key, const std::string& value) {
        if (key.empty()) throw ConfigError("empty config key");
        values_[key] = value;
    }

    /// Applies a `key=value` override.
    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& entries() const noexcept { return values_; }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    long long get_int(const std::string& key, long long fallback) const {
        if (!has(key)) return fallback;
        const std::string v = values_.at(key);
        try {
            std::size_t used = 0;
            const long long r = std::stoll(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw ConfigError(key + ": expected integer, got '" + v + "'");
        }
    }

    double get_double(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        const std::string v = values_.at(key);
        try {
            std::size_t used = 0;
            const double r = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw ConfigError(key + ": expected number, got '" + v + "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string v = values_.at(key);
        if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "off" || v == "no") return false;
        throw ConfigError(key + ": expected boolean, got '" + v + "'");
    }

    /// Comma-separated integers.
    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const {
        if (!has(key)) return fallback;
        std::vector<int> out;
        std::stringstream ss(values_.at(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            try {
                std::size_t used = 0;
                out.push_back(std::stoi(item, &used));
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw ConfigError(key + ": expected comma-separated integers, got '" + values_.at(key) + "'");
            }
        }
        return out;
    }

    /// Sorted `key = value` lines; parse(serialize()) reproduces the config.
    std::string serialize() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

struct DataConfig {
    std::string source = "synth";  ///< "synth" or "files"
    std::filesystem::path image_root;
    std::filesystem::path mask_root;
    std::filesystem::path train_manifest;
    std::filesystem::path test_manifest;
    std::string image_ext = ".jpg";
    int synth_count = 16;
    int synth_test_count = 8;
    int synth_size = 64;
    std::uint64_t synth_seed = 7;
    std::uint64_t synth_test_seed = 1007;
};

struct TrainerConfig {
    int batch_size = 10;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double lr_decay = 0.1;
    int lr_decay_epochs = 2;  ///< 0 disables the step schedule
    int epochs = 10;
    int iterations = 0;  ///< when > 0, overrides epochs
    std::uint64_t seed = 0;
    bool augment = true;
    int crop = 300;
    int checkpoint_every = 1;  ///< epochs between checkpoints; 0 = final only
    std::filesystem::path out_dir;
};

struct AblateConfig {
    std::vector<int> stages{1, 2, 3, 4, 5};
    std::vector<int> seeds{1, 2, 3};
    bool edge_branch = true;
    bool edge_filter = true;
    std::string eval_split = "test";  ///< "test" or "train"
};

struct ExperimentConfig {
    DataConfig data;
    std::string backbone_weights;
    ModelConfig model;
    KernelSpec loss;
    TrainerConfig trainer;
    RefineConfig refine;
    AblateConfig ablate;
    double beta2 = 0.3;

    static ExperimentConfig from(const Config& c);
    Config to_config() const;
};

namespace detail {

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "data.source", "data.image_root", "data.mask_root", "data.train_manifest", "data.test_manifest",
        "data.image_ext", "data.synth.count", "data.synth.test_count", "data.synth.size", "data.synth.seed",
        "data.synth.test_seed", "backbone.name", "backbone.channels", "backbone.weights", "bundle.working_scale",
        "model.stages", "model.head_channels", "model.fusion_channels", "model.edge_branch", "loss.sigma", "loss.rho",
        "trainer.batch_size", "trainer.learning_rate", "trainer.momentum", "trainer.weight_decay", "trainer.lr_decay",
        "trainer.lr_decay_epochs", "trainer.epochs", "trainer.iterations", "trainer.seed", "trainer.augment",
        "trainer.crop", "trainer.checkpoint_every", "trainer.out_dir", "refine.crf", "refine.edge_filter",
        "refine.thin_edges", "refine.threshold", "refine.crf.w_appearance", "refine.crf.w_spatial",
        "refine.crf.theta_alpha", "refine.crf.theta_beta", "refine.crf.theta_gamma", "refine.crf.iterations",
        "refine.crf.max_side", "ablate.stages", "ablate.seeds", "ablate.edge_branch", "ablate.edge_filter",
        "ablate.eval_split", "eval.beta2"};
    return keys;
}

template <class Num>
std::string num(Num v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

inline std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from(const Config& c) {
    for (const auto& [k, v] : c.entries()) {
        if (!detail::known_keys().count(k)) throw ConfigError("unknown config key '" + k + "'");
    }
    ExperimentConfig e;
    auto& d = e.data;
    d.source = c.get("data.source", d.source);
    if (d.source != "synth" && d.source != "files") throw ConfigError("data.source must be 'synth' or 'files'");
    d.image_root = c.get("data.image_root", "");
    d.mask_root = c.get("data.mask_root", "");
    d.train_manifest = c.get("data.train_manifest", "");
    d.test_manifest = c.get("data.test_manifest", "");
    d.image_ext = c.get("data.image_ext", d.image_ext);
    d.synth_count = static_cast<int>(c.get_int("data.synth.count", d.synth_count));
    d.synth_test_count = static_cast<int>(c.get_int("data.synth.test_count", d.synth_test_count));
    d.synth_size = static_cast<int>(c.get_int("data.synth.size", d.synth_size));
    d.synth_seed = static_cast<std::uint64_t>(c.get_int("data.synth.seed", static_cast<long long>(d.synth_seed)));
    d.synth_test_seed =
        static_cast<std::uint64_t>(c.get_int("data.synth.test_seed", static_cast<long long>(d.synth_test_seed)));

    auto& m = e.model;
    m.backbone = c.get("backbone.name", m.backbone);
    const auto ch = c.get_int_list("backbone.channels", {m.channels.begin(), m.channels.end()});
    if (ch.size() != kPyramidLevels) throw ConfigError("backbone.channels must list 5 values");
    std::copy(ch.begin(), ch.end(), m.channels.begin());
    e.backbone_weights = c.get("backbone.weights", "");
    m.working_scale = c.get_double("bundle.working_scale", m.working_scale);
    m.stages = static_cast<int>(c.get_int("model.stages", m.stages));
    if (m.stages < 1) throw ConfigError("model.stages must be >= 1");
    const auto hc = c.get_int_list("model.head_channels", {m.widths.first_conv, m.widths.first_point,
                                                           m.widths.later_conv, m.widths.later_point});
    if (hc.size() != 4) throw ConfigError("model.head_channels must list 4 values");
    m.widths = {hc[0], hc[1], hc[2], hc[3]};
    m.fusion_width = static_cast<int>(c.get_int("model.fusion_channels", m.fusion_width));
    m.edge_branch = c.get_bool("model.edge_branch", m.edge_branch);

    e.loss.sigma = c.get_double("loss.sigma", e.loss.sigma);
    e.loss.rho = static_cast<int>(c.get_int("loss.rho", e.loss.rho));
    validate(e.loss);

    auto& t = e.trainer;
    t.batch_size = static_cast<int>(c.get_int("trainer.batch_size", t.batch_size));
    t.learning_rate = c.get_double("trainer.learning_rate", t.learning_rate);
    t.momentum = c.get_double("trainer.momentum", t.momentum);
    t.weight_decay = c.get_double("trainer.weight_decay", t.weight_decay);
    t.lr_decay = c.get_double("trainer.lr_decay", t.lr_decay);
    t.lr_decay_epochs = static_cast<int>(c.get_int("trainer.lr_decay_epochs", t.lr_decay_epochs));
    t.epochs = static_cast<int>(c.get_int("trainer.epochs", t.epochs));
    t.iterations = static_cast<int>(c.get_int("trainer.iterations", t.iterations));
    t.seed = static_cast<std::uint64_t>(c.get_int("trainer.seed", static_cast<long long>(t.seed)));
    t.augment = c.get_bool("trainer.augment", t.augment);
    t.crop = static_cast<int>(c.get_int("trainer.crop", t.crop));
    t.checkpoint_every = static_cast<int>(c.get_int("trainer.checkpoint_every", t.checkpoint_every));
    t.out_dir = c.get("trainer.out_dir", "");
    if (t.batch_size < 1) throw ConfigError("trainer.batch_size must be >= 1");
    if (t.crop < kMinInputSide) throw ConfigError("trainer.crop below backbone minimum");

    auto& r = e.refine;
    r.use_crf = c.get_bool("refine.crf", r.use_crf);
    r.edge_filter = c.get_bool("refine.edge_filter", r.edge_filter);
    r.thin_edges = c.get_bool("refine.thin_edges", r.thin_edges);
    r.threshold = c.get_double("refine.threshold", r.threshold);
    r.crf.w_appearance = c.get_double("refine.crf.w_appearance", r.crf.w_appearance);
    r.crf.w_spatial = c.get_double("refine.crf.w_spatial", r.crf.w_spatial);
    r.crf.theta_alpha = c.get_double("refine.crf.theta_alpha", r.crf.theta_alpha);
    r.crf.theta_beta = c.get_double("refine.crf.theta_beta", r.crf.theta_beta);
    r.crf.theta_gamma = c.get_double("refine.crf.theta_gamma", r.crf.theta_gamma);
    r.crf.iterations = static_cast<int>(c.get_int("refine.crf.iterations", r.crf.iterations));
    r.crf.max_side = static_cast<int>(c.get_int("refine.crf.max_side", r.crf.max_side));
    validate(r.crf);

    auto& a = e.ablate;
    a.stages = c.get_int_list("ablate.stages", a.stages);
    a.seeds = c.get_int_list("ablate.seeds", a.seeds);
    a.edge_branch = c.get_bool("ablate.edge_branch", a.edge_branch);
    a.edge_filter = c.get_bool("ablate.edge_filter", a.edge_filter);
    a.eval_split = c.get("ablate.eval_split", a.eval_split);
    if (a.eval_split != "test" && a.eval_split != "train") throw ConfigError("ablate.eval_split must be test or train");
    for (int s : a.stages)
        if (s < 1) throw ConfigError("ablate.stages entries must be >= 1");

    e.beta2 = c.get_double("eval.beta2", e.beta2);
    return e;
}

/// Fully resolved configuration, defaults included.
inline Config ExperimentConfig::to_config() const {
    using detail::num;
    Config c;
    c.set("data.source", data.source);
    c.set("data.image_root", data.image_root.string());
    c.set("data.mask_root", data.mask_root.string());
    c.set("data.train_manifest", data.train_manifest.string());
    c.set("data.test_manifest", data.test_manifest.string());
    c.set("data.image_ext", data.image_ext);
    c.set("data.synth.count", num(data.synth_count));
    c.set("data.synth.test_count", num(data.synth_test_count));
    c.set("data.synth.size", num(data.synth_size));
    c.set("data.synth.seed", num(data.synth_seed));
    c.set("data.synth.test_seed", num(data.synth_test_seed));
    c.set("backbone.name", model.backbone);
    c.set("backbone.channels", detail::join({model.channels.begin(), model.channels.end()}));
    c.set("backbone.weights", backbone_weights);
    c.set("bundle.working_scale", num(model.working_scale));
    c.set("model.stages", num(model.stages));
    c.set("model.head_channels", detail::join({model.widths.first_conv, model.widths.first_point,
                                               model.widths.later_conv, model.widths.later_point}));
    c.set("model.fusion_channels", num(model.fusion_width));
    c.set("model.edge_branch", model.edge_branch ? "true" : "false");
    c.set("loss.sigma", num(loss.sigma));
    c.set("loss.rho", num(loss.rho));
    c.set("trainer.batch_size", num(trainer.batch_size));
    c.set("trainer.learning_rate", num(trainer.learning_rate));
    c.set("trainer.momentum", num(trainer.momentum));
    c.set("trainer.weight_decay", num(trainer.weight_decay));
    c.set("trainer.lr_decay", num(trainer.lr_decay));
    c.set("trainer.lr_decay_epochs", num(trainer.lr_decay_epochs));
    c.set("trainer.epochs", num(trainer.epochs));
    c.set("trainer.iterations", num(trainer.iterations));
    c.set("trainer.seed", num(trainer.seed));
    c.set("trainer.augment", trainer.augment ? "true" : "false");
    c.set("trainer.crop", num(trainer.crop));
    c.set("trainer.checkpoint_every", num(trainer.checkpoint_every));
    c.set("trainer.out_dir", trainer.out_dir.string());
    c.set("refine.crf", refine.use_crf ? "true" : "false");
    c.set("refine.edge_filter", refine.edge_filter ? "true" : "false");
    c.set("refine.thin_edges", refine.thin_edges ? "true" : "false");
    c.set("refine.threshold", num(refine.threshold));
    c.set("refine.crf.w_appearance", num(refine.crf.w_appearance));
    c.set("refine.crf.w_spatial", num(refine.crf.w_spatial));
    c.set("refine.crf.theta_alpha", num(refine.crf.theta_alpha));
    c.set("refine.crf.theta_beta", num(refine.crf.theta_beta));
    c.set("refine.crf.theta_gamma", num(refine.crf.theta_gamma));
    c.set("refine.crf.iterations", num(refine.crf.iterations));
    c.set("refine.crf.max_side", num(refine.crf.max_side));
    c.set("ablate.stages", detail::join(ablate.stages));
    c.set("ablate.seeds", detail::join(ablate.seeds));
    c.set("ablate.edge_branch", ablate.edge_branch ? "true" : "false");
    c.set("ablate.edge_filter", ablate.edge_filter ? "true" : "false");
    c.set("ablate.eval_split", ablate.eval_split);
    c.set("eval.beta2", num(beta2));
    return c;
}

}  // namespace se2net
