// se2net command line: make-edges | synth | train | infer | eval | ablate
#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "se2net/se2net.hpp"

namespace fs = std::filesystem;
using namespace se2net;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "config file (key = value)");
    cmd->add_option("--set", c.sets, "override key=value (repeatable)")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
}

Config load_config(const Common& c) {
    Config cfg = c.config.empty() ? Config{} : Config::load(c.config);
    for (const auto& s : c.sets) cfg.apply_override(s);
    return cfg;
}

struct RefineFlags {
    std::optional<bool> crf;
    std::optional<bool> edge_filter;
};

void add_refine_flags(CLI::App* cmd, RefineFlags& f) {
    cmd->add_flag("--crf,!--no-crf", f.crf, "dense CRF before box filtering");
    cmd->add_flag("--edge-filter,!--no-edge-filter", f.edge_filter, "edge-guided box filter");
}

RefineConfig apply(RefineConfig r, const RefineFlags& f) {
    if (f.crf) r.use_crf = *f.crf;
    if (f.edge_filter) r.edge_filter = *f.edge_filter;
    return r;
}

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

// a single file or every image in a directory, sorted for stable output
std::vector<fs::path> list_inputs(const fs::path& input) {
    if (!fs::is_directory(input)) return {input};
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(input))
        if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

// Applies config-style overrides on top of a checkpoint's stored configuration.
ExperimentConfig merge(const ExperimentConfig& base, const Common& c) {
    Config cfg = base.to_config();
    if (!c.config.empty()) {
        const Config file = Config::load(c.config);
        for (const auto& [k, v] : file.entries()) cfg.set(k, v);
    }
    for (const auto& s : c.sets) cfg.apply_override(s);
    return ExperimentConfig::from(cfg);
}

int make_edges(const fs::path& input, const fs::path& out) {
    int failed = 0;
    for (const auto& p : list_inputs(input)) {
        try {
            save_mask(out / (p.stem().string() + ".png"), make_edge_gt(load_mask(p)));
        } catch (const std::exception& e) {
            std::cerr << "error: " << p.string() << ": " << e.what() << '\n';
            ++failed;
        }
    }
    return failed ? 1 : 0;
}

int synth(const ExperimentConfig& e, const fs::path& out) {
    const auto& d = e.data;
    for (const char* split : {"train", "test"}) {
        const bool train = std::string(split) == "train";
        const auto samples = synth_shapes(train ? d.synth_count : d.synth_test_count, d.synth_size,
                                          train ? d.synth_seed : d.synth_test_seed);
        std::vector<std::string> ids;
        for (const auto& s : samples) {
            save_sample(out, s, ".png");
            ids.push_back(s.id);
        }
        write_id_list(out / (std::string(split) + ".txt"), ids);
    }
    // ready-made data section for training from the written files
    const fs::path abs = fs::absolute(out);
    write_lines(out / "data.cfg", {"data.source = files", "data.image_root = " + (abs / "images").string(),
                                   "data.mask_root = " + (abs / "masks").string(), "data.image_ext = .png",
                                   "data.train_manifest = " + (abs / "train.txt").string(),
                                   "data.test_manifest = " + (abs / "test.txt").string()});
    std::cout << "wrote " << d.synth_count << " train and " << d.synth_test_count << " test samples to " << out.string()
              << '\n';
    return 0;
}

int train(ExperimentConfig e, const std::string& out) {
    if (!out.empty()) e.trainer.out_dir = out;
    if (e.trainer.out_dir.empty()) throw ConfigError("train needs --out or trainer.out_dir");
    const auto data = load_split(e.data, "train");
    auto model = build_model(e, e.trainer.seed);
    Trainer trainer(e);
    trainer.on_iteration = [](long long it, const LossReport& r) {
        if (it % 25 == 0) std::cout << format_log_line(it, r) << std::endl;
    };
    const TrainResult res = trainer.train(*model, data);
    std::cout << res.log.back() << '\n'
              << "J " << res.first.total << " -> " << res.last.total << "; checkpoint "
              << (e.trainer.out_dir / "final.ckpt").string() << '\n';
    return 0;
}

int infer(const fs::path& checkpoint, const Common& c, const RefineFlags& flags, const fs::path& input,
          const fs::path& out) {
    LoadedModel m = load_model(checkpoint);
    const ExperimentConfig e = merge(m.config, c);
    const RefineConfig refine = apply(e.refine, flags);
    fs::create_directories(out);
    int failed = 0;
    for (const auto& p : list_inputs(input)) {
        try {
            write_inference(out, p.stem().string(), infer_image(*m.model, load_image(p), refine));
        } catch (const std::exception& err) {
            std::cerr << "error: " << p.string() << ": " << err.what() << '\n';
            ++failed;
        }
    }
    return failed ? 1 : 0;
}

int eval(const fs::path& checkpoint, const Common& c, const RefineFlags& flags, const std::string& split,
         const fs::path& out, bool per_sample) {
    LoadedModel m = load_model(checkpoint);
    const ExperimentConfig e = merge(m.config, c);
    std::vector<std::string> skipped;
    const auto samples = load_split(e.data, split, &skipped);
    if (samples.empty()) throw IoError("no samples to evaluate");
    const EvalReport r = evaluate(*m.model, samples, apply(e.refine, flags), e.beta2);
    const std::string dataset =
        e.data.source == "synth" ? "synth" : (split == "train" ? e.data.train_manifest : e.data.test_manifest).stem().string();
    const auto lines = eval_csv(r, dataset, split);
    if (out.empty()) {
        for (const auto& l : lines) std::cout << l << '\n';
    } else {
        write_lines(out, lines);
        if (per_sample) write_lines(fs::path(out).replace_extension(".samples.csv"), per_sample_csv(r));
    }
    if (!skipped.empty()) std::cerr << "skipped " << skipped.size() << " sample(s) with missing files\n";
    return 0;
}

int ablate(const ExperimentConfig& e, const fs::path& out) {
    Ablation a(e);
    a.on_progress = [](const std::string& msg) { std::cerr << msg << std::endl; };
    const auto lines = Ablation::csv(a.run());
    if (out.empty()) {
        for (const auto& l : lines) std::cout << l << '\n';
    } else {
        write_lines(out, lines);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SE2Net salient object detection"};
    app.require_subcommand(1);

    Common common;
    RefineFlags flags;
    std::string input, out, checkpoint, split = "test";
    bool per_sample = false;

    auto* edges_cmd = app.add_subcommand("make-edges", "edge ground truth from binary masks");
    edges_cmd->add_option("--input", input, "mask file or directory")->required();
    edges_cmd->add_option("--out", out, "output directory")->required();

    auto* synth_cmd = app.add_subcommand("synth", "write the synthetic shapes corpus");
    add_common(synth_cmd, common);
    synth_cmd->add_option("--out", out, "output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "train a model");
    add_common(train_cmd, common);
    train_cmd->add_option("--out", out, "run directory (loss.csv, checkpoints)");

    auto* infer_cmd = app.add_subcommand("infer", "write edge/region/refined maps");
    add_common(infer_cmd, common);
    add_refine_flags(infer_cmd, flags);
    infer_cmd->add_option("--checkpoint", checkpoint)->required();
    infer_cmd->add_option("--input", input, "image file or directory")->required();
    infer_cmd->add_option("--out", out, "output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a split");
    add_common(eval_cmd, common);
    add_refine_flags(eval_cmd, flags);
    eval_cmd->add_option("--checkpoint", checkpoint)->required();
    eval_cmd->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
    eval_cmd->add_option("--out", out, "CSV path (stdout if omitted)");
    eval_cmd->add_flag("--per-sample", per_sample, "also write <out>.samples.csv");

    auto* ablate_cmd = app.add_subcommand("ablate", "stage / edge-branch / edge-filter ablations");
    add_common(ablate_cmd, common);
    ablate_cmd->add_option("--out", out, "CSV path (stdout if omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*edges_cmd) return make_edges(input, out);
        if (*synth_cmd) return synth(ExperimentConfig::from(load_config(common)), out);
        if (*train_cmd) return train(ExperimentConfig::from(load_config(common)), out);
        if (*infer_cmd) return infer(checkpoint, common, flags, input, out);
        if (*eval_cmd) return eval(checkpoint, common, flags, split, out, per_sample);
        if (*ablate_cmd) return ablate(ExperimentConfig::from(load_config(common)), out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
