#include <gtest/gtest.h>

#include "se2net/se2net.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

using namespace se2net;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(int stages = 2) {
    ExperimentConfig e = ExperimentConfig::from(Config::parse(
        "backbone.channels = 4,4,4,4,4\nmodel.head_channels = 4,4,4,4\nmodel.fusion_channels = 4\n"
        "data.synth.count = 3\ndata.synth.size = 32\ntrainer.batch_size = 2\ntrainer.learning_rate = 1e-5\n"
        "trainer.lr_decay_epochs = 0\ntrainer.iterations = 4\ntrainer.crop = 32\ntrainer.seed = 3\n"));
    e.model.stages = stages;
    return e;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("se2net_trainer_" + name);
    fs::remove_all(p);
    return p;
}

std::vector<float> flat(const Tensor<float>& t) { return {t.data(), t.data() + t.size()}; }

}  // namespace

TEST(SgdMomentum, MatchesHandComputedSteps) {
    Param<float> w("w", 2, 1.0f);
    Param<float> b("b", 1, 0.5f, false);
    ParamSet<float> set;
    set.params = {&w, &b};
    SgdMomentum<float> opt(set, 0.9, 0.1);
    w.grad = {0.5f, -1.0f};
    b.grad = {2.0f};
    opt.step(0.1);
    // v = g + wd*w ; w -= lr v
    EXPECT_FLOAT_EQ(w.value[0], 1.0f - 0.1f * (0.5f + 0.1f));
    EXPECT_FLOAT_EQ(w.value[1], 1.0f - 0.1f * (-1.0f + 0.1f));
    EXPECT_FLOAT_EQ(b.value[0], 0.5f - 0.1f * 2.0f);
    const float v0 = 0.5f + 0.1f;
    const float w0 = w.value[0];
    opt.step(0.1);
    EXPECT_FLOAT_EQ(w.value[0], w0 - 0.1f * (0.9f * v0 + 0.5f + 0.1f * w0));
}

TEST(Trainer, StepLearningRateSchedule) {
    ExperimentConfig e = tiny_config();
    e.trainer.learning_rate = 0.01;
    e.trainer.lr_decay = 0.1;
    e.trainer.lr_decay_epochs = 2;
    const Trainer t(e);
    EXPECT_DOUBLE_EQ(t.learning_rate(0), 0.01);
    EXPECT_DOUBLE_EQ(t.learning_rate(1), 0.01);
    EXPECT_NEAR(t.learning_rate(2), 0.001, 1e-15);
    EXPECT_NEAR(t.learning_rate(5), 0.0001, 1e-16);
    e.trainer.lr_decay_epochs = 0;
    EXPECT_DOUBLE_EQ(Trainer(e).learning_rate(100), 0.01);
}

TEST(Trainer, LogHasHeaderAndOneLinePerIteration) {
    const ExperimentConfig e = tiny_config();
    const auto data = synth_shapes(3, 32, 1);
    auto model = build_model(e, 1);
    int calls = 0;
    Trainer t(e);
    t.on_iteration = [&](long long, const LossReport& r) {
        ++calls;
        EXPECT_TRUE(std::isfinite(r.total));
        EXPECT_NEAR(r.total, r.recompute(), 1e-9 * std::abs(r.total));
    };
    const TrainResult res = t.train(*model, data);
    ASSERT_EQ(res.log.size(), 5u);
    EXPECT_EQ(res.log[0], "iter,J,E0,R0,E1,R1,E2,R2");
    EXPECT_EQ(res.log[1].rfind("0,", 0), 0u);
    EXPECT_EQ(calls, 4);
    EXPECT_EQ(res.checkpoint.iteration, 4u);
}

TEST(Trainer, SameSeedGivesIdenticalLogs) {
    const ExperimentConfig e = tiny_config();
    const auto data = synth_shapes(3, 32, 1);
    auto a = build_model(e, 5);
    auto b = build_model(e, 5);
    EXPECT_EQ(Trainer(e).train(*a, data).log, Trainer(e).train(*b, data).log);
}

TEST(Trainer, AugmentedTrainingIsDeterministicToo) {
    ExperimentConfig e = tiny_config();
    e.trainer.augment = true;
    const auto data = synth_shapes(3, 40, 1);
    auto a = build_model(e, 5);
    auto b = build_model(e, 5);
    EXPECT_EQ(Trainer(e).train(*a, data).log, Trainer(e).train(*b, data).log);
}

TEST(Trainer, SingleStageTrains) {
    const ExperimentConfig e = tiny_config(1);
    const auto data = synth_shapes(3, 32, 1);
    auto model = build_model(e, 2);
    const TrainResult res = Trainer(e).train(*model, data);
    EXPECT_EQ(res.log[0], "iter,J,E0,R0,E1,R1");
    EXPECT_TRUE(std::isfinite(res.last.total));
}

TEST(Trainer, LossDecreasesOnTinyProblem) {
    ExperimentConfig e = tiny_config();
    e.trainer.iterations = 30;
    const auto data = synth_shapes(2, 32, 1);
    auto model = build_model(e, 2);
    const TrainResult res = Trainer(e).train(*model, data);
    EXPECT_LT(res.last.total, res.first.total);
}

TEST(Trainer, NonFiniteObjectiveAbortsWithDump) {
    ExperimentConfig e = tiny_config();
    const fs::path dir = scratch("diverge");
    e.trainer.out_dir = dir;
    auto data = synth_shapes(2, 32, 1);
    data[0].image(3, 3, 0) = std::numeric_limits<double>::quiet_NaN();
    data[1].image(3, 3, 0) = std::numeric_limits<double>::quiet_NaN();
    auto model = build_model(e, 2);
    try {
        Trainer(e).train(*model, data);
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& err) {
        EXPECT_NE(std::string(err.what()).find(data[0].id), std::string::npos);
    }
    EXPECT_TRUE(fs::exists(dir / "divergence.txt"));
    fs::remove_all(dir);
}

TEST(Trainer, EmptyTrainingSetThrows) {
    const ExperimentConfig e = tiny_config();
    auto model = build_model(e, 2);
    EXPECT_THROW(Trainer(e).train(*model, {}), ConfigError);
}

TEST(Trainer, WritesLossCsvAndEpochCheckpoints) {
    ExperimentConfig e = tiny_config();
    const fs::path dir = scratch("ckpts");
    e.trainer.out_dir = dir;
    e.trainer.checkpoint_every = 1;
    e.trainer.iterations = 4;  // 3 samples, batch 2: epochs end after slots 3 and 6
    auto model = build_model(e, 2);
    const TrainResult res = Trainer(e).train(*model, synth_shapes(3, 32, 1));
    EXPECT_TRUE(fs::exists(dir / "final.ckpt"));
    EXPECT_TRUE(fs::exists(dir / "epoch1.ckpt"));
    EXPECT_TRUE(fs::exists(dir / "epoch2.ckpt"));
    std::ifstream in(dir / "loss.csv");
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    EXPECT_EQ(lines, res.log);
    fs::remove_all(dir);
}

TEST(Checkpoint, RoundTripReproducesForwardBitExactly) {
    ExperimentConfig e = tiny_config();
    const fs::path dir = scratch("roundtrip");
    e.trainer.out_dir = dir;
    e.trainer.checkpoint_every = 0;
    const auto data = synth_shapes(3, 32, 1);
    auto model = build_model(e, 2);
    Trainer(e).train(*model, data);

    const Tensor<float> x = to_tensor<float>(data[1].image);
    const Prediction<float> before = model->forward(x, Mode::eval);
    LoadedModel loaded = load_model(dir / "final.ckpt");
    const Prediction<float> after = loaded.model->forward(x, Mode::eval);
    EXPECT_EQ(flat(before.fused_region), flat(after.fused_region));
    EXPECT_EQ(flat(before.fused_edge), flat(after.fused_edge));
    for (int t = 0; t < e.model.stages; ++t) {
        EXPECT_EQ(flat(before.stages.region_maps[t]), flat(after.stages.region_maps[t]));
        EXPECT_EQ(flat(before.stages.edge_maps[t]), flat(after.stages.edge_maps[t]));
    }
    EXPECT_EQ(loaded.config.model.stages, e.model.stages);
    EXPECT_EQ(loaded.config.model.widths, e.model.widths);
    fs::remove_all(dir);
}

TEST(Checkpoint, SameRunInTwoDirectoriesGivesIdenticalBytes) {
    const auto data = synth_shapes(3, 32, 1);
    std::vector<std::string> bytes;
    for (const char* name : {"dir_a", "dir_b"}) {
        ExperimentConfig e = tiny_config();
        const fs::path dir = scratch(name);
        e.trainer.out_dir = dir;
        e.trainer.checkpoint_every = 0;
        auto model = build_model(e, 2);
        Trainer(e).train(*model, data);
        std::ifstream in(dir / "final.ckpt", std::ios::binary);
        bytes.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        EXPECT_TRUE(load_model(dir / "final.ckpt").config.trainer.out_dir.empty());
        fs::remove_all(dir);
    }
    EXPECT_EQ(bytes[0], bytes[1]);
}

TEST(Checkpoint, FileRoundTripPreservesEveryField) {
    Checkpoint c;
    c.iteration = 42;
    c.config_text = "model.stages = 2\n";
    c.params = {{"a", {1.0, -2.5, 1e-300}}, {"b", {}}};
    c.buffers = {{"m", {0.125}}};
    c.velocity = {{"a", {3.0, 4.0, 5.0}}};
    const fs::path p = scratch("file.ckpt");
    c.save(p);
    const Checkpoint d = Checkpoint::load(p);
    EXPECT_EQ(d.iteration, 42u);
    EXPECT_EQ(d.config_text, c.config_text);
    EXPECT_EQ(d.params, c.params);
    EXPECT_EQ(d.buffers, c.buffers);
    EXPECT_EQ(d.velocity, c.velocity);
    fs::remove(p);
}

TEST(Checkpoint, RejectsGarbageFile) {
    const fs::path p = scratch("garbage.ckpt");
    std::ofstream(p) << "not a checkpoint";
    EXPECT_THROW(Checkpoint::load(p), IoError);
    fs::remove(p);
    EXPECT_THROW(Checkpoint::load(p), IoError);
}

TEST(Checkpoint, BackboneWeightsAreLoadedFromFile) {
    const ExperimentConfig e = tiny_config();
    auto donor = build_model(e, 11);
    const fs::path p = scratch("backbone.ckpt");
    capture<float>(*donor, nullptr, e.to_config(), 0).save(p);
    ExperimentConfig f = e;
    f.backbone_weights = p.string();
    auto model = build_model(f, 99);
    auto fresh = build_model(e, 99);
    for (std::size_t k = 0; k < model->params().params.size(); ++k) {
        const Param<float>& got = *model->params().params[k];
        const Param<float>& want =
            got.name.rfind("backbone.", 0) == 0 ? *donor->params().params[k] : *fresh->params().params[k];
        EXPECT_EQ(got.value, want.value) << got.name;
    }
    fs::remove(p);
}
