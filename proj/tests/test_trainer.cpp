#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "lsa/error.hpp"
#include "lsa/trainer.hpp"

using namespace lsa;
using namespace lsa::train;
namespace fs = std::filesystem;

namespace {

std::vector<TrainExample> tiny_dataset(std::size_t count) {
    std::mt19937_64 rng(21);
    std::vector<TrainExample> out;
    for (std::size_t i = 0; i < count; ++i) {
        auto clip = testing::random_clip(3, 16, 16, rng, "clip" + std::to_string(i));
        BoxTrack boxes{{Box{0, 0, 6, 6, "car", 0}}, {Box{2, 0, 8, 6, "car", 0}}, {Box{4, 0, 10, 6, "car", 0}}};
        out.push_back({std::move(clip), std::move(boxes)});
    }
    return out;
}

loss::LossConfig lsa_cfg() {
    loss::LossConfig c;
    c.lambda_feat = 0.5;
    c.mask.alpha = 4;
    return c;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lsa_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("schedule invariants") {
    const auto staged = make_train_schedule(ScheduleMode::Staged, 3, lsa_cfg(), 1e-3, 1, 0);
    CHECK(staged.config_for_epoch(0).lambda_feat == 0.0);
    CHECK(staged.config_for_epoch(0).diffusion_weight == 1.0);
    CHECK(staged.config_for_epoch(1).lambda_feat == 0.5);
    CHECK(staged.config_for_epoch(2).diffusion_weight == 0.9);
    const auto joint = make_train_schedule(ScheduleMode::Joint, 2, lsa_cfg(), 1e-3, 1, 0);
    CHECK(joint.config_for_epoch(0).lambda_feat == 0.5);
    CHECK(joint.config_for_epoch(0).diffusion_weight == 0.9);
    const auto base = make_train_schedule(ScheduleMode::DiffusionOnly, 2, lsa_cfg(), 1e-3, 1, 0);
    CHECK(base.config_for_epoch(1).lambda_feat == 0.0);

    auto broken = staged;
    broken.epoch_configs[0].lambda_feat = 1.0;
    CHECK_THROWS_AS(broken.validate(), ConfigError);
    CHECK(train_schedule_from_json(to_json(staged)).epoch_configs == staged.epoch_configs);
}

TEST_CASE("metric line format") {
    MetricRecord r{3, 1, LossBreakdown{0.5, 0.25, 0.5, 1.0, 0.0}};
    CHECK(metric_line(r) == R"({"step":3,"epoch":1,"diffusion_loss":0.5,"feature_loss":0.25,"total":0.5})");
}

TEST_CASE("training is deterministic and updates only the denoiser") {
    const auto data = tiny_dataset(4);
    const auto sched = make_train_schedule(ScheduleMode::Staged, 2, lsa_cfg(), 1e-3, 2, 7);
    auto a = testing::tiny_backbones();
    auto b = testing::tiny_backbones();
    const auto codec_hash = a.codec.params().hash(), ext_hash = a.extractor.params().hash(), den_hash = a.denoiser.params().hash();
    const auto ra = train::train(data, a, sched, {scratch("det_a")});
    const auto rb = train::train(data, b, sched, {scratch("det_b")});
    CHECK(ra.finished);
    CHECK(ra.state.global_step == 4);
    CHECK(ra.state.metric_history == rb.state.metric_history);
    CHECK_FALSE(slurp(fs::temp_directory_path() / "lsa_test_det_a" / "metrics.ndjson").empty());
    CHECK(a.codec.params().hash() == codec_hash);
    CHECK(a.extractor.params().hash() == ext_hash);
    CHECK(a.denoiser.params().hash() != den_hash);
    CHECK(a.denoiser.params().hash() == b.denoiser.params().hash());

    // epoch 1 of a staged run never weights the feature loss
    for (const auto& m : ra.state.metric_history) {
        if (m.epoch == 1) {
            CHECK(m.loss.lambda_feat == 0.0);
            CHECK(m.loss.feature_loss > 0.0);
            CHECK(m.loss.total == m.loss.diffusion_loss);
        } else {
            CHECK(m.loss.lambda_feat == 0.5);
        }
    }
    CHECK(fs::exists(fs::temp_directory_path() / "lsa_test_det_a" / "checkpoints" / "epoch-1" / "state.ckpt"));
}

TEST_CASE("metrics log files are byte-identical across reruns") {
    const auto data = tiny_dataset(3);
    const auto sched = make_train_schedule(ScheduleMode::Joint, 1, lsa_cfg(), 1e-3, 1, 3);
    const fs::path d1 = scratch("bytes_1"), d2 = scratch("bytes_2");
    auto a = testing::tiny_backbones();
    auto b = testing::tiny_backbones();
    train::train(data, a, sched, {d1});
    train::train(data, b, sched, {d2});
    CHECK(slurp(d1 / "metrics.ndjson") == slurp(d2 / "metrics.ndjson"));
    CHECK(slurp(d1 / "checkpoints" / "epoch-1" / "denoiser.ckpt") == slurp(d2 / "checkpoints" / "epoch-1" / "denoiser.ckpt"));
}

TEST_CASE("split run equals an uninterrupted run") {
    const auto data = tiny_dataset(4);
    const auto sched = make_train_schedule(ScheduleMode::Staged, 2, lsa_cfg(), 1e-3, 1, 5);
    auto full_nets = testing::tiny_backbones();
    const auto full = train::train(data, full_nets, sched, {scratch("full")});

    for (std::int64_t k : {2, 4, 6}) {
        const fs::path dir = scratch("split_" + std::to_string(k));
        auto nets = testing::tiny_backbones();
        TrainOptions first{dir};
        first.stop_at_step = k;
        const auto part = train::train(data, nets, sched, first);
        CHECK_FALSE(part.finished);
        CHECK(part.state.global_step == k);
        const fs::path ck = k % 4 == 0 ? epoch_checkpoint_dir(dir, static_cast<std::size_t>(k / 4)) : step_checkpoint_dir(dir, k);
        REQUIRE(fs::exists(ck / "state.ckpt"));
        nets::Backbones out = testing::tiny_backbones();
        const auto rest = resume(ck, data, {dir}, {}, &out);
        CHECK(rest.finished);
        CHECK(rest.state.metric_history == full.state.metric_history);
        CHECK(out.denoiser.params().hash() == full_nets.denoiser.params().hash());
        CHECK(slurp(dir / "metrics.ndjson") == slurp(fs::temp_directory_path() / "lsa_test_full" / "metrics.ndjson"));
    }
}

TEST_CASE("resuming an epoch-1 staged checkpoint activates the feature loss") {
    const auto data = tiny_dataset(2);
    const auto sched = make_train_schedule(ScheduleMode::Staged, 2, lsa_cfg(), 1e-3, 1, 9);
    const fs::path dir = scratch("transition");
    auto nets = testing::tiny_backbones();
    TrainOptions o{dir};
    o.stop_at_step = 2;
    train::train(data, nets, sched, o);
    const auto r = resume(epoch_checkpoint_dir(dir, 1), data, {dir});
    REQUIRE(r.state.metric_history.size() == 4);
    CHECK(r.state.metric_history[1].loss.lambda_feat == 0.0);
    CHECK(r.state.metric_history[2].loss.lambda_feat == 0.5);
    CHECK(r.state.metric_history[2].epoch == 2);
}

TEST_CASE("resume rejects mismatched backbone specs and damaged files") {
    const auto data = tiny_dataset(2);
    const auto sched = make_train_schedule(ScheduleMode::Staged, 2, lsa_cfg(), 1e-3, 1, 9);
    const fs::path dir = scratch("mismatch");
    auto nets = testing::tiny_backbones();
    TrainOptions o{dir};
    o.stop_at_step = 2;
    train::train(data, nets, sched, o);
    BackboneSpecs specs{nets.codec.spec(), nets.denoiser.spec(), nets.extractor.spec()};
    specs.denoiser.hidden += 1;
    ResumeOptions ro;
    ro.expected_specs = specs;
    CHECK_THROWS_AS(resume(epoch_checkpoint_dir(dir, 1), data, {}, ro), SpecMismatchError);
    const fs::path state = epoch_checkpoint_dir(dir, 1) / "state.ckpt";
    fs::resize_file(state, fs::file_size(state) / 2);
    CHECK_THROWS_AS(resume(epoch_checkpoint_dir(dir, 1), data, {}), FormatError);
}

TEST_CASE("non-finite loss aborts with the step and clip ids") {
    const auto data = tiny_dataset(2);
    const auto sched = make_train_schedule(ScheduleMode::Joint, 1, lsa_cfg(), 1e-3, 2, 1);
    auto nets = testing::tiny_backbones();
    nets.denoiser.params().items().front().second->value[0] = std::nan("");
    CHECK_THROWS_WITH_AS(train::train(data, nets, sched), doctest::Contains("step 1 (batch: clip"), NonFiniteError);
    CHECK_THROWS_AS(train::train({}, nets, sched), Error);
}
