// Command-line front end: make-data, pretrain-codec, train, generate, eval, run-ablation.

#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <typeinfo>

#include "lsa/checkpoint.hpp"
#include "lsa/commands.hpp"
#include "lsa/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lsa;

namespace {

struct Flags {
    std::string config_file;
    json overrides = json::object();
    bool force = false;
    bool quiet = false;
    std::string resume, checkpoint, manifest, generated, report, csv, split = "test";
    std::optional<std::int64_t> stop_at_step;
};

/// Registers a flag whose value lands at `path` in the config JSON, so overrides go through the same schema checks.
template <class T>
void override_option(CLI::App* app, Flags& f, const std::string& name, const json::json_pointer& path, const std::string& help) {
    app->add_option_function<T>(name, [&f, path](const T& v) { f.overrides[path] = v; }, help);
}

void add_common(CLI::App* app, Flags& f) {
    app->add_option("-c,--config", f.config_file, "Run config file (JSON)");
    app->add_flag("-q,--quiet", f.quiet, "Suppress progress messages");
    override_option<std::uint64_t>(app, f, "--seed", "/seed"_json_pointer, "Run seed");
    override_option<std::string>(app, f, "--data", "/paths/dataset"_json_pointer, "Dataset directory");
    override_option<std::string>(app, f, "--out", "/paths/output"_json_pointer, "Output directory");
    override_option<std::string>(app, f, "--codec", "/paths/codec"_json_pointer, "Codec checkpoint file");
}

void add_dataset_flags(CLI::App* app, Flags& f) {
    override_option<std::size_t>(app, f, "--train-count", "/dataset/train_count"_json_pointer, "Number of train clips");
    override_option<std::size_t>(app, f, "--test-count", "/dataset/test_count"_json_pointer, "Number of test clips");
    override_option<std::size_t>(app, f, "--frames", "/dataset/frames"_json_pointer, "Frames per clip");
    app->add_option_function<std::size_t>(
        "--size",
        [&f](const std::size_t& v) {
            f.overrides["/dataset/height"_json_pointer] = v;
            f.overrides["/dataset/width"_json_pointer] = v;
        },
        "Frame height and width in pixels");
}

void add_train_flags(CLI::App* app, Flags& f) {
    override_option<std::string>(app, f, "--schedule", "/train/schedule"_json_pointer, "staged | joint | diffusion-only");
    override_option<std::string>(app, f, "--variant", "/loss/variant"_json_pointer, "hybrid | box-only | global-only");
    override_option<std::string>(app, f, "--overlap-rule", "/loss/overlap_rule"_json_pointer, "any-overlap | center | min-fraction");
    override_option<std::string>(app, f, "--mask-application", "/loss/mask_application"_json_pointer, "pre-square | post-square");
    override_option<std::string>(app, f, "--feature-target", "/loss/feature_target"_json_pointer, "ground-truth | reconstruction");
    override_option<double>(app, f, "--lambda-feat", "/loss/lambda_feat"_json_pointer, "Feature-loss weight");
    override_option<double>(app, f, "--alpha", "/loss/alpha"_json_pointer, "Dynamic-patch weight");
    override_option<double>(app, f, "--feature-sigma-max", "/loss/feature_sigma_max"_json_pointer, "Noise level above which the feature loss is not optimised (0: no cap)");
    override_option<double>(app, f, "--lr", "/train/learning_rate"_json_pointer, "Learning rate");
    override_option<std::size_t>(app, f, "--epochs", "/train/epochs"_json_pointer, "Epochs of the schedule");
    override_option<std::size_t>(app, f, "--batch-size", "/train/batch_size"_json_pointer, "Clips per optimizer step");
    override_option<std::size_t>(app, f, "--max-clips", "/train/max_clips"_json_pointer, "Use at most this many train clips (0: all)");
    override_option<std::size_t>(app, f, "--base-epochs", "/train/base_epochs"_json_pointer, "Diffusion-only epochs for the base denoiser");
}

void add_eval_flags(CLI::App* app, Flags& f) {
    override_option<std::size_t>(app, f, "--steps", "/eval/sampling_steps"_json_pointer, "Sampling steps");
    override_option<std::size_t>(app, f, "--max-test-clips", "/eval/max_clips"_json_pointer, "Use at most this many test clips (0: all)");
    override_option<std::string>(app, f, "--reference", "/eval/reference"_json_pointer, "detector | annotations");
    override_option<double>(app, f, "--min-size", "/eval/min_size"_json_pointer, "Minimum box side for detection metrics");
    override_option<std::uint64_t>(app, f, "--sample-seed", "/eval/seed"_json_pointer, "Sampling noise seed");
}

config::RunConfig resolve(const Flags& f) {
    json j = json::object();
    if (!f.config_file.empty()) {
        if (!fs::exists(f.config_file)) throw IoError("config file not found: " + f.config_file);
        try {
            j = json::parse(read_text_file(f.config_file));
        } catch (const json::parse_error& ex) {
            throw ConfigError("config " + f.config_file + " is not valid JSON: " + ex.what());
        }
    }
    j.merge_patch(f.overrides);
    return config::from_json(j);
}

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const SpecMismatchError*>(&e)) return "spec_mismatch";
    if (dynamic_cast<const FormatError*>(&e)) return "format";
    if (dynamic_cast<const IoError*>(&e)) return "io";
    if (dynamic_cast<const NonFiniteError*>(&e)) return "non_finite";
    if (dynamic_cast<const InvariantError*>(&e)) return "invariant";
    if (dynamic_cast<const ShapeError*>(&e)) return "shape";
    if (dynamic_cast<const DomainError*>(&e)) return "domain";
    if (dynamic_cast<const Error*>(&e)) return "error";
    return "internal";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Localized semantic alignment fine-tuning for toy latent video diffusion"};
    app.require_subcommand(1);
    Flags f;

    auto* make_data = app.add_subcommand("make-data", "Generate the synthetic dataset and manifest");
    add_common(make_data, f);
    add_dataset_flags(make_data, f);
    make_data->add_flag("--force", f.force, "Replace a non-empty output directory");

    auto* pretrain = app.add_subcommand("pretrain-codec", "Pre-train the latent codec on the train split");
    add_common(pretrain, f);
    override_option<std::size_t>(pretrain, f, "--steps", "/codec_training/steps"_json_pointer, "Optimizer steps");

    auto* train_cmd = app.add_subcommand("train", "Fine-tune the denoiser");
    add_common(train_cmd, f);
    add_train_flags(train_cmd, f);
    train_cmd->add_option("--resume", f.resume, "Continue from a checkpoint directory");
    train_cmd->add_option("--stop-at-step", f.stop_at_step, "Checkpoint and stop once this global step is reached");

    auto* generate = app.add_subcommand("generate", "Generate one clip per test clip from its first frame");
    add_common(generate, f);
    add_eval_flags(generate, f);
    generate->add_option("--checkpoint", f.checkpoint, "Checkpoint directory with codec/denoiser/extractor")->required();
    generate->add_option("--manifest", f.manifest, "Dataset manifest (default: <data>/manifest.json)");
    generate->add_option("--split", f.split, "Manifest split to condition on");

    auto* eval_cmd = app.add_subcommand("eval", "Score generated clips against ground truth");
    add_common(eval_cmd, f);
    add_eval_flags(eval_cmd, f);
    eval_cmd->add_option("--generated", f.generated, "Directory written by generate")->required();
    eval_cmd->add_option("--manifest", f.manifest, "Ground-truth manifest (default: <data>/manifest.json)");
    eval_cmd->add_option("--report", f.report, "Report file (default: <generated>/report.json)");
    eval_cmd->add_option("--csv", f.csv, "Optional CSV summary file");
    eval_cmd->add_option("--split", f.split, "Manifest split to score");

    auto* ablation = app.add_subcommand("run-ablation", "Run the loss-variant and schedule grid over all seeds");
    add_common(ablation, f);
    add_dataset_flags(ablation, f);
    add_train_flags(ablation, f);
    add_eval_flags(ablation, f);
    ablation->add_option_function<std::vector<std::uint64_t>>(
        "--seeds", [&f](const std::vector<std::uint64_t>& s) { f.overrides["/ablation/seeds"_json_pointer] = s; }, "Seeds");

    CLI11_PARSE(app, argc, argv);

    try {
        const config::RunConfig cfg = resolve(f);
        const commands::Logger log = f.quiet ? commands::Logger{} : [](const std::string& m) { std::cerr << m << '\n'; };
        const fs::path manifest = f.manifest.empty() ? cfg.dataset_dir / "manifest.json" : fs::path(f.manifest);

        if (*make_data) {
            const auto m = commands::make_data(cfg, f.force, log);
            std::cout << json{{"dataset", cfg.dataset_dir.string()}, {"clips", m.clips.size()}}.dump() << '\n';
        } else if (*pretrain) {
            const auto r = commands::pretrain_codec(cfg, log);
            std::cout << json{{"codec", cfg.codec_path().string()}, {"final_train_mse", r.final_recon_mse}, {"latent_scale", r.latent_scale}}.dump()
                      << '\n';
        } else if (*train_cmd) {
            const auto r = commands::train(cfg, {f.resume, f.stop_at_step}, log);
            std::cout << json{{"output", cfg.output_dir.string()}, {"global_step", r.state.global_step}, {"finished", r.finished}}.dump() << '\n';
        } else if (*generate) {
            const fs::path out = f.overrides.contains("paths") && f.overrides["paths"].contains("output") ? cfg.output_dir
                                                                                                          : cfg.output_dir / "generated";
            commands::generate(f.checkpoint, manifest, out, cfg, f.split, log);
            std::cout << json{{"generated", out.string()}}.dump() << '\n';
        } else if (*eval_cmd) {
            const fs::path report = f.report.empty() ? fs::path(f.generated) / "report.json" : fs::path(f.report);
            const auto r = commands::evaluate(f.generated, manifest, cfg, report, f.csv, f.split);
            std::cout << json{{"report", report.string()}, {"frechet_frame", r.frechet_frame}, {"frechet_clip", r.frechet_clip},
                              {"mAP", r.mAP}, {"mIoU", r.mIoU}}
                             .dump()
                      << '\n';
        } else if (*ablation) {
            const auto r = commands::run_ablation(cfg, log);
            std::cout << r.to_csv();
            bool all = true;
            for (const auto& [name, ok] : r.orderings) {
                std::cout << (ok ? "holds   " : "violated") << "  " << name << '\n';
                all = all && ok;
            }
            std::cout << (r.frozen_modules_unchanged ? "holds   " : "violated") << "  frozen codec and extractor unchanged\n";
        }
    } catch (const std::exception& e) {
        std::cerr << json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
    return 0;
}
