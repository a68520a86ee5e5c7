#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "lsa/backbones.hpp"
#include "lsa/eval.hpp"
#include "lsa/lsa_loss.hpp"
#include "lsa/scenes.hpp"
#include "lsa/trainer.hpp"

namespace lsa::config {

struct TrainSettings {
    train::ScheduleMode schedule = train::ScheduleMode::Staged;
    std::size_t epochs = 2;
    double learning_rate = 1e-3;
    std::size_t batch_size = 1;
    std::size_t max_clips = 0;  // 0: the whole train split
    /// Diffusion-only epochs that produce the shared base denoiser before fine-tuning (0: start from initialisation).
    std::size_t base_epochs = 0;
    train::AdamWConfig optimizer;
    diffusion::SigmaSampler sigma_sampler;
};

struct AblationSettings {
    std::vector<std::uint64_t> seeds{0, 1, 2};
};

/// Everything a command needs; read from one JSON file and overridden by flags.
struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path dataset_dir = "data";
    std::filesystem::path output_dir = "runs/default";
    std::filesystem::path codec_checkpoint;  // empty: <dataset_dir>/codec.ckpt

    scenes::DatasetConfig dataset;
    nets::CodecSpec codec;
    nets::DenoiserSpec denoiser;
    nets::FeatureExtractorSpec extractor;
    nets::CodecTrainConfig codec_training;
    std::size_t codec_max_clips = 200;

    TrainSettings train;
    loss::LossConfig loss;  // lambda_feat and mask of the feature-loss epochs
    eval::EvalConfig eval;
    std::optional<double> eval_min_size;  // unset: 16 pixels per 64 of frame height
    std::size_t eval_max_clips = 0;       // 0: the whole test split
    AblationSettings ablation;

    std::filesystem::path codec_path() const;
    /// EvalConfig with the size filter resolved against the dataset height.
    eval::EvalConfig resolved_eval() const;
    train::TrainSchedule schedule() const;
    train::BackboneSpecs backbone_specs() const;
};

/// Desk-scale defaults: lambda_feat 1 with the reconstruction feature target and a sigma cap of 0.5,
/// a 3000-step codec, two diffusion-only base epochs; 1000 train / 200 test clips.
RunConfig default_config();

/// Throws ConfigError naming the offending key path on unknown keys or wrong types.
void validate_schema(const nlohmann::json& j);

RunConfig from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig load(const std::filesystem::path& file);
void save(const RunConfig& c, const std::filesystem::path& file);

}  // namespace lsa::config
