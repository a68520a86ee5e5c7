#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lsa/backbones.hpp"
#include "lsa/diffusion.hpp"
#include "lsa/lsa_loss.hpp"
#include "lsa/optim.hpp"

namespace lsa::train {

/// staged: epoch 1 diffusion-only (1.0, 0), later epochs (0.9, lambda).
/// joint: (0.9, lambda) from the first step.
/// diffusion-only: (1.0, 0) throughout; the fine-tuning baseline.
enum class ScheduleMode { Staged, Joint, DiffusionOnly };
std::string to_string(ScheduleMode m);
ScheduleMode parse_schedule_mode(const std::string& s);

struct TrainSchedule {
    ScheduleMode mode = ScheduleMode::Staged;
    std::size_t epochs = 2;
    std::vector<loss::LossConfig> epoch_configs;  // one per epoch
    double learning_rate = 1e-3;
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;
    AdamWConfig optimizer;  // learning_rate above takes precedence
    diffusion::SigmaSampler sigma_sampler;

    /// Throws ConfigError if epoch_configs disagree with the mode's invariants.
    void validate() const;
    const loss::LossConfig& config_for_epoch(std::size_t epoch) const;  // 0-based
};

/// Builds the per-epoch configs for `mode`; `lsa` supplies lambda_feat and the mask.
/// Staged and joint use a 0.9 diffusion weight whenever the feature term is on.
TrainSchedule make_train_schedule(ScheduleMode mode, std::size_t epochs, const loss::LossConfig& lsa, double learning_rate,
                                  std::size_t batch_size, std::uint64_t seed);

nlohmann::json to_json(const TrainSchedule& s);
TrainSchedule train_schedule_from_json(const nlohmann::json& j);

struct MetricRecord {
    std::int64_t step = 0;  // 1-based global step
    std::int64_t epoch = 0;  // 1-based
    LossBreakdown loss;

    friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

/// The NDJSON line {"step", "epoch", "diffusion_loss", "feature_loss", "total"}.
std::string metric_line(const MetricRecord& r);

struct RunState {
    std::int64_t global_step = 0;
    std::int64_t epoch = 0;          // 0-based index of the epoch in progress
    std::int64_t step_in_epoch = 0;  // optimizer steps already taken in that epoch
    std::string rng_state;           // serialized mt19937_64
    std::vector<MetricRecord> metric_history;
};

/// One training example.
struct TrainExample {
    VideoClip clip;
    BoxTrack boxes;
};

struct TrainOptions {
    std::filesystem::path out_dir;            // empty: keep everything in memory
    std::optional<std::int64_t> stop_at_step;  // checkpoint and return once global_step reaches this
    std::function<void(const MetricRecord&)> on_step;
};

struct TrainResult {
    RunState state;
    bool finished = false;  // false when stopped early
};

/// Runs (or continues) the schedule. Only the denoiser is updated.
TrainResult train(const std::vector<TrainExample>& dataset, nets::Backbones& nets, const TrainSchedule& schedule, const TrainOptions& opts = {});

/// Continues from a checkpoint directory written by train(); nets are loaded from it.
struct ResumedRun {
    nets::Backbones nets;
    TrainSchedule schedule;
    RunState state;
    std::vector<std::pair<std::string, Tensor>> optimizer_state;
};

ResumedRun load_run_checkpoint(const std::filesystem::path& dir);

struct BackboneSpecs {
    nets::CodecSpec codec;
    nets::DenoiserSpec denoiser;
    nets::FeatureExtractorSpec extractor;
};

struct ResumeOptions {
    /// Replaces the saved schedule, e.g. to branch an epoch-1 checkpoint into another epoch-2 variant.
    std::optional<TrainSchedule> schedule;
    /// When set, the checkpoint's backbone specs must match (SpecMismatchError otherwise).
    std::optional<BackboneSpecs> expected_specs;
};

/// Loads `dir` and trains to the end of the schedule. The trained networks are written to `nets_out` when given.
TrainResult resume(const std::filesystem::path& dir, const std::vector<TrainExample>& dataset, const TrainOptions& opts,
                   const ResumeOptions& resume_opts = {}, nets::Backbones* nets_out = nullptr);

/// Checkpoint layout: <dir>/{codec,denoiser,extractor}.ckpt + state.ckpt.
void save_run_checkpoint(const std::filesystem::path& dir, const nets::Backbones& nets, const TrainSchedule& schedule, const RunState& state,
                         const AdamW& optimizer);

std::filesystem::path epoch_checkpoint_dir(const std::filesystem::path& out_dir, std::size_t epoch);  // 1-based
std::filesystem::path step_checkpoint_dir(const std::filesystem::path& out_dir, std::int64_t step);

}  // namespace lsa::train
