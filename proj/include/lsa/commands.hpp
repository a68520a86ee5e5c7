#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lsa/clip_io.hpp"
#include "lsa/config.hpp"
#include "lsa/eval.hpp"
#include "lsa/scenes.hpp"
#include "lsa/trainer.hpp"

/// The operations behind each CLI subcommand. Every command that writes an
/// output directory also writes the resolved config there.
namespace lsa::commands {

using LabeledClip = std::pair<VideoClip, BoxTrack>;

/// Progress messages; silent when empty.
using Logger = std::function<void(const std::string&)>;

/// Refuses a non-empty existing out_dir unless `force`, in which case it is cleared first.
scenes::Manifest make_data(const config::RunConfig& cfg, bool force, const Logger& log = {});

/// Loads the clips of one split in manifest order (limit 0: all).
std::vector<LabeledClip> load_split(const std::filesystem::path& root, const scenes::Manifest& manifest, const std::string& split,
                                    ClipRequirements req = {}, std::size_t limit = 0);

/// Pre-trains the codec on the train split and writes it to cfg.codec_path().
nets::CodecTrainReport pretrain_codec(const config::RunConfig& cfg, const Logger& log = {});

/// Fresh backbones for `cfg` with the pre-trained codec loaded.
nets::Backbones make_backbones(const config::RunConfig& cfg);

struct TrainCommandOptions {
    std::filesystem::path resume_from;  // checkpoint directory; empty: fresh run
    std::optional<std::int64_t> stop_at_step;
};

struct TrainCommandResult {
    train::RunState state;
    bool finished = false;
    std::filesystem::path final_dir;  // <output>/final, holds the trained backbones when finished
};

/// Optional diffusion-only base epochs, then the configured schedule. Writes
/// <output>/{config.json, metrics.ndjson, checkpoints/, final/}.
TrainCommandResult train(const config::RunConfig& cfg, const TrainCommandOptions& opts = {}, const Logger& log = {});

/// Writes one generated clip directory per manifest clip of `split` plus a manifest.json.
void generate(const std::filesystem::path& checkpoint_dir, const std::filesystem::path& manifest_file, const std::filesystem::path& out_dir,
              const config::RunConfig& cfg, const std::string& split = "test", const Logger& log = {});

/// Scores generated clip directories against the manifest's ground truth and writes the report.
eval::EvalReport evaluate(const std::filesystem::path& generated_dir, const std::filesystem::path& manifest_file,
                          const config::RunConfig& cfg, const std::filesystem::path& report_file, const std::filesystem::path& csv_file = {},
                          const std::string& split = "test");

struct AblationRow {
    std::string name;  // hybrid | box-only | global-only | joint-hybrid | diffusion-only
    std::uint64_t seed = 0;
    double mAP = 0, mIoU = 0, frechet_frame = 0, frechet_clip = 0;
};

struct AblationResult {
    std::vector<AblationRow> rows;
    std::map<std::string, std::map<std::string, double>> medians;  // name -> metric -> median over seeds
    std::map<std::string, bool> orderings;                          // ordering name -> holds
    bool frozen_modules_unchanged = true;                           // codec and extractor hashes after every staged run
    bool denoiser_changed = true;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

/// Runs the loss-variant and schedule grid for every seed and writes <output>/ablation.{json,csv}.
AblationResult run_ablation(const config::RunConfig& cfg, const Logger& log = {});

double median(std::vector<double> v);

}  // namespace lsa::commands
