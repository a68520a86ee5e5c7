#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "lsa/core_types.hpp"

namespace lsa::scenes {

enum class MotionModel { Linear, Turning, StopAndGo };
enum class Background { Gradient, Texture, StaticNoise };

std::string to_string(MotionModel m);
std::string to_string(Background b);
MotionModel parse_motion_model(const std::string& s);
Background parse_background(const std::string& s);

/// Object classes: each has a saturated colour and a heading, so an object's
/// future trajectory is predictable from its appearance in the first frame.
struct ObjectClass {
    std::string name;
    std::array<double, 3> rgb;
    double dx, dy;  // unit heading
};
const std::vector<ObjectClass>& palette();
const ObjectClass& object_class(const std::string& name);

/// One rendered object; positions are the top-left corner in continuous pixel units.
struct ObjectSpec {
    std::string class_label;
    double x = 0, y = 0;
    double width = 0, height = 0;
    double vx = 0, vy = 0;  // pixels / frame at t = 0

    friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

struct SceneSpec {
    std::size_t num_objects = 2;
    MotionModel motion_model = MotionModel::Linear;
    std::array<double, 2> object_size_range{12.0, 22.0};
    Background background = Background::Gradient;
    double ego_motion = 1.0;  // background scroll, pixels / frame
    double speed = 2.0;       // object speed, pixels / frame
    std::uint64_t seed = 0;
    /// When non-empty, used verbatim instead of sampling num_objects objects from the seed.
    std::vector<ObjectSpec> objects;

    friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

nlohmann::json to_json(const SceneSpec& s);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

/// Closed-form top-left position of `obj` at frame t under `model`.
std::pair<double, double> object_position(const ObjectSpec& obj, MotionModel model, double t);

/// Objects the generator would render for `spec` at the given frame size.
std::vector<ObjectSpec> resolve_objects(const SceneSpec& spec, std::size_t N, std::size_t H, std::size_t W);

/// Renders the clip; boxes are the exact pixel bounds of each object's visible pixels.
std::pair<VideoClip, BoxTrack> generate_clip(const SceneSpec& spec, std::size_t N, std::size_t H, std::size_t W,
                                             const std::string& clip_id = "clip");

/// Parameters from which per-clip SceneSpecs are drawn.
struct SceneDistribution {
    std::array<std::size_t, 2> num_objects{1, 3};
    std::vector<MotionModel> motion_models{MotionModel::Linear};
    std::vector<Background> backgrounds{Background::Gradient, Background::Texture, Background::StaticNoise};
    std::array<double, 2> object_size_range{12.0, 22.0};
    std::array<double, 2> ego_motion_range{0.0, 1.0};
    double speed = 2.0;

    /// Rescales pixel quantities from the 64 x 64 reference resolution.
    SceneDistribution scaled_to(std::size_t H) const;
};

nlohmann::json to_json(const SceneDistribution& d);
SceneDistribution scene_distribution_from_json(const nlohmann::json& j);

SceneSpec sample_spec(const SceneDistribution& dist, std::uint64_t seed);

struct DatasetConfig {
    std::size_t train_count = 1000;
    std::size_t test_count = 200;
    std::size_t frames = 8;
    std::size_t height = 64;
    std::size_t width = 64;
    int fps = 7;
    std::uint64_t seed = 0;
    SceneDistribution distribution;
};

nlohmann::json to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

inline constexpr int kManifestVersion = 1;

struct ManifestEntry {
    std::string id;
    std::string split;  // "train" | "test"
    std::uint64_t seed = 0;
    SceneSpec spec;
};

/// manifest.json: {"version", "frames", "height", "width", "fps", "clips": [{"id", "split", "seed", "spec"}]}.
/// Clip directories live next to it: <root>/<split>/<id>/.
struct Manifest {
    int version = kManifestVersion;
    std::size_t frames = 0, height = 0, width = 0;
    int fps = 7;
    std::vector<ManifestEntry> clips;

    std::vector<const ManifestEntry*> split(const std::string& name) const;
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
Manifest load_manifest(const std::filesystem::path& file);
void save_manifest(const Manifest& m, const std::filesystem::path& file);

/// Directory of a manifest entry relative to the dataset root.
std::filesystem::path clip_dir(const std::filesystem::path& root, const ManifestEntry& e);

/// Writes every clip and manifest.json under out_dir; returns the manifest.
Manifest generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir);

/// Seed of the i-th clip of a dataset, from splitmix64 of the dataset seed.
std::uint64_t clip_seed(std::uint64_t dataset_seed, std::uint64_t index);

}  // namespace lsa::scenes
