#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include "lsa/clip_io.hpp"
#include "lsa/error.hpp"
#include "lsa/scenes.hpp"

using namespace lsa;
using namespace lsa::scenes;
namespace fs = std::filesystem;

namespace {

bool saturated(const Tensor& f, std::size_t n, std::size_t y, std::size_t x) {
    const double r = f.at({n, 0, y, x}), g = f.at({n, 1, y, x}), b = f.at({n, 2, y, x});
    return std::max({r, g, b}) - std::min({r, g, b}) > 0.3;
}

}  // namespace

TEST_CASE("zero objects give an empty track") {
    SceneSpec s;
    s.num_objects = 0;
    const auto [clip, boxes] = generate_clip(s, 4, 32, 32);
    REQUIRE(boxes.size() == 4);
    for (const auto& f : boxes) CHECK(f.empty());
    for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t y = 0; y < 32; ++y)
            for (std::size_t x = 0; x < 32; ++x) CHECK_FALSE(saturated(clip.frames(), n, y, x));
}

TEST_CASE("linear motion at (2, 0) advances boxes by exactly 2 pixels per frame") {
    SceneSpec s;
    s.ego_motion = 0;
    s.objects = {ObjectSpec{"car", 4, 10, 8, 6, 2, 0}};
    const auto [clip, boxes] = generate_clip(s, 8, 32, 64);
    for (std::size_t n = 0; n < 8; ++n) {
        REQUIRE(boxes[n].size() == 1);
        CHECK(boxes[n][0].x_min == 4 + 2.0 * n);
        CHECK(boxes[n][0].x_max == 12 + 2.0 * n);
        CHECK(boxes[n][0].y_min == 10);
        CHECK(boxes[n][0].class_label == "car");
    }
}

TEST_CASE("boxes are the tight bounds of the rendered object") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SceneSpec s;
        s.num_objects = 1;
        s.seed = seed;
        s.motion_model = static_cast<MotionModel>(seed % 3);
        const auto [clip, boxes] = generate_clip(s, 6, 64, 64);
        for (std::size_t n = 0; n < 6; ++n) {
            double x0 = 1e9, y0 = 1e9, x1 = -1, y1 = -1;
            for (std::size_t y = 0; y < 64; ++y)
                for (std::size_t x = 0; x < 64; ++x)
                    if (saturated(clip.frames(), n, y, x)) {
                        x0 = std::min<double>(x0, x), y0 = std::min<double>(y0, y);
                        x1 = std::max<double>(x1, x + 1), y1 = std::max<double>(y1, y + 1);
                    }
            if (boxes[n].empty()) {
                CHECK(x1 < 0);
                continue;
            }
            CHECK(boxes[n][0].x_min == x0);
            CHECK(boxes[n][0].y_min == y0);
            CHECK(boxes[n][0].x_max == x1);
            CHECK(boxes[n][0].y_max == y1);
        }
    }
}

TEST_CASE("generation is deterministic per seed") {
    SceneSpec s;
    s.seed = 42;
    s.num_objects = 3;
    s.background = Background::StaticNoise;
    const auto a = generate_clip(s, 8, 64, 64);
    const auto b = generate_clip(s, 8, 64, 64);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    s.seed = 43;
    CHECK_FALSE(generate_clip(s, 8, 64, 64).first == a.first);
}

TEST_CASE("objects stay visible for at least half the clip") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        SceneSpec s = sample_spec(SceneDistribution{}, seed);
        const auto [clip, boxes] = generate_clip(s, 8, 64, 64);
        std::map<std::int64_t, int> seen;
        for (const auto& f : boxes)
            for (const auto& b : f) ++seen[b.object_id];
        for (const auto& [id, count] : seen) CHECK(count >= 4);
    }
}

TEST_CASE("unsatisfiable specs are rejected") {
    SceneSpec s;
    s.object_size_range = {40, 50};
    CHECK_THROWS_AS(generate_clip(s, 8, 64, 64), ConfigError);
    SceneSpec t;
    t.objects = {ObjectSpec{"car", 0, 0, 40, 4, 1, 0}};
    CHECK_THROWS_AS(generate_clip(t, 8, 32, 32), ConfigError);
}

TEST_CASE("scene spec serialisation") {
    SceneSpec s;
    s.motion_model = MotionModel::StopAndGo;
    s.background = Background::Texture;
    s.objects = {ObjectSpec{"truck", 1.5, 2, 10, 8, -2, 0}};
    CHECK(scene_spec_from_json(to_json(s)) == s);
    CHECK_THROWS_AS(parse_motion_model("zigzag"), ConfigError);
}

TEST_CASE("dataset: counts, disjoint splits, manifest round trip") {
    DatasetConfig cfg;
    cfg.train_count = 6;
    cfg.test_count = 200;
    cfg.frames = 2;
    cfg.height = cfg.width = 16;
    const fs::path root = fs::temp_directory_path() / "lsa_test_dataset";
    fs::remove_all(root);
    const Manifest m = generate_dataset(cfg, root);
    const auto train = m.split("train"), test = m.split("test");
    CHECK(train.size() == 6);
    CHECK(test.size() == 200);
    std::set<std::string> ids;
    std::set<std::uint64_t> seeds;
    for (const auto& e : m.clips) {
        ids.insert(e.id);
        seeds.insert(e.seed);
    }
    CHECK(ids.size() == 206);
    CHECK(seeds.size() == 206);

    const Manifest back = load_manifest(root / "manifest.json");
    CHECK(to_json(back) == to_json(m));
    const auto [clip, boxes] = load_clip(clip_dir(root, *test.front()));
    const auto regen = generate_clip(test.front()->spec, 2, 16, 16, test.front()->id);
    CHECK(clip.frames() == regen.first.frames());
    CHECK(boxes == regen.second);
}
