#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lsa/commands.hpp"
#include "lsa/error.hpp"

using namespace lsa;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json tiny_config_json(const fs::path& root) {
    return json{{"seed", 4},
                {"paths", {{"dataset", (root / "data").string()}, {"output", (root / "run").string()}}},
                {"dataset", {{"train_count", 4}, {"test_count", 3}, {"frames", 3}, {"height", 16}, {"width", 16}}},
                {"backbones", {{"codec", {{"hidden", 4}}}, {"denoiser", {{"hidden", 6}, {"cond_dim", 8}}}, {"extractor", {{"feature_dim", 8}}}}},
                {"codec_training", {{"steps", 4}, {"frames_per_step", 2}}},
                {"train", {{"epochs", 2}, {"batch_size", 2}}},
                {"loss", {{"lambda_feat", 0.3}}},
                {"eval", {{"sampling_steps", 2}}}};
}

struct Outputs {
    std::string metrics, report, csv, manifest;
};

Outputs run_pipeline(const config::RunConfig& cfg) {
    commands::make_data(cfg, true);
    commands::pretrain_codec(cfg);
    const auto t = commands::train(cfg);
    REQUIRE(t.finished);
    const fs::path gen = cfg.output_dir / "generated";
    commands::generate(t.final_dir, cfg.dataset_dir / "manifest.json", gen, cfg);
    commands::evaluate(gen, cfg.dataset_dir / "manifest.json", cfg, gen / "report.json", gen / "report.csv");
    return {slurp(cfg.output_dir / "metrics.ndjson"), slurp(gen / "report.json"), slurp(gen / "report.csv"),
            slurp(cfg.dataset_dir / "manifest.json")};
}

int run_cli(const std::string& args, const fs::path& stderr_file) {
    const std::string cmd = std::string(LSA_CLI_PATH) + " " + args + " > /dev/null 2> " + stderr_file.string();
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config schema rejects unknown keys and wrong types with the key path") {
    CHECK_THROWS_WITH_AS(config::from_json(json{{"loss", {{"lamda_feat", 1}}}}), doctest::Contains("loss.lamda_feat"), ConfigError);
    CHECK_THROWS_WITH_AS(config::from_json(json{{"train", {{"epochs", "two"}}}}), doctest::Contains("train.epochs"), ConfigError);
    CHECK_THROWS_AS(config::from_json(json{{"dataset", {{"height", 30}}}}), ConfigError);
    CHECK_THROWS_AS(config::from_json(json{{"train", {{"schedule", "sometimes"}}}}), ConfigError);
    const auto d = config::default_config();
    CHECK(config::to_json(config::from_json(config::to_json(d))) == config::to_json(d));
    CHECK(config::from_json(json::object()).dataset.train_count == 1000);
    CHECK(config::from_json(json::object()).dataset.test_count == 200);
}

TEST_CASE("make-data refuses a non-empty directory without force") {
    const fs::path root = fs::temp_directory_path() / "lsa_test_force";
    fs::remove_all(root);
    const auto cfg = config::from_json(tiny_config_json(root));
    commands::make_data(cfg, false);
    CHECK_THROWS_AS(commands::make_data(cfg, false), IoError);
    { std::ofstream(cfg.dataset_dir / "stray.txt") << "x"; }
    commands::make_data(cfg, true);
    CHECK_FALSE(fs::exists(cfg.dataset_dir / "stray.txt"));
}

TEST_CASE("identical config and seed reproduce byte-identical logs and reports") {
    const fs::path root = fs::temp_directory_path() / "lsa_test_repro";
    fs::remove_all(root);
    const auto cfg = config::from_json(tiny_config_json(root));
    const Outputs a = run_pipeline(cfg);
    fs::remove_all(root);
    const Outputs b = run_pipeline(cfg);
    CHECK_FALSE(a.metrics.empty());
    CHECK(a.metrics == b.metrics);
    CHECK(a.report == b.report);
    CHECK(a.csv == b.csv);
    CHECK(a.manifest == b.manifest);
    // one NDJSON record per optimizer step, with exactly the documented keys in order
    std::istringstream lines(a.metrics);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
        const auto j = json::parse(line);
        CHECK(j.size() == 5);
        CHECK(line.rfind("{\"step\":", 0) == 0);
        ++n;
    }
    CHECK(n == 4);

    SUBCASE("eval reports missing generated clips by id") {
        const fs::path gen = cfg.output_dir / "generated";
        const auto m = scenes::load_manifest(cfg.dataset_dir / "manifest.json");
        const std::string victim = m.split("test").front()->id;
        fs::remove_all(gen / "test" / victim);
        auto gm = scenes::load_manifest(gen / "manifest.json");
        std::erase_if(gm.clips, [&](const scenes::ManifestEntry& e) { return e.id == victim; });
        scenes::save_manifest(gm, gen / "manifest.json");
        CHECK_THROWS_WITH(commands::evaluate(gen, cfg.dataset_dir / "manifest.json", cfg, gen / "r.json"), doctest::Contains(victim.c_str()));
    }
}

TEST_CASE("command-line front end") {
    const fs::path root = fs::temp_directory_path() / "lsa_test_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg_file = root / "config.json";
    { std::ofstream(cfg_file) << tiny_config_json(root).dump(2); }
    const fs::path err = root / "stderr.txt";

    CHECK(run_cli("make-data -c " + cfg_file.string(), err) == 0);
    CHECK(run_cli("make-data -c " + cfg_file.string(), err) == 1);
    const auto e = json::parse(slurp(err));
    CHECK(e["error"] == "io");
    CHECK(run_cli("make-data --force -c " + cfg_file.string(), err) == 0);

    json bad = tiny_config_json(root);
    bad["train"]["epochz"] = 3;
    { std::ofstream(root / "bad.json") << bad.dump(); }
    CHECK(run_cli("train -c " + (root / "bad.json").string(), err) == 1);
    CHECK(json::parse(slurp(err))["error"] == "config");
    CHECK(slurp(err).find("train.epochz") != std::string::npos);

    CHECK(run_cli("pretrain-codec --steps 2 -c " + cfg_file.string(), err) == 0);
    CHECK(fs::exists(root / "data" / "codec.ckpt"));
    CHECK(run_cli("train --epochs 1 --schedule joint -c " + cfg_file.string(), err) == 0);
    CHECK(run_cli("generate --checkpoint " + (root / "run" / "final").string() + " --steps 2 -c " + cfg_file.string(), err) == 0);
    CHECK(run_cli("eval --generated " + (root / "run" / "generated").string() + " --csv " + (root / "r.csv").string() + " -c " + cfg_file.string(),
                  err) == 0);
    const auto report = json::parse(slurp(root / "run" / "generated" / "report.json"));
    CHECK(report.contains("frechet_frame"));
    CHECK(report.contains("mAP"));
    CHECK(fs::exists(root / "r.csv"));
    CHECK(run_cli("no-such-command", err) != 0);
}
