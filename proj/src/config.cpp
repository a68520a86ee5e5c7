#include "lsa/config.hpp"

#include "lsa/checkpoint.hpp"
#include "lsa/error.hpp"

namespace lsa::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Leaf types: uint, number, string, bool, uint[2], number[2], uint[], string[].
const json& schema() {
    static const json s = json::parse(R"({
      "seed": "uint",
      "paths": {"dataset": "string", "output": "string", "codec": "string"},
      "dataset": {
        "train_count": "uint", "test_count": "uint", "frames": "uint", "height": "uint", "width": "uint",
        "fps": "uint", "seed": "uint",
        "distribution": {
          "num_objects": "uint[2]", "motion_models": "string[]", "backgrounds": "string[]",
          "object_size_range": "number[2]", "ego_motion_range": "number[2]", "speed": "number"
        }
      },
      "backbones": {
        "codec": {"downsample": "uint", "latent_channels": "uint", "hidden": "uint", "parameter_seed": "uint"},
        "denoiser": {"latent_channels": "uint", "hidden": "uint", "cond_dim": "uint", "temporal_kernel": "uint", "parameter_seed": "uint"},
        "extractor": {"patch_size": "uint", "feature_dim": "uint", "parameter_seed": "uint"}
      },
      "codec_training": {"steps": "uint", "frames_per_step": "uint", "learning_rate": "number", "seed": "uint", "max_clips": "uint"},
      "train": {
        "schedule": "string", "epochs": "uint", "learning_rate": "number", "batch_size": "uint", "max_clips": "uint",
        "base_epochs": "uint",
        "optimizer": {"beta1": "number", "beta2": "number", "eps": "number", "weight_decay": "number", "grad_clip": "number"},
        "sigma_sampler": {"location": "number", "scale": "number"}
      },
      "loss": {
        "lambda_feat": "number", "variant": "string", "alpha": "number", "overlap_rule": "string",
        "min_fraction": "number", "mask_application": "string", "feature_target": "string", "feature_sigma_max": "number"
      },
      "eval": {
        "sampling_steps": "uint", "sigma_min": "number", "sigma_max": "number", "rho": "number", "seed": "uint",
        "iou_threshold": "number", "min_size": "number", "class_whitelist": "string[]", "min_chroma": "number",
        "min_area": "uint", "reference": "string", "max_clips": "uint"
      },
      "ablation": {"seeds": "uint[]"}
    })");
    return s;
}

bool leaf_ok(const json& v, const std::string& type) {
    const auto all = [&](auto pred) {
        if (!v.is_array()) return false;
        for (const auto& e : v)
            if (!pred(e)) return false;
        return true;
    };
    const auto is_uint = [](const json& e) { return e.is_number_unsigned() || (e.is_number_integer() && e.get<std::int64_t>() >= 0); };
    const auto is_num = [](const json& e) { return e.is_number(); };
    const auto is_str = [](const json& e) { return e.is_string(); };
    if (type == "uint") return is_uint(v);
    if (type == "number") return is_num(v);
    if (type == "string") return is_str(v);
    if (type == "bool") return v.is_boolean();
    if (type == "uint[2]") return all(is_uint) && v.size() == 2;
    if (type == "number[2]") return all(is_num) && v.size() == 2;
    if (type == "uint[]") return all(is_uint);
    if (type == "string[]") return all(is_str);
    return false;
}

void check(const json& j, const json& s, const std::string& path) {
    if (!j.is_object()) throw ConfigError("config: '" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (!s.contains(key)) throw ConfigError("config: unknown key '" + here + "'");
        const json& sub = s.at(key);
        if (sub.is_object()) {
            check(value, sub, here);
        } else if (!leaf_ok(value, sub.get<std::string>())) {
            throw ConfigError("config: '" + here + "' must be of type " + sub.get<std::string>() + ", got " + value.dump());
        }
    }
}

const json& section(const json& j, const char* key) {
    static const json empty = json::object();
    return j.contains(key) ? j.at(key) : empty;
}

}  // namespace

fs::path RunConfig::codec_path() const { return codec_checkpoint.empty() ? dataset_dir / "codec.ckpt" : codec_checkpoint; }

eval::EvalConfig RunConfig::resolved_eval() const {
    eval::EvalConfig e = eval;
    e.match.filter.min_size = eval_min_size ? *eval_min_size : 16.0 * static_cast<double>(dataset.height) / 64.0;
    return e;
}

train::TrainSchedule RunConfig::schedule() const {
    train::TrainSchedule s = train::make_train_schedule(train.schedule, train.epochs, loss, train.learning_rate, train.batch_size, seed);
    s.optimizer = train.optimizer;
    s.sigma_sampler = train.sigma_sampler;
    s.validate();
    return s;
}

train::BackboneSpecs RunConfig::backbone_specs() const { return {codec, denoiser, extractor}; }

RunConfig default_config() {
    RunConfig c;
    c.loss.lambda_feat = 1.0;
    c.loss.target = loss::FeatureTarget::Reconstruction;
    c.loss.feature_sigma_max = 0.5;
    c.codec_training.steps = 3000;
    c.train.base_epochs = 2;
    return c;
}

void validate_schema(const json& j) { check(j, schema(), ""); }

RunConfig from_json(const json& j) {
    validate_schema(j);
    RunConfig c = default_config();
    try {
        c.seed = j.value("seed", c.seed);
        const json& paths = section(j, "paths");
        if (paths.contains("dataset")) c.dataset_dir = paths["dataset"].get<std::string>();
        if (paths.contains("output")) c.output_dir = paths["output"].get<std::string>();
        if (paths.contains("codec")) c.codec_checkpoint = paths["codec"].get<std::string>();

        if (j.contains("dataset")) c.dataset = scenes::dataset_config_from_json(j["dataset"]);
        const json& bb = section(j, "backbones");
        if (bb.contains("codec")) c.codec = nets::codec_spec_from_json(bb["codec"]);
        if (bb.contains("denoiser")) c.denoiser = nets::denoiser_spec_from_json(bb["denoiser"]);
        if (bb.contains("extractor")) c.extractor = nets::extractor_spec_from_json(bb["extractor"]);

        const json& ct = section(j, "codec_training");
        c.codec_training.steps = ct.value("steps", c.codec_training.steps);
        c.codec_training.frames_per_step = ct.value("frames_per_step", c.codec_training.frames_per_step);
        c.codec_training.learning_rate = ct.value("learning_rate", c.codec_training.learning_rate);
        c.codec_training.seed = ct.value("seed", c.codec_training.seed);
        c.codec_max_clips = ct.value("max_clips", c.codec_max_clips);

        const json& tr = section(j, "train");
        if (tr.contains("schedule")) c.train.schedule = train::parse_schedule_mode(tr["schedule"].get<std::string>());
        c.train.epochs = tr.value("epochs", c.train.epochs);
        c.train.learning_rate = tr.value("learning_rate", c.train.learning_rate);
        c.train.batch_size = tr.value("batch_size", c.train.batch_size);
        c.train.max_clips = tr.value("max_clips", c.train.max_clips);
        c.train.base_epochs = tr.value("base_epochs", c.train.base_epochs);
        const json& opt = section(tr, "optimizer");
        c.train.optimizer.beta1 = opt.value("beta1", c.train.optimizer.beta1);
        c.train.optimizer.beta2 = opt.value("beta2", c.train.optimizer.beta2);
        c.train.optimizer.eps = opt.value("eps", c.train.optimizer.eps);
        c.train.optimizer.weight_decay = opt.value("weight_decay", c.train.optimizer.weight_decay);
        c.train.optimizer.grad_clip = opt.value("grad_clip", c.train.optimizer.grad_clip);
        const json& ss = section(tr, "sigma_sampler");
        c.train.sigma_sampler.location = ss.value("location", c.train.sigma_sampler.location);
        c.train.sigma_sampler.scale = ss.value("scale", c.train.sigma_sampler.scale);

        if (j.contains("loss")) {
            json l = j["loss"];
            if (!l.contains("lambda_feat")) l["lambda_feat"] = c.loss.lambda_feat;
            c.loss = loss::loss_config_from_json(l);
        }

        if (j.contains("eval")) {
            json e = j["eval"];
            if (e.contains("min_size")) c.eval_min_size = e["min_size"].get<double>();
            c.eval_max_clips = e.value("max_clips", c.eval_max_clips);
            e.erase("max_clips");
            c.eval = eval::eval_config_from_json(e);
        }
        const json& ab = section(j, "ablation");
        if (ab.contains("seeds")) c.ablation.seeds = ab["seeds"].get<std::vector<std::uint64_t>>();
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("config: ") + ex.what());
    }
    if (c.dataset.frames < 2) throw ConfigError("config: dataset.frames must be >= 2");
    const std::size_t unit = c.codec.downsample * c.extractor.patch_size;
    if (c.dataset.height % c.codec.downsample || c.dataset.width % c.codec.downsample || c.dataset.height % c.extractor.patch_size ||
        c.dataset.width % c.extractor.patch_size) {
        throw ConfigError("config: frame size " + std::to_string(c.dataset.width) + "x" + std::to_string(c.dataset.height) +
                          " must be divisible by the codec downsample and the patch size (" + std::to_string(unit) + " works)");
    }
    if (c.denoiser.latent_channels != c.codec.latent_channels) throw ConfigError("config: denoiser and codec latent_channels differ");
    if (c.denoiser.cond_dim != c.extractor.feature_dim) throw ConfigError("config: denoiser cond_dim must equal extractor feature_dim");
    if (c.ablation.seeds.empty()) throw ConfigError("config: ablation.seeds must not be empty");
    c.schedule();
    return c;
}

json to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["paths"] = {{"dataset", c.dataset_dir.string()}, {"output", c.output_dir.string()}, {"codec", c.codec_path().string()}};
    j["dataset"] = scenes::to_json(c.dataset);
    j["backbones"] = {{"codec", nets::to_json(c.codec)}, {"denoiser", nets::to_json(c.denoiser)}, {"extractor", nets::to_json(c.extractor)}};
    j["codec_training"] = {{"steps", c.codec_training.steps},
                           {"frames_per_step", c.codec_training.frames_per_step},
                           {"learning_rate", c.codec_training.learning_rate},
                           {"seed", c.codec_training.seed},
                           {"max_clips", c.codec_max_clips}};
    j["train"] = {{"schedule", train::to_string(c.train.schedule)},
                  {"epochs", c.train.epochs},
                  {"learning_rate", c.train.learning_rate},
                  {"batch_size", c.train.batch_size},
                  {"max_clips", c.train.max_clips},
                  {"base_epochs", c.train.base_epochs},
                  {"optimizer",
                   {{"beta1", c.train.optimizer.beta1},
                    {"beta2", c.train.optimizer.beta2},
                    {"eps", c.train.optimizer.eps},
                    {"weight_decay", c.train.optimizer.weight_decay},
                    {"grad_clip", c.train.optimizer.grad_clip}}},
                  {"sigma_sampler", {{"location", c.train.sigma_sampler.location}, {"scale", c.train.sigma_sampler.scale}}}};
    j["loss"] = loss::to_json(c.loss);
    j["loss"].erase("diffusion_weight");
    json e = eval::to_json(c.resolved_eval());
    e["max_clips"] = c.eval_max_clips;
    j["eval"] = e;
    j["ablation"] = {{"seeds", c.ablation.seeds}};
    return j;
}

RunConfig load(const fs::path& file) {
    if (!fs::exists(file)) throw IoError("config file not found: " + file.string());
    json j;
    try {
        j = json::parse(read_text_file(file));
    } catch (const json::parse_error& ex) {
        throw ConfigError("config " + file.string() + " is not valid JSON: " + ex.what());
    }
    return from_json(j);
}

void save(const RunConfig& c, const fs::path& file) { write_text_file(file, to_json(c).dump(2) + "\n"); }

}  // namespace lsa::config
