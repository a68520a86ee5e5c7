#include "lsa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "lsa/checkpoint.hpp"
#include "lsa/error.hpp"
#include "lsa/scenes.hpp"

namespace lsa::train {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kLsaDiffusionWeight = 0.9;

std::string serialize_rng(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

std::mt19937_64 deserialize_rng(const std::string& s) {
    std::mt19937_64 rng;
    std::istringstream is(s);
    is >> rng;
    if (!is) throw FormatError("corrupt random-number-generator state in checkpoint");
    return rng;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(scenes::clip_seed(seed, 0x5eedULL + epoch));
    // Fisher-Yates with our own index draw keeps the order identical across standard libraries
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    return order;
}

json history_to_json(const std::vector<MetricRecord>& h) {
    json out = json::array();
    for (const auto& r : h) {
        out.push_back({r.step, r.epoch, r.loss.diffusion_loss, r.loss.feature_loss, r.loss.total, r.loss.diffusion_weight, r.loss.lambda_feat});
    }
    return out;
}

std::vector<MetricRecord> history_from_json(const json& j) {
    std::vector<MetricRecord> h;
    for (const auto& e : j) {
        MetricRecord r;
        r.step = e.at(0).get<std::int64_t>();
        r.epoch = e.at(1).get<std::int64_t>();
        r.loss = {e.at(2).get<double>(), e.at(3).get<double>(), e.at(4).get<double>(), e.at(5).get<double>(), e.at(6).get<double>()};
        h.push_back(r);
    }
    return h;
}

class MetricsLog {
public:
    MetricsLog(const fs::path& out_dir, const std::vector<MetricRecord>& history) {
        if (out_dir.empty()) return;
        fs::create_directories(out_dir);
        out_.open(out_dir / "metrics.ndjson", std::ios::trunc);
        if (!out_) throw IoError("cannot write " + (out_dir / "metrics.ndjson").string());
        for (const auto& r : history) out_ << metric_line(r) << '\n';
        out_.flush();
    }

    void append(const MetricRecord& r) {
        if (!out_.is_open()) return;
        out_ << metric_line(r) << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

TrainResult run(const std::vector<TrainExample>& dataset, nets::Backbones& nets, const TrainSchedule& schedule, RunState state, AdamW& opt,
                const TrainOptions& opts) {
    schedule.validate();
    if (dataset.empty()) throw Error("train: empty dataset");
    nets.freeze_for_finetuning();
    nets.denoiser.params().zero_grad();

    std::mt19937_64 rng = state.rng_state.empty() ? std::mt19937_64(schedule.seed) : deserialize_rng(state.rng_state);
    MetricsLog log(opts.out_dir, state.metric_history);

    // frozen-side targets never change during fine-tuning, so they are computed once
    std::vector<loss::ClipTargets> targets;
    targets.reserve(dataset.size());
    const loss::LossConfig& first = schedule.config_for_epoch(static_cast<std::size_t>(state.epoch));
    loss::MaskConfig cached_mask = first.mask;
    loss::FeatureTarget cached_target = first.target;
    for (const auto& ex : dataset) targets.push_back(loss::prepare_targets(ex.clip, ex.boxes, nets, first));
    const std::size_t p = nets.extractor.spec().patch_size;

    TrainResult result;
    const std::size_t B = schedule.batch_size;
    const std::size_t steps_per_epoch = (dataset.size() + B - 1) / B;
    for (auto epoch = static_cast<std::size_t>(state.epoch); epoch < schedule.epochs; ++epoch) {
        const loss::LossConfig& cfg = schedule.config_for_epoch(epoch);
        if (cfg.target != cached_target) {
            cached_target = cfg.target;
            cached_mask = cfg.mask;
            for (std::size_t i = 0; i < dataset.size(); ++i) targets[i] = loss::prepare_targets(dataset[i].clip, dataset[i].boxes, nets, cfg);
        } else if (!(cfg.mask == cached_mask)) {
            cached_mask = cfg.mask;
            for (std::size_t i = 0; i < dataset.size(); ++i) {
                const VideoClip& c = dataset[i].clip;
                targets[i].mask = loss::build_mask(dataset[i].boxes, c.height() / p, c.width() / p, p, cached_mask);
            }
        }
        const std::vector<std::size_t> order = epoch_order(dataset.size(), schedule.seed, epoch);
        for (auto s = static_cast<std::size_t>(state.step_in_epoch); s < steps_per_epoch; ++s) {
            const std::size_t begin = s * B, end = std::min(dataset.size(), begin + B);
            const double inv = 1.0 / static_cast<double>(end - begin);
            nets.denoiser.params().zero_grad();
            LossBreakdown mean{0, 0, 0, cfg.diffusion_weight, cfg.lambda_feat};
            for (std::size_t k = begin; k < end; ++k) {
                const loss::ClipTargets& t = targets[order[k]];
                const double sigma = schedule.sigma_sampler(rng);
                const Tensor noise = diffusion::standard_normal(t.z0.shape(), rng);
                const loss::TrainingLoss L = loss::lsa_training_loss(t, ad::constant(t.z0), sigma, noise, nets, cfg);
                if (!std::isfinite(L.breakdown.total)) {
                    std::string ids;
                    for (std::size_t q = begin; q < end; ++q) ids += (ids.empty() ? "" : ", ") + dataset[order[q]].clip.clip_id();
                    throw NonFiniteError("non-finite loss at step " + std::to_string(state.global_step + 1) + " (batch: " + ids + ")");
                }
                ad::backward(ad::scale(L.total, inv));
                mean.diffusion_loss += inv * L.breakdown.diffusion_loss;
                mean.feature_loss += inv * L.breakdown.feature_loss;
            }
            mean.total = mean.diffusion_weight * mean.diffusion_loss + mean.lambda_feat * mean.feature_loss;
            opt.step(nets.denoiser.params());
            nets.denoiser.params().zero_grad();

            ++state.global_step;
            state.step_in_epoch = static_cast<std::int64_t>(s + 1);
            const MetricRecord rec{state.global_step, static_cast<std::int64_t>(epoch + 1), mean};
            state.metric_history.push_back(rec);
            log.append(rec);
            if (opts.on_step) opts.on_step(rec);

            if (opts.stop_at_step && state.global_step >= *opts.stop_at_step && s + 1 < steps_per_epoch) {
                state.rng_state = serialize_rng(rng);
                if (!opts.out_dir.empty()) save_run_checkpoint(step_checkpoint_dir(opts.out_dir, state.global_step), nets, schedule, state, opt);
                result.state = std::move(state);
                return result;
            }
        }
        state.epoch = static_cast<std::int64_t>(epoch + 1);
        state.step_in_epoch = 0;
        state.rng_state = serialize_rng(rng);
        if (!opts.out_dir.empty()) save_run_checkpoint(epoch_checkpoint_dir(opts.out_dir, epoch + 1), nets, schedule, state, opt);
        if (opts.stop_at_step && state.global_step >= *opts.stop_at_step && epoch + 1 < schedule.epochs) {
            result.state = std::move(state);
            return result;
        }
    }
    state.rng_state = serialize_rng(rng);
    result.state = std::move(state);
    result.finished = true;
    return result;
}

AdamWConfig optimizer_config(const TrainSchedule& s) {
    AdamWConfig c = s.optimizer;
    c.learning_rate = s.learning_rate;
    return c;
}

}  // namespace

std::string to_string(ScheduleMode m) {
    switch (m) {
        case ScheduleMode::Staged: return "staged";
        case ScheduleMode::Joint: return "joint";
        case ScheduleMode::DiffusionOnly: return "diffusion-only";
    }
    return "?";
}

ScheduleMode parse_schedule_mode(const std::string& s) {
    if (s == "staged") return ScheduleMode::Staged;
    if (s == "joint") return ScheduleMode::Joint;
    if (s == "diffusion-only") return ScheduleMode::DiffusionOnly;
    throw ConfigError("unknown schedule '" + s + "' (expected staged | joint | diffusion-only)");
}

void TrainSchedule::validate() const {
    if (epochs == 0) throw ConfigError("schedule needs at least one epoch");
    if (epoch_configs.size() != epochs) {
        throw ConfigError("schedule has " + std::to_string(epoch_configs.size()) + " epoch configs for " + std::to_string(epochs) + " epochs");
    }
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (!(sigma_sampler.scale > 0.0)) throw ConfigError("sigma sampler scale must be positive");
    for (std::size_t e = 0; e < epochs; ++e) {
        const auto& c = epoch_configs[e];
        c.validate();
        const std::string where = "epoch " + std::to_string(e + 1) + " of a " + to_string(mode) + " schedule";
        const bool diffusion_only_epoch = c.lambda_feat == 0.0 && c.diffusion_weight == 1.0;
        const bool lsa_epoch = c.lambda_feat > 0.0 && c.diffusion_weight == kLsaDiffusionWeight;
        switch (mode) {
            case ScheduleMode::Staged:
                if (e == 0 && !diffusion_only_epoch) throw ConfigError(where + " must use weights (1.0, 0)");
                if (e > 0 && !lsa_epoch) throw ConfigError(where + " must use diffusion weight 0.9 and lambda_feat > 0");
                break;
            case ScheduleMode::Joint:
                if (!lsa_epoch) throw ConfigError(where + " must use diffusion weight 0.9 and lambda_feat > 0");
                break;
            case ScheduleMode::DiffusionOnly:
                if (!diffusion_only_epoch) throw ConfigError(where + " must use weights (1.0, 0)");
                break;
        }
    }
}

const loss::LossConfig& TrainSchedule::config_for_epoch(std::size_t epoch) const {
    if (epoch >= epoch_configs.size()) throw InvariantError("no loss config for epoch " + std::to_string(epoch + 1));
    return epoch_configs[epoch];
}

TrainSchedule make_train_schedule(ScheduleMode mode, std::size_t epochs, const loss::LossConfig& lsa, double learning_rate,
                                  std::size_t batch_size, std::uint64_t seed) {
    TrainSchedule s;
    s.mode = mode;
    s.epochs = epochs;
    s.learning_rate = learning_rate;
    s.batch_size = batch_size;
    s.seed = seed;
    loss::LossConfig diff = lsa;
    diff.lambda_feat = 0.0;
    diff.diffusion_weight = 1.0;
    loss::LossConfig full = lsa;
    full.diffusion_weight = kLsaDiffusionWeight;
    for (std::size_t e = 0; e < epochs; ++e) {
        const bool feature_on = mode == ScheduleMode::Joint || (mode == ScheduleMode::Staged && e > 0);
        s.epoch_configs.push_back(feature_on ? full : diff);
    }
    s.validate();
    return s;
}

json to_json(const TrainSchedule& s) {
    json epochs = json::array();
    for (const auto& c : s.epoch_configs) epochs.push_back(loss::to_json(c));
    return {{"mode", to_string(s.mode)},
            {"epochs", s.epochs},
            {"epoch_configs", epochs},
            {"learning_rate", s.learning_rate},
            {"batch_size", s.batch_size},
            {"seed", s.seed},
            {"optimizer",
             {{"beta1", s.optimizer.beta1},
              {"beta2", s.optimizer.beta2},
              {"eps", s.optimizer.eps},
              {"weight_decay", s.optimizer.weight_decay},
              {"grad_clip", s.optimizer.grad_clip}}},
            {"sigma_sampler", {{"location", s.sigma_sampler.location}, {"scale", s.sigma_sampler.scale}}}};
}

TrainSchedule train_schedule_from_json(const json& j) {
    TrainSchedule s;
    try {
        s.mode = parse_schedule_mode(j.at("mode").get<std::string>());
        s.epochs = j.at("epochs").get<std::size_t>();
        for (const auto& c : j.at("epoch_configs")) s.epoch_configs.push_back(loss::loss_config_from_json(c));
        s.learning_rate = j.at("learning_rate").get<double>();
        s.batch_size = j.at("batch_size").get<std::size_t>();
        s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("optimizer")) {
            const auto& o = j["optimizer"];
            s.optimizer.beta1 = o.value("beta1", s.optimizer.beta1);
            s.optimizer.beta2 = o.value("beta2", s.optimizer.beta2);
            s.optimizer.eps = o.value("eps", s.optimizer.eps);
            s.optimizer.weight_decay = o.value("weight_decay", s.optimizer.weight_decay);
            s.optimizer.grad_clip = o.value("grad_clip", s.optimizer.grad_clip);
        }
        if (j.contains("sigma_sampler")) {
            s.sigma_sampler.location = j["sigma_sampler"].value("location", s.sigma_sampler.location);
            s.sigma_sampler.scale = j["sigma_sampler"].value("scale", s.sigma_sampler.scale);
        }
    } catch (const json::exception& ex) {
        throw FormatError(std::string("malformed schedule: ") + ex.what());
    }
    s.validate();
    return s;
}

std::string metric_line(const MetricRecord& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["diffusion_loss"] = r.loss.diffusion_loss;
    j["feature_loss"] = r.loss.feature_loss;
    j["total"] = r.loss.total;
    return j.dump();
}

fs::path epoch_checkpoint_dir(const fs::path& out_dir, std::size_t epoch) { return out_dir / "checkpoints" / ("epoch-" + std::to_string(epoch)); }

fs::path step_checkpoint_dir(const fs::path& out_dir, std::int64_t step) { return out_dir / "checkpoints" / ("step-" + std::to_string(step)); }

void save_run_checkpoint(const fs::path& dir, const nets::Backbones& nets, const TrainSchedule& schedule, const RunState& state,
                         const AdamW& optimizer) {
    fs::create_directories(dir);
    nets::save_backbones(nets, dir);
    json meta{{"global_step", state.global_step},
              {"epoch", state.epoch},
              {"step_in_epoch", state.step_in_epoch},
              {"rng_state", state.rng_state},
              {"optimizer_steps", optimizer.steps_taken()},
              {"schedule", to_json(schedule)},
              {"metric_history", history_to_json(state.metric_history)}};
    write_checkpoint({"run_state", std::move(meta), optimizer.state_tensors()}, dir / "state.ckpt");
}

ResumedRun load_run_checkpoint(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("checkpoint directory not found: " + dir.string());
    nets::Backbones nets = nets::load_backbones(dir);
    const CheckpointContainer c = read_checkpoint(dir / "state.ckpt");
    if (c.kind != "run_state") throw FormatError(dir.string() + "/state.ckpt is a '" + c.kind + "' checkpoint, not a run state");
    try {
        RunState st;
        st.global_step = c.meta.at("global_step").get<std::int64_t>();
        st.epoch = c.meta.at("epoch").get<std::int64_t>();
        st.step_in_epoch = c.meta.at("step_in_epoch").get<std::int64_t>();
        st.rng_state = c.meta.at("rng_state").get<std::string>();
        st.metric_history = history_from_json(c.meta.at("metric_history"));
        std::vector<std::pair<std::string, Tensor>> opt = c.tensors;
        opt.emplace_back("adam.steps", Tensor({1}, static_cast<double>(c.meta.at("optimizer_steps").get<std::int64_t>())));
        return {std::move(nets), train_schedule_from_json(c.meta.at("schedule")), std::move(st), std::move(opt)};
    } catch (const json::exception& ex) {
        throw FormatError("corrupt run state in " + dir.string() + ": " + ex.what());
    }
}

TrainResult train(const std::vector<TrainExample>& dataset, nets::Backbones& nets, const TrainSchedule& schedule, const TrainOptions& opts) {
    schedule.validate();
    AdamW opt(nets.denoiser.params(), optimizer_config(schedule));
    return run(dataset, nets, schedule, RunState{}, opt, opts);
}

TrainResult resume(const fs::path& dir, const std::vector<TrainExample>& dataset, const TrainOptions& opts, const ResumeOptions& resume_opts,
                   nets::Backbones* nets_out) {
    ResumedRun r = load_run_checkpoint(dir);
    if (resume_opts.expected_specs) {
        const auto& e = *resume_opts.expected_specs;
        const auto mismatch = [&](const char* which, const json& want, const json& got) {
            throw SpecMismatchError(std::string(which) + " spec in checkpoint " + dir.string() + " is " + got.dump() + ", expected " + want.dump());
        };
        if (!(e.codec == r.nets.codec.spec())) mismatch("codec", nets::to_json(e.codec), nets::to_json(r.nets.codec.spec()));
        if (!(e.denoiser == r.nets.denoiser.spec())) mismatch("denoiser", nets::to_json(e.denoiser), nets::to_json(r.nets.denoiser.spec()));
        if (!(e.extractor == r.nets.extractor.spec())) mismatch("extractor", nets::to_json(e.extractor), nets::to_json(r.nets.extractor.spec()));
    }
    const TrainSchedule schedule = resume_opts.schedule ? *resume_opts.schedule : r.schedule;
    schedule.validate();
    if (static_cast<std::size_t>(r.state.epoch) > schedule.epochs) throw ConfigError("checkpoint is past the end of the schedule");
    AdamW opt(r.nets.denoiser.params(), optimizer_config(schedule));
    const auto steps = static_cast<std::int64_t>(r.optimizer_state.back().second[0]);
    r.optimizer_state.pop_back();
    opt.load_state(r.optimizer_state, steps);
    TrainResult result = run(dataset, r.nets, schedule, std::move(r.state), opt, opts);
    if (nets_out) *nets_out = std::move(r.nets);
    return result;
}

}  // namespace lsa::train
