#include "lsa/commands.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "lsa/checkpoint.hpp"
#include "lsa/error.hpp"

namespace lsa::commands {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void say(const Logger& log, const std::string& msg) {
    if (log) log(msg);
}

void write_resolved_config(const config::RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    config::save(cfg, dir / "config.json");
}

ClipRequirements requirements(const config::RunConfig& cfg) { return {cfg.codec.downsample, cfg.extractor.patch_size}; }

std::vector<train::TrainExample> to_examples(std::vector<LabeledClip> clips) {
    std::vector<train::TrainExample> out;
    out.reserve(clips.size());
    for (auto& [clip, boxes] : clips) out.push_back({std::move(clip), std::move(boxes)});
    return out;
}

scenes::Manifest dataset_manifest(const config::RunConfig& cfg) { return scenes::load_manifest(cfg.dataset_dir / "manifest.json"); }

void require_dataset_dims(const config::RunConfig& cfg, const scenes::Manifest& m) {
    if (m.height != cfg.dataset.height || m.width != cfg.dataset.width || m.frames != cfg.dataset.frames) {
        throw ConfigError("dataset at " + cfg.dataset_dir.string() + " has " + std::to_string(m.frames) + " frames of " +
                          std::to_string(m.width) + "x" + std::to_string(m.height) + " but the config expects " +
                          std::to_string(cfg.dataset.frames) + " frames of " + std::to_string(cfg.dataset.width) + "x" +
                          std::to_string(cfg.dataset.height));
    }
}

train::TrainOptions train_options(const fs::path& out, const Logger& log, std::optional<std::int64_t> stop = std::nullopt) {
    train::TrainOptions o;
    o.out_dir = out;
    o.stop_at_step = stop;
    if (log) {
        o.on_step = [log](const train::MetricRecord& r) {
            if (r.step % 100 == 0) {
                std::ostringstream os;
                os << "step " << r.step << " epoch " << r.epoch << " diffusion " << r.loss.diffusion_loss << " feature " << r.loss.feature_loss
                   << " total " << r.loss.total;
                log(os.str());
            }
        };
    }
    return o;
}

/// Diffusion-only training of a fresh denoiser; the shared starting point for fine-tuning.
void train_base(const config::RunConfig& cfg, const std::vector<train::TrainExample>& data, nets::Backbones& nets, const fs::path& out,
                const Logger& log) {
    if (cfg.train.base_epochs == 0) return;
    say(log, "base denoiser: " + std::to_string(cfg.train.base_epochs) + " diffusion-only epochs");
    train::TrainSchedule base = train::make_train_schedule(train::ScheduleMode::DiffusionOnly, cfg.train.base_epochs, cfg.loss,
                                                           cfg.train.learning_rate, cfg.train.batch_size, cfg.seed);
    base.optimizer = cfg.train.optimizer;
    base.sigma_sampler = cfg.train.sigma_sampler;
    train::train(data, nets, base, train_options(out, log));
}

void clear_directory(const fs::path& dir) {
    for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
}

}  // namespace

double median(std::vector<double> v) {
    if (v.empty()) throw DomainError("median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

scenes::Manifest make_data(const config::RunConfig& cfg, bool force, const Logger& log) {
    const fs::path& out = cfg.dataset_dir;
    if (fs::exists(out) && !fs::is_directory(out)) throw IoError(out.string() + " exists and is not a directory");
    if (fs::exists(out) && !fs::is_empty(out)) {
        if (!force) throw IoError("refusing to write into non-empty directory " + out.string() + " (use --force to replace it)");
        clear_directory(out);
    }
    fs::create_directories(out);
    say(log, "writing " + std::to_string(cfg.dataset.train_count) + " train + " + std::to_string(cfg.dataset.test_count) + " test clips to " +
                 out.string());
    scenes::Manifest m = scenes::generate_dataset(cfg.dataset, out);
    write_resolved_config(cfg, out);
    return m;
}

std::vector<LabeledClip> load_split(const fs::path& root, const scenes::Manifest& manifest, const std::string& split, ClipRequirements req,
                                    std::size_t limit) {
    std::vector<LabeledClip> out;
    for (const auto* e : manifest.split(split)) {
        if (limit && out.size() >= limit) break;
        try {
            out.push_back(load_clip(scenes::clip_dir(root, *e), req));
        } catch (const Error& ex) {
            throw Error("clip " + e->id + ": " + ex.what());
        }
    }
    if (out.empty()) throw Error("no '" + split + "' clips listed in the manifest under " + root.string());
    return out;
}

nets::CodecTrainReport pretrain_codec(const config::RunConfig& cfg, const Logger& log) {
    const scenes::Manifest m = dataset_manifest(cfg);
    require_dataset_dims(cfg, m);
    std::vector<VideoClip> clips;
    for (auto& [clip, boxes] : load_split(cfg.dataset_dir, m, "train", requirements(cfg), cfg.codec_max_clips)) clips.push_back(std::move(clip));
    say(log, "pre-training codec on " + std::to_string(clips.size()) + " clips for " + std::to_string(cfg.codec_training.steps) + " steps");
    nets::Codec codec(cfg.codec);
    nets::CodecTrainReport report = nets::pretrain_codec(codec, clips, cfg.codec_training);
    std::vector<VideoClip> held_out;
    for (auto& [clip, boxes] : load_split(cfg.dataset_dir, m, "test", requirements(cfg), 32)) held_out.push_back(std::move(clip));
    const double test_mse = nets::reconstruction_mse(codec, held_out);
    const fs::path file = cfg.codec_path();
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    nets::save_codec(codec, file);
    json r{{"final_train_mse", report.final_recon_mse}, {"held_out_mse", test_mse}, {"latent_scale", report.latent_scale},
           {"steps", cfg.codec_training.steps}};
    write_text_file(fs::path(file).replace_extension(".report.json"), r.dump(1) + "\n");
    say(log, "codec: train mse " + std::to_string(report.final_recon_mse) + ", held-out mse " + std::to_string(test_mse));
    return report;
}

nets::Backbones make_backbones(const config::RunConfig& cfg) {
    nets::Backbones nets(cfg.codec, cfg.denoiser, cfg.extractor);
    const fs::path file = cfg.codec_path();
    if (!fs::exists(file)) throw IoError("codec checkpoint not found: " + file.string() + " (run pretrain-codec first)");
    nets::Codec codec = nets::load_codec(file);
    if (!(codec.spec() == cfg.codec)) {
        throw SpecMismatchError("codec checkpoint " + file.string() + " has spec " + nets::to_json(codec.spec()).dump() + ", config expects " +
                                nets::to_json(cfg.codec).dump());
    }
    nets.codec = std::move(codec);
    nets.freeze_for_finetuning();
    return nets;
}

TrainCommandResult train(const config::RunConfig& cfg, const TrainCommandOptions& opts, const Logger& log) {
    const scenes::Manifest m = dataset_manifest(cfg);
    require_dataset_dims(cfg, m);
    const auto data = to_examples(load_split(cfg.dataset_dir, m, "train", requirements(cfg), cfg.train.max_clips));
    const train::TrainSchedule schedule = cfg.schedule();
    write_resolved_config(cfg, cfg.output_dir);

    TrainCommandResult out;
    nets::Backbones nets = make_backbones(cfg);
    train::TrainResult r;
    if (!opts.resume_from.empty()) {
        say(log, "resuming from " + opts.resume_from.string());
        r = train::resume(opts.resume_from, data, train_options(cfg.output_dir, log, opts.stop_at_step), {schedule, cfg.backbone_specs()}, &nets);
    } else {
        train_base(cfg, data, nets, cfg.output_dir / "base", log);
        say(log, "training: " + train::to_string(schedule.mode) + " schedule, " + std::to_string(schedule.epochs) + " epochs, " +
                     std::to_string(data.size()) + " clips");
        r = train::train(data, nets, schedule, train_options(cfg.output_dir, log, opts.stop_at_step));
    }
    out.state = std::move(r.state);
    out.finished = r.finished;
    if (r.finished) {
        out.final_dir = cfg.output_dir / "final";
        fs::create_directories(out.final_dir);
        nets::save_backbones(nets, out.final_dir);
    }
    return out;
}

void generate(const fs::path& checkpoint_dir, const fs::path& manifest_file, const fs::path& out_dir, const config::RunConfig& cfg,
              const std::string& split, const Logger& log) {
    const nets::Backbones nets = nets::load_backbones(checkpoint_dir);
    const scenes::Manifest m = scenes::load_manifest(manifest_file);
    const fs::path root = manifest_file.parent_path();
    const eval::EvalConfig ecfg = cfg.resolved_eval();
    const ClipRequirements req{nets.codec.spec().downsample, nets.extractor.spec().patch_size};

    scenes::Manifest out_manifest = m;
    out_manifest.clips.clear();
    std::size_t count = 0;
    fs::create_directories(out_dir);
    for (const auto* e : m.split(split)) {
        if (cfg.eval_max_clips && count >= cfg.eval_max_clips) break;
        try {
            const auto [clip, boxes] = load_clip(scenes::clip_dir(root, *e), req);
            const VideoClip gen = eval::generate_clip(nets, clip, ecfg);
            save_clip(gen, BoxTrack(gen.num_frames()), scenes::clip_dir(out_dir, *e));
        } catch (const Error& ex) {
            throw Error("clip " + e->id + ": " + ex.what());
        }
        out_manifest.clips.push_back(*e);
        if (++count % 50 == 0) say(log, "generated " + std::to_string(count) + " clips");
    }
    if (count == 0) throw Error("no '" + split + "' clips in " + manifest_file.string());
    scenes::save_manifest(out_manifest, out_dir / "manifest.json");
    write_resolved_config(cfg, out_dir);
}

eval::EvalReport evaluate(const fs::path& generated_dir, const fs::path& manifest_file, const config::RunConfig& cfg, const fs::path& report_file,
                          const fs::path& csv_file, const std::string& split) {
    const scenes::Manifest m = scenes::load_manifest(manifest_file);
    const fs::path root = manifest_file.parent_path();
    const ClipRequirements req = requirements(cfg);
    std::vector<LabeledClip> gt = load_split(root, m, split, req, cfg.eval_max_clips);

    std::set<std::string> gen_ids;
    if (fs::is_directory(generated_dir / split))
        for (const auto& d : fs::directory_iterator(generated_dir / split))
            if (d.is_directory()) gen_ids.insert(d.path().filename().string());
    std::vector<std::string> missing;
    for (const auto& [clip, boxes] : gt)
        if (!gen_ids.count(clip.clip_id())) missing.push_back(clip.clip_id());
    if (!missing.empty()) {
        std::string msg = "generated clips missing for " + std::to_string(missing.size()) + " ground-truth ids:";
        for (const auto& id : missing) msg += " " + id;
        throw InvariantError(msg);
    }
    std::vector<VideoClip> gen;
    for (const auto& [clip, boxes] : gt) {
        try {
            gen.push_back(load_clip(generated_dir / split / clip.clip_id(), req).first);
        } catch (const Error& ex) {
            throw Error("generated clip " + clip.clip_id() + ": " + ex.what());
        }
    }
    if (gen_ids.size() != gt.size() && cfg.eval_max_clips == 0) {
        std::set<std::string> known;
        for (const auto& [clip, boxes] : gt) known.insert(clip.clip_id());
        std::string msg = "generated clips without ground truth:";
        for (const auto& id : gen_ids)
            if (!known.count(id)) msg += " " + id;
        throw InvariantError(msg);
    }
    const nets::FeatureExtractor extractor(cfg.extractor);
    eval::EvalReport r = eval::evaluate_clips(gt, gen, extractor, cfg.resolved_eval());
    r.config["run"] = config::to_json(cfg);
    if (!report_file.empty()) eval::write_report(r, report_file, csv_file);
    return r;
}

json AblationResult::to_json() const {
    json rows_j = json::array();
    for (const auto& r : rows) {
        rows_j.push_back(
            {{"name", r.name}, {"seed", r.seed}, {"mAP", r.mAP}, {"mIoU", r.mIoU}, {"frechet_frame", r.frechet_frame}, {"frechet_clip", r.frechet_clip}});
    }
    return {{"rows", rows_j},
            {"medians", medians},
            {"orderings", orderings},
            {"frozen_modules_unchanged", frozen_modules_unchanged},
            {"denoiser_changed", denoiser_changed}};
}

std::string AblationResult::to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "name,seed,mAP,mIoU,frechet_frame,frechet_clip\n";
    for (const auto& r : rows) os << r.name << ',' << r.seed << ',' << r.mAP << ',' << r.mIoU << ',' << r.frechet_frame << ',' << r.frechet_clip << '\n';
    for (const auto& [name, m] : medians)
        os << name << ",median," << m.at("mAP") << ',' << m.at("mIoU") << ',' << m.at("frechet_frame") << ',' << m.at("frechet_clip") << '\n';
    return os.str();
}

AblationResult run_ablation(const config::RunConfig& cfg_in, const Logger& log) {
    config::RunConfig cfg = cfg_in;
    if (!fs::exists(cfg.dataset_dir / "manifest.json")) make_data(cfg, false, log);
    if (!fs::exists(cfg.codec_path())) pretrain_codec(cfg, log);
    const scenes::Manifest m = dataset_manifest(cfg);
    require_dataset_dims(cfg, m);
    const auto data = to_examples(load_split(cfg.dataset_dir, m, "train", requirements(cfg), cfg.train.max_clips));
    const auto test = load_split(cfg.dataset_dir, m, "test", requirements(cfg), cfg.eval_max_clips);
    write_resolved_config(cfg, cfg.output_dir);
    const eval::EvalConfig ecfg = cfg.resolved_eval();
    const std::size_t steps_per_epoch = (data.size() + cfg.train.batch_size - 1) / cfg.train.batch_size;

    AblationResult result;
    const auto score = [&](const std::string& name, std::uint64_t seed, const nets::Backbones& nets, const fs::path& dir) {
        say(log, "evaluating " + name + " (seed " + std::to_string(seed) + ")");
        eval::EvalReport r = eval::evaluate(nets, test, ecfg);
        eval::write_report(r, dir / "report.json", dir / "report.csv");
        result.rows.push_back({name, seed, r.mAP, r.mIoU, r.frechet_frame, r.frechet_clip});
    };

    for (const std::uint64_t seed : cfg.ablation.seeds) {
        config::RunConfig c = cfg;
        c.seed = seed;
        c.denoiser.parameter_seed = cfg.denoiser.parameter_seed + seed;
        const fs::path root = cfg.output_dir / ("seed-" + std::to_string(seed));
        nets::Backbones base = make_backbones(c);
        const std::uint64_t codec_hash = base.codec.params().hash(), extractor_hash = base.extractor.params().hash();
        train_base(c, data, base, root / "base", log);
        const std::uint64_t base_hash = base.denoiser.params().hash();

        // the staged variants and the diffusion-only baseline share their first epoch
        config::RunConfig staged_cfg = c;
        staged_cfg.train.schedule = train::ScheduleMode::Staged;
        staged_cfg.loss.mask.variant = loss::MaskVariant::Hybrid;
        {
            nets::Backbones n = base;
            say(log, "seed " + std::to_string(seed) + ": shared diffusion-only epoch");
            train::train(data, n, staged_cfg.schedule(), train_options(root / "epoch1", log, static_cast<std::int64_t>(steps_per_epoch)));
        }
        const fs::path e1 = train::epoch_checkpoint_dir(root / "epoch1", 1);

        const auto branch = [&](const std::string& name, train::TrainSchedule schedule) {
            say(log, "seed " + std::to_string(seed) + ": " + name);
            nets::Backbones n = base;
            train::resume(e1, data, train_options(root / name, log), {std::move(schedule), c.backbone_specs()}, &n);
            result.frozen_modules_unchanged =
                result.frozen_modules_unchanged && n.codec.params().hash() == codec_hash && n.extractor.params().hash() == extractor_hash;
            result.denoiser_changed = result.denoiser_changed && n.denoiser.params().hash() != base_hash;
            score(name, seed, n, root / name);
        };
        for (const auto variant : {loss::MaskVariant::Hybrid, loss::MaskVariant::BoxOnly, loss::MaskVariant::GlobalOnly}) {
            config::RunConfig v = staged_cfg;
            v.loss.mask.variant = variant;
            branch(loss::to_string(variant), v.schedule());
        }
        config::RunConfig d = c;
        d.train.schedule = train::ScheduleMode::DiffusionOnly;
        branch("diffusion-only", d.schedule());

        {
            say(log, "seed " + std::to_string(seed) + ": joint-hybrid");
            config::RunConfig j = c;
            j.train.schedule = train::ScheduleMode::Joint;
            j.loss.mask.variant = loss::MaskVariant::Hybrid;
            nets::Backbones n = base;
            train::train(data, n, j.schedule(), train_options(root / "joint-hybrid", log));
            score("joint-hybrid", seed, n, root / "joint-hybrid");
        }
    }

    for (const std::string name : {"hybrid", "box-only", "global-only", "joint-hybrid", "diffusion-only"}) {
        std::vector<double> map, miou, ff, fc;
        for (const auto& r : result.rows)
            if (r.name == name) {
                map.push_back(r.mAP);
                miou.push_back(r.mIoU);
                ff.push_back(r.frechet_frame);
                fc.push_back(r.frechet_clip);
            }
        result.medians[name] = {{"mAP", median(map)}, {"mIoU", median(miou)}, {"frechet_frame", median(ff)}, {"frechet_clip", median(fc)}};
    }
    const auto med = [&](const std::string& n, const std::string& k) { return result.medians.at(n).at(k); };
    result.orderings["mAP hybrid > box-only"] = med("hybrid", "mAP") > med("box-only", "mAP");
    result.orderings["mAP box-only > global-only"] = med("box-only", "mAP") > med("global-only", "mAP");
    result.orderings["mAP staged-hybrid > joint-hybrid"] = med("hybrid", "mAP") > med("joint-hybrid", "mAP");
    result.orderings["mAP staged-hybrid > diffusion-only"] = med("hybrid", "mAP") > med("diffusion-only", "mAP");
    result.orderings["frechet_frame staged-hybrid < diffusion-only"] = med("hybrid", "frechet_frame") < med("diffusion-only", "frechet_frame");

    write_text_file(cfg.output_dir / "ablation.json", result.to_json().dump(1) + "\n");
    write_text_file(cfg.output_dir / "ablation.csv", result.to_csv());
    return result;
}

}  // namespace lsa::commands
