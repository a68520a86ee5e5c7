#include "lsa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "lsa/checkpoint.hpp"
#include "lsa/clip_io.hpp"
#include "lsa/diffusion.hpp"
#include "lsa/error.hpp"
#include "lsa/scenes.hpp"

namespace lsa::eval {

using nlohmann::json;

namespace {

constexpr double kEigenFloor = 1e-10;

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = ev[i] < kEigenFloor ? 0.0 : std::sqrt(ev[i]);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double trace_sqrt_psd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    double t = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double e = es.eigenvalues()[i];
        if (e >= kEigenFloor) t += std::sqrt(e);
    }
    return t;
}

Tensor as_single_frame(const Tensor& frame) {
    if (frame.rank() == 4 && frame.dim(0) == 1 && frame.dim(1) == 3) return frame;
    if (frame.rank() == 3 && frame.dim(0) == 3) return frame.reshaped({1, 3, frame.dim(1), frame.dim(2)});
    throw ShapeError("expected a [3 x H x W] or [1 x 3 x H x W] frame, got " + shape_str(frame.shape()));
}

std::vector<std::vector<Detection>> annotation_detections(const BoxTrack& boxes) {
    std::vector<std::vector<Detection>> out(boxes.size());
    for (std::size_t n = 0; n < boxes.size(); ++n)
        for (const Box& b : boxes[n]) out[n].push_back({b, 1.0});
    return out;
}

std::vector<std::string> effective_whitelist(const FilterConfig& f) {
    if (!f.class_whitelist.empty()) return f.class_whitelist;
    std::vector<std::string> all;
    for (const auto& c : scenes::palette()) all.push_back(c.name);
    return all;
}

}  // namespace

GaussianStats gaussian_stats(const std::vector<std::vector<double>>& samples) {
    if (samples.size() < 2) throw DomainError("gaussian_stats needs at least 2 samples, got " + std::to_string(samples.size()));
    const std::size_t d = samples.front().size();
    Eigen::MatrixXd X(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].size() != d) throw ShapeError("gaussian_stats: sample " + std::to_string(i) + " has a different dimension");
        for (std::size_t k = 0; k < d; ++k) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = samples[i][k];
    }
    GaussianStats s;
    s.sample_count = samples.size();
    s.mean = X.colwise().mean().transpose();
    const Eigen::MatrixXd C = X.rowwise() - s.mean.transpose();
    s.covariance = (C.transpose() * C) / static_cast<double>(samples.size() - 1);
    s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
    return s;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.mean.size() != b.mean.size() || a.covariance.rows() != b.covariance.rows()) {
        throw ShapeError("frechet_distance: dimension mismatch (" + std::to_string(a.mean.size()) + " vs " + std::to_string(b.mean.size()) + ")");
    }
    if (a.mean == b.mean && a.covariance == b.covariance) return 0.0;
    const double mean_term = (a.mean - b.mean).squaredNorm();
    const Eigen::MatrixXd s1 = sqrt_psd(a.covariance);
    const double cross = trace_sqrt_psd(s1 * b.covariance * s1);
    return std::max(0.0, mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * cross);
}

std::vector<double> frame_embedding(const nets::FeatureExtractor& extractor, const Tensor& frame) {
    const FeatureGrid g = extractor.extract(as_single_frame(frame));
    const std::size_t d = g.feature_dim(), P = g.grid_h() * g.grid_w();
    const Tensor& f = g.features();
    std::vector<double> out(2 * d, 0.0);
    for (std::size_t i = 0; i < P; ++i)
        for (std::size_t c = 0; c < d; ++c) out[c] += f[i * d + c];
    for (std::size_t c = 0; c < d; ++c) out[c] /= static_cast<double>(P);
    for (std::size_t i = 0; i < P; ++i)
        for (std::size_t c = 0; c < d; ++c) {
            const double dv = f[i * d + c] - out[c];
            out[d + c] += dv * dv;
        }
    for (std::size_t c = 0; c < d; ++c) out[d + c] = std::sqrt(out[d + c] / static_cast<double>(P));
    return out;
}

std::vector<double> clip_embedding(const nets::FeatureExtractor& extractor, const Tensor& frames) {
    if (frames.rank() != 4 || frames.dim(0) < 2) throw ShapeError("clip_embedding: expected [N x 3 x H x W] with N >= 2");
    const FeatureGrid g = extractor.extract(frames);
    const std::size_t N = frames.dim(0), d = g.feature_dim(), P = g.grid_h() * g.grid_w();
    const Tensor& f = g.features();
    std::vector<double> out(2 * d, 0.0);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < P; ++i)
            for (std::size_t c = 0; c < d; ++c) out[c] += f[(n * P + i) * d + c];
    for (std::size_t c = 0; c < d; ++c) out[c] /= static_cast<double>(N * P);
    for (std::size_t n = 0; n + 1 < N; ++n)
        for (std::size_t i = 0; i < P; ++i)
            for (std::size_t c = 0; c < d; ++c) out[d + c] += std::abs(f[((n + 1) * P + i) * d + c] - f[(n * P + i) * d + c]);
    for (std::size_t c = 0; c < d; ++c) out[d + c] /= static_cast<double>((N - 1) * P);
    return out;
}

std::vector<Detection> oracle_detect(const Tensor& frame_in, const DetectorConfig& cfg) {
    const Tensor frame = as_single_frame(frame_in);
    const std::size_t H = frame.dim(2), W = frame.dim(3), plane = H * W;
    const auto& pal = scenes::palette();
    std::vector<int> label(plane, -1);
    std::vector<double> chroma(plane, 0.0);
    for (std::size_t i = 0; i < plane; ++i) {
        const double r = frame[i], g = frame[plane + i], b = frame[2 * plane + i];
        chroma[i] = std::max({r, g, b}) - std::min({r, g, b});
        if (chroma[i] < cfg.min_chroma) continue;
        double best = 1e300;
        for (std::size_t k = 0; k < pal.size(); ++k) {
            const double dr = r - pal[k].rgb[0], dg = g - pal[k].rgb[1], db = b - pal[k].rgb[2];
            const double dist = dr * dr + dg * dg + db * db;
            if (dist < best) {
                best = dist;
                label[i] = static_cast<int>(k);
            }
        }
    }
    std::vector<Detection> out;
    std::vector<char> seen(plane, 0);
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < plane; ++start) {
        if (label[start] < 0 || seen[start]) continue;
        const int cls = label[start];
        std::size_t area = 0, x0 = W, y0 = H, x1 = 0, y1 = 0;
        double score = 0.0;
        stack.assign(1, start);
        seen[start] = 1;
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const std::size_t y = p / W, x = p % W;
            ++area;
            score += chroma[p];
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
            const auto visit = [&](std::size_t q) {
                if (!seen[q] && label[q] == cls) {
                    seen[q] = 1;
                    stack.push_back(q);
                }
            };
            if (x > 0) visit(p - 1);
            if (x + 1 < W) visit(p + 1);
            if (y > 0) visit(p - W);
            if (y + 1 < H) visit(p + W);
        }
        if (area < cfg.min_area) continue;
        Box b{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 + 1), static_cast<double>(y1 + 1),
              pal[static_cast<std::size_t>(cls)].name, static_cast<std::int64_t>(out.size())};
        out.push_back({b, std::clamp(score / static_cast<double>(area), 0.0, 1.0)});
    }
    return out;
}

Detector make_oracle_detector(DetectorConfig cfg) {
    return [cfg](const Tensor& frame) { return oracle_detect(frame, cfg); };
}

double iou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    const double inter = ix * iy;
    const double uni = a.width() * a.height() + b.width() * b.height() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

bool FilterConfig::keep(const Box& b) const {
    if (b.width() < min_size || b.height() < min_size) return false;
    if (class_whitelist.empty()) return true;
    return std::find(class_whitelist.begin(), class_whitelist.end(), b.class_label) != class_whitelist.end();
}

DetectionScore match_and_score(const std::vector<std::vector<Detection>>& gt, const std::vector<std::vector<Detection>>& pred,
                               const MatchConfig& cfg) {
    if (gt.size() != pred.size()) {
        throw ShapeError("match_and_score: " + std::to_string(gt.size()) + " ground-truth frames vs " + std::to_string(pred.size()) +
                         " predicted frames");
    }
    DetectionScore s;
    double ap_sum = 0.0;
    std::size_t classes_with_gt = 0;
    for (const std::string& cls : effective_whitelist(cfg.filter)) {
        std::vector<std::vector<Box>> g(gt.size());
        std::size_t npos = 0;
        struct P {
            std::size_t frame, order;
            double score;
            Box box;
        };
        std::vector<P> preds;
        for (std::size_t f = 0; f < gt.size(); ++f) {
            for (const auto& d : gt[f])
                if (d.box.class_label == cls && cfg.filter.keep(d.box)) {
                    g[f].push_back(d.box);
                    ++npos;
                }
            for (const auto& d : pred[f])
                if (d.box.class_label == cls && cfg.filter.keep(d.box)) preds.push_back({f, preds.size(), d.score, d.box});
        }
        s.gt_count += npos;
        s.pred_count += preds.size();
        if (npos == 0) continue;
        std::stable_sort(preds.begin(), preds.end(), [](const P& a, const P& b) { return a.score > b.score; });

        std::vector<std::vector<char>> used(gt.size());
        for (std::size_t f = 0; f < gt.size(); ++f) used[f].assign(g[f].size(), 0);
        std::vector<double> precision, recall;
        std::size_t tp = 0, fp = 0;
        for (const P& p : preds) {
            double best = -1.0;
            std::size_t best_k = 0;
            for (std::size_t k = 0; k < g[p.frame].size(); ++k) {
                if (used[p.frame][k]) continue;
                const double v = iou(p.box, g[p.frame][k]);
                if (v > best) {
                    best = v;
                    best_k = k;
                }
            }
            if (best >= cfg.iou_threshold) {
                used[p.frame][best_k] = 1;
                ++tp;
                s.matched_ious.push_back(best);
            } else {
                ++fp;
            }
            precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
            recall.push_back(static_cast<double>(tp) / static_cast<double>(npos));
        }
        // running max from the right gives the interpolated precision envelope
        for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
        double ap = 0.0;
        std::size_t idx = 0;
        for (int r = 0; r <= 100; ++r) {
            const double level = r / 100.0;
            while (idx < recall.size() && recall[idx] < level - 1e-12) ++idx;
            if (idx < recall.size()) ap += precision[idx];
        }
        ap /= 101.0;
        s.per_class_ap[cls] = ap;
        s.matched += tp;
        ap_sum += ap;
        ++classes_with_gt;
    }
    if (classes_with_gt == 0) return s;
    s.defined = true;
    s.mAP = ap_sum / static_cast<double>(classes_with_gt);
    s.mIoU = s.matched_ious.empty() ? 0.0
                                    : std::accumulate(s.matched_ious.begin(), s.matched_ious.end(), 0.0) /
                                          static_cast<double>(s.matched_ious.size());
    s.match_rate = static_cast<double>(s.matched) / static_cast<double>(s.gt_count);
    return s;
}

std::string to_string(ReferenceMode m) { return m == ReferenceMode::Detector ? "detector" : "annotations"; }

ReferenceMode parse_reference_mode(const std::string& s) {
    if (s == "detector") return ReferenceMode::Detector;
    if (s == "annotations") return ReferenceMode::Annotations;
    throw ConfigError("unknown reference mode '" + s + "' (expected detector | annotations)");
}

json to_json(const EvalConfig& c) {
    return {{"sampling_steps", c.sampling_steps},
            {"sigma_min", c.sigma_min},
            {"sigma_max", c.sigma_max},
            {"rho", c.rho},
            {"seed", c.seed},
            {"iou_threshold", c.match.iou_threshold},
            {"min_size", c.match.filter.min_size},
            {"class_whitelist", c.match.filter.class_whitelist},
            {"min_chroma", c.detector.min_chroma},
            {"min_area", c.detector.min_area},
            {"reference", to_string(c.reference)}};
}

EvalConfig eval_config_from_json(const json& j) {
    EvalConfig c;
    c.sampling_steps = j.value("sampling_steps", c.sampling_steps);
    c.sigma_min = j.value("sigma_min", c.sigma_min);
    c.sigma_max = j.value("sigma_max", c.sigma_max);
    c.rho = j.value("rho", c.rho);
    c.seed = j.value("seed", c.seed);
    c.match.iou_threshold = j.value("iou_threshold", c.match.iou_threshold);
    c.match.filter.min_size = j.value("min_size", c.match.filter.min_size);
    c.match.filter.class_whitelist = j.value("class_whitelist", c.match.filter.class_whitelist);
    c.detector.min_chroma = j.value("min_chroma", c.detector.min_chroma);
    c.detector.min_area = j.value("min_area", c.detector.min_area);
    if (j.contains("reference")) c.reference = parse_reference_mode(j["reference"].get<std::string>());
    if (c.sampling_steps == 0) throw ConfigError("sampling_steps must be >= 1");
    if (!(c.match.iou_threshold > 0.0 && c.match.iou_threshold <= 1.0)) throw ConfigError("iou_threshold must lie in (0, 1]");
    for (const auto& cls : c.match.filter.class_whitelist) scenes::object_class(cls);
    return c;
}

json to_json(const EvalReport& r) {
    json clips = json::array();
    for (const auto& c : r.per_clip) {
        clips.push_back({{"clip_id", c.clip_id},
                         {"gt_detections", c.gt_detections},
                         {"generated_detections", c.generated_detections},
                         {"matched", c.matched},
                         {"mean_iou", c.mean_iou},
                         {"pixel_mse", c.pixel_mse}});
    }
    return {{"frechet_frame", r.frechet_frame},
            {"frechet_clip", r.frechet_clip},
            {"mAP", r.mAP},
            {"mIoU", r.mIoU},
            {"match_rate", r.match_rate},
            {"detection_defined", r.detection_defined},
            {"num_clips", r.num_clips},
            {"per_class_ap", r.per_class_ap},
            {"filter", {{"min_size", r.config.value("min_size", 0.0)}, {"class_whitelist", r.config.value("class_whitelist", json::array())}}},
            {"config", r.config},
            {"per_clip", clips}};
}

std::string to_csv(const EvalReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "num_clips,frechet_frame,frechet_clip,mAP,mIoU,match_rate,detection_defined\n";
    os << r.num_clips << ',' << r.frechet_frame << ',' << r.frechet_clip << ',' << r.mAP << ',' << r.mIoU << ',' << r.match_rate << ','
       << (r.detection_defined ? "true" : "false") << '\n';
    return os.str();
}

void write_report(const EvalReport& r, const std::filesystem::path& json_file, const std::filesystem::path& csv_file) {
    write_text_file(json_file, to_json(r).dump(1) + "\n");
    if (!csv_file.empty()) write_text_file(csv_file, to_csv(r));
}

std::uint64_t sample_seed(std::uint64_t seed, const std::string& clip_id) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : clip_id) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return scenes::clip_seed(seed, h);
}

VideoClip generate_clip(const nets::Backbones& nets, const VideoClip& conditioning, const EvalConfig& cfg) {
    const ConditionBundle cond = nets::make_condition(conditioning, nets.codec, nets.extractor);
    const auto schedule = diffusion::make_schedule(cfg.sampling_steps, cfg.sigma_min, cfg.sigma_max, cfg.rho);
    std::mt19937_64 rng(sample_seed(cfg.seed, conditioning.clip_id()));
    const Tensor init = diffusion::standard_normal(cond.first_frame_latent_replicated.shape(), rng);
    const LatentClip z = diffusion::euler_sample(nets.denoiser.as_function(), schedule, init, cond);
    return VideoClip(quantize_8bit(nets.codec.decode(z)), conditioning.fps(), conditioning.clip_id());
}

std::vector<VideoClip> generate_clips(const nets::Backbones& nets, const std::vector<VideoClip>& conditioning, const EvalConfig& cfg) {
    std::vector<VideoClip> out;
    out.reserve(conditioning.size());
    for (const auto& c : conditioning) out.push_back(generate_clip(nets, c, cfg));
    return out;
}

EvalReport evaluate_clips(const std::vector<std::pair<VideoClip, BoxTrack>>& ground_truth, const std::vector<VideoClip>& generated,
                          const nets::FeatureExtractor& extractor, const EvalConfig& cfg, const Detector& detector_in) {
    std::map<std::string, const VideoClip*> gen_by_id;
    for (const auto& g : generated) gen_by_id[g.clip_id()] = &g;
    std::set<std::string> gt_ids;
    for (const auto& [clip, boxes] : ground_truth) gt_ids.insert(clip.clip_id());
    std::vector<std::string> missing, extra;
    for (const auto& id : gt_ids)
        if (!gen_by_id.count(id)) missing.push_back(id);
    for (const auto& [id, ptr] : gen_by_id)
        if (!gt_ids.count(id)) extra.push_back(id);
    if (!missing.empty() || !extra.empty() || gt_ids.size() != ground_truth.size()) {
        std::string msg = "clip sets are not aligned;";
        if (!missing.empty()) {
            msg += " missing generated clips:";
            for (const auto& id : missing) msg += " " + id;
        }
        if (!extra.empty()) {
            msg += (missing.empty() ? "" : ";") + std::string(" unexpected generated clips:");
            for (const auto& id : extra) msg += " " + id;
        }
        if (gt_ids.size() != ground_truth.size()) msg += " duplicate ground-truth clip ids";
        throw InvariantError(msg);
    }
    if (ground_truth.size() < 2) throw DomainError("evaluation needs at least 2 clips");

    const Detector detector = detector_in ? detector_in : make_oracle_detector(cfg.detector);
    std::vector<std::vector<double>> frame_gt, frame_gen, clip_gt, clip_gen;
    std::vector<std::vector<Detection>> det_gt, det_gen;
    EvalReport r;
    for (const auto& [gt, boxes] : ground_truth) {
        const VideoClip& gen = *gen_by_id.at(gt.clip_id());
        if (gen.frames().shape() != gt.frames().shape()) {
            throw ShapeError("clip " + gt.clip_id() + ": generated shape " + shape_str(gen.frames().shape()) + " vs ground truth " +
                             shape_str(gt.frames().shape()));
        }
        clip_gt.push_back(clip_embedding(extractor, gt.frames()));
        clip_gen.push_back(clip_embedding(extractor, gen.frames()));
        const auto reference = annotation_detections(boxes);
        std::vector<std::vector<Detection>> clip_ref, clip_pred;
        for (std::size_t n = 0; n < gt.num_frames(); ++n) {
            const Tensor fg = gt.frame(n), fp = gen.frame(n);
            frame_gt.push_back(frame_embedding(extractor, fg));
            frame_gen.push_back(frame_embedding(extractor, fp));
            clip_ref.push_back(cfg.reference == ReferenceMode::Detector ? detector(fg) : reference[n]);
            clip_pred.push_back(detector(fp));
        }
        const DetectionScore cs = match_and_score(clip_ref, clip_pred, cfg.match);
        ClipRecord rec;
        rec.clip_id = gt.clip_id();
        rec.gt_detections = cs.gt_count;
        rec.generated_detections = cs.pred_count;
        rec.matched = cs.matched;
        rec.mean_iou = cs.matched_ious.empty() ? -1.0 : cs.mIoU;
        const Tensor diff = gt.frames() - gen.frames();
        double sq = 0.0;
        for (double v : diff.values()) sq += v * v;
        rec.pixel_mse = sq / static_cast<double>(diff.numel());
        r.per_clip.push_back(rec);
        det_gt.insert(det_gt.end(), clip_ref.begin(), clip_ref.end());
        det_gen.insert(det_gen.end(), clip_pred.begin(), clip_pred.end());
    }
    r.num_clips = ground_truth.size();
    r.frechet_frame = frechet_distance(gaussian_stats(frame_gt), gaussian_stats(frame_gen));
    r.frechet_clip = frechet_distance(gaussian_stats(clip_gt), gaussian_stats(clip_gen));
    const DetectionScore s = match_and_score(det_gt, det_gen, cfg.match);
    r.mAP = s.mAP;
    r.mIoU = s.mIoU;
    r.match_rate = s.match_rate;
    r.detection_defined = s.defined;
    r.per_class_ap = s.per_class_ap;
    r.config = to_json(cfg);
    return r;
}

EvalReport evaluate(const nets::Backbones& nets, const std::vector<std::pair<VideoClip, BoxTrack>>& test_clips, const EvalConfig& cfg) {
    std::vector<VideoClip> cond;
    cond.reserve(test_clips.size());
    for (const auto& [clip, boxes] : test_clips) cond.push_back(clip);
    return evaluate_clips(test_clips, generate_clips(nets, cond, cfg), nets.extractor, cfg);
}

}  // namespace lsa::eval
