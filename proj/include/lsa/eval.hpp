#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "lsa/backbones.hpp"
#include "lsa/core_types.hpp"

namespace lsa::eval {

struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;  // (n - 1)-normalised
    std::size_t sample_count = 0;
};

/// Sample mean and covariance of equal-length vectors; needs at least two.
GaussianStats gaussian_stats(const std::vector<std::vector<double>>& samples);

/// Squared Frechet distance ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}).
/// The square root is taken as Tr sqrt(sqrt(S1) S2 sqrt(S1)) with eigenvalues below 1e-10 floored to 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Mean and standard deviation of the extractor's patch features of one frame [3 x H x W] or [1 x 3 x H x W].
std::vector<double> frame_embedding(const nets::FeatureExtractor& extractor, const Tensor& frame);
/// Mean patch feature over all frames followed by the mean absolute frame-to-frame feature change.
std::vector<double> clip_embedding(const nets::FeatureExtractor& extractor, const Tensor& frames);

struct Detection {
    Box box;  // class carried in box.class_label
    double score = 0.0;
};

struct DetectorConfig {
    double min_chroma = 0.3;   // max - min over RGB for a pixel to count as foreground
    std::size_t min_area = 4;  // pixels per connected component
};

using Detector = std::function<std::vector<Detection>(const Tensor& frame)>;

/// Connected components of saturated pixels, labelled by nearest class colour.
/// Score is the component's mean chroma. Deterministic.
std::vector<Detection> oracle_detect(const Tensor& frame, const DetectorConfig& cfg = {});
Detector make_oracle_detector(DetectorConfig cfg = {});

/// Continuous-area intersection over union.
double iou(const Box& a, const Box& b);

struct FilterConfig {
    double min_size = 16.0;  // both box sides must reach this
    std::vector<std::string> class_whitelist;  // empty: every palette class

    bool keep(const Box& b) const;
};

struct MatchConfig {
    double iou_threshold = 0.5;
    FilterConfig filter;
};

struct DetectionScore {
    bool defined = false;  // false when no ground-truth box survives filtering
    double mAP = -1.0;     // -1 sentinel when undefined
    double mIoU = -1.0;
    double match_rate = 0.0;
    std::size_t gt_count = 0, pred_count = 0, matched = 0;
    std::map<std::string, double> per_class_ap;
    std::vector<double> matched_ious;
};

/// 101-point interpolated AP per whitelisted class with greedy score-descending IoU matching;
/// mIoU is the mean over matched pairs.
DetectionScore match_and_score(const std::vector<std::vector<Detection>>& gt, const std::vector<std::vector<Detection>>& pred,
                               const MatchConfig& cfg);

enum class ReferenceMode { Detector, Annotations };
std::string to_string(ReferenceMode m);
ReferenceMode parse_reference_mode(const std::string& s);

struct EvalConfig {
    std::size_t sampling_steps = 50;
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    std::uint64_t seed = 0;
    MatchConfig match;
    DetectorConfig detector;
    ReferenceMode reference = ReferenceMode::Detector;
};

nlohmann::json to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const nlohmann::json& j);

struct ClipRecord {
    std::string clip_id;
    std::size_t gt_detections = 0;
    std::size_t generated_detections = 0;
    std::size_t matched = 0;
    double mean_iou = -1.0;  // -1 when nothing matched
    double pixel_mse = 0.0;
};

struct EvalReport {
    double frechet_frame = 0.0;
    double frechet_clip = 0.0;
    double mAP = -1.0;
    double mIoU = -1.0;
    double match_rate = 0.0;
    bool detection_defined = false;
    std::size_t num_clips = 0;
    std::map<std::string, double> per_class_ap;
    std::vector<ClipRecord> per_clip;
    nlohmann::json config = nlohmann::json::object();  // echo of everything that produced the report
};

nlohmann::json to_json(const EvalReport& r);
/// Header line plus one summary row.
std::string to_csv(const EvalReport& r);
void write_report(const EvalReport& r, const std::filesystem::path& json_file, const std::filesystem::path& csv_file = {});

/// Sampling noise seed for one clip: depends only on the run seed and the clip id.
std::uint64_t sample_seed(std::uint64_t seed, const std::string& clip_id);

/// Generates one clip per input, conditioned on its first frame.
VideoClip generate_clip(const nets::Backbones& nets, const VideoClip& conditioning, const EvalConfig& cfg);
std::vector<VideoClip> generate_clips(const nets::Backbones& nets, const std::vector<VideoClip>& conditioning, const EvalConfig& cfg);

/// Compares generated clips with ground truth, aligned by clip id.
EvalReport evaluate_clips(const std::vector<std::pair<VideoClip, BoxTrack>>& ground_truth, const std::vector<VideoClip>& generated,
                          const nets::FeatureExtractor& extractor, const EvalConfig& cfg, const Detector& detector = {});

/// Generation followed by evaluate_clips.
EvalReport evaluate(const nets::Backbones& nets, const std::vector<std::pair<VideoClip, BoxTrack>>& test_clips, const EvalConfig& cfg);

}  // namespace lsa::eval
