#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "lsa/autograd.hpp"
#include "lsa/backbones.hpp"
#include "lsa/core_types.hpp"

namespace lsa::loss {

/// Table of mask variants from the loss ablation:
///   Hybrid     -> alpha inside boxes, 1 elsewhere
///   BoxOnly    -> alpha inside boxes, 0 elsewhere
///   GlobalOnly -> 1 everywhere
enum class MaskVariant { Hybrid, BoxOnly, GlobalOnly };

/// Which patches count as "inside" a box.
enum class OverlapRule { AnyOverlap, Center, MinFraction };

/// Whether the mask multiplies the feature difference before squaring
/// (effective weight alpha^2) or the squared difference (effective weight alpha).
enum class MaskApplication { PreSquare, PostSquare };

/// Frames whose features f_gt is computed from: the clip itself, or its codec
/// reconstruction decode(encode(x)), which removes the codec's own error from the target.
enum class FeatureTarget { GroundTruth, Reconstruction };

std::string to_string(MaskVariant v);
std::string to_string(OverlapRule r);
std::string to_string(MaskApplication a);
std::string to_string(FeatureTarget t);
MaskVariant parse_variant(const std::string& s);
OverlapRule parse_overlap_rule(const std::string& s);
MaskApplication parse_mask_application(const std::string& s);
FeatureTarget parse_feature_target(const std::string& s);

struct MaskConfig {
    MaskVariant variant = MaskVariant::Hybrid;
    double alpha = 10.0;
    OverlapRule rule = OverlapRule::AnyOverlap;
    double min_fraction = 0.5;  // only for OverlapRule::MinFraction

    void validate() const;
    friend bool operator==(const MaskConfig&, const MaskConfig&) = default;
};

struct LossConfig {
    double lambda_feat = 0.0;
    double diffusion_weight = 1.0;
    MaskConfig mask;
    MaskApplication application = MaskApplication::PreSquare;
    FeatureTarget target = FeatureTarget::GroundTruth;
    /// Training samples with sigma above this keep the feature loss out of the gradient (0: no cap).
    double feature_sigma_max = 0.0;

    void validate() const;
    friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

nlohmann::json to_json(const LossConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j);

/// True when patch (u, v) of size p (pixel footprint [v*p, (v+1)*p) x [u*p, (u+1)*p)) counts as dynamic for `box`.
bool patch_in_box(const Box& box, std::size_t u, std::size_t v, std::size_t p, const MaskConfig& cfg);

PatchMask build_mask(const BoxTrack& boxes, std::size_t grid_h, std::size_t grid_w, std::size_t patch_size, const MaskConfig& cfg);

/// mean over (frame, u, v, channel) of ((f_gt - f_gen) * m)^2 (PreSquare) or m * (f_gt - f_gen)^2 (PostSquare).
double feature_consistency_loss(const FeatureGrid& f_gt, const FeatureGrid& f_gen, const PatchMask& mask,
                                MaskApplication application = MaskApplication::PreSquare);

/// Differentiable form; `f_gen` is [N*gh*gw x d] rows ordered (n, u, v) as produced by the extractor.
ad::Var feature_consistency_loss(const FeatureGrid& f_gt, const ad::Var& f_gen, const PatchMask& mask,
                                 MaskApplication application = MaskApplication::PreSquare);

LossBreakdown combined_loss(double l_diff, double l_feat, const LossConfig& cfg);

struct TrainingLoss {
    LossBreakdown breakdown;
    ad::Var total;  // graph root; gradients reach only trainable parameters and gradient-requiring inputs
};

/// Pre-computed, frozen-side inputs for one clip.
struct ClipTargets {
    Tensor z0;           // clean latents [N x c x h x w]
    FeatureGrid f_gt;    // features of the ground-truth frames
    PatchMask mask;
    ConditionBundle cond;
};

ClipTargets prepare_targets(const VideoClip& clip, const BoxTrack& boxes, const nets::Backbones& nets, const LossConfig& cfg);

/// encode -> add_noise -> denoise -> denoised estimate -> decode -> extract -> mask -> feature loss -> combine.
/// When lambda_feat is 0 the feature loss is still evaluated and recorded but kept out of the graph.
TrainingLoss lsa_training_loss(const VideoClip& clip, const BoxTrack& boxes, double sigma, const Tensor& noise,
                               const nets::Backbones& nets, const LossConfig& cfg);

/// Same composition from prepared targets; `z0` may be a gradient-requiring leaf.
TrainingLoss lsa_training_loss(const ClipTargets& targets, const ad::Var& z0, double sigma, const Tensor& noise,
                               const nets::Backbones& nets, const LossConfig& cfg);

}  // namespace lsa::loss
