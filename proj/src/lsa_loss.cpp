#include "lsa/lsa_loss.hpp"

#include <algorithm>
#include <cmath>

#include "lsa/diffusion.hpp"

namespace lsa::loss {

using nlohmann::json;

std::string to_string(MaskVariant v) {
    switch (v) {
        case MaskVariant::Hybrid: return "hybrid";
        case MaskVariant::BoxOnly: return "box-only";
        case MaskVariant::GlobalOnly: return "global-only";
    }
    return "?";
}

std::string to_string(OverlapRule r) {
    switch (r) {
        case OverlapRule::AnyOverlap: return "any-overlap";
        case OverlapRule::Center: return "center";
        case OverlapRule::MinFraction: return "min-fraction";
    }
    return "?";
}

std::string to_string(MaskApplication a) { return a == MaskApplication::PreSquare ? "pre-square" : "post-square"; }

MaskVariant parse_variant(const std::string& s) {
    if (s == "hybrid") return MaskVariant::Hybrid;
    if (s == "box-only") return MaskVariant::BoxOnly;
    if (s == "global-only") return MaskVariant::GlobalOnly;
    throw ConfigError("unknown mask variant '" + s + "' (expected hybrid | box-only | global-only)");
}

OverlapRule parse_overlap_rule(const std::string& s) {
    if (s == "any-overlap") return OverlapRule::AnyOverlap;
    if (s == "center") return OverlapRule::Center;
    if (s == "min-fraction") return OverlapRule::MinFraction;
    throw ConfigError("unknown overlap rule '" + s + "' (expected any-overlap | center | min-fraction)");
}

MaskApplication parse_mask_application(const std::string& s) {
    if (s == "pre-square") return MaskApplication::PreSquare;
    if (s == "post-square") return MaskApplication::PostSquare;
    throw ConfigError("unknown mask application '" + s + "' (expected pre-square | post-square)");
}

void MaskConfig::validate() const {
    if (!std::isfinite(alpha) || alpha < 1.0) throw ConfigError("mask alpha must be >= 1");
    if (rule == OverlapRule::MinFraction && !(min_fraction > 0.0 && min_fraction <= 1.0)) {
        throw ConfigError("min-fraction threshold must lie in (0, 1]");
    }
}

std::string to_string(FeatureTarget t) { return t == FeatureTarget::GroundTruth ? "ground-truth" : "reconstruction"; }

FeatureTarget parse_feature_target(const std::string& s) {
    if (s == "ground-truth") return FeatureTarget::GroundTruth;
    if (s == "reconstruction") return FeatureTarget::Reconstruction;
    throw ConfigError("unknown feature target '" + s + "' (expected ground-truth | reconstruction)");
}

void LossConfig::validate() const {
    if (!std::isfinite(lambda_feat) || lambda_feat < 0.0) throw ConfigError("lambda_feat must be finite and >= 0");
    if (!std::isfinite(diffusion_weight) || diffusion_weight < 0.0) throw ConfigError("diffusion_weight must be finite and >= 0");
    if (!std::isfinite(feature_sigma_max) || feature_sigma_max < 0.0) throw ConfigError("feature_sigma_max must be finite and >= 0");
    mask.validate();
}

json to_json(const LossConfig& c) {
    return {{"lambda_feat", c.lambda_feat},
            {"diffusion_weight", c.diffusion_weight},
            {"variant", to_string(c.mask.variant)},
            {"alpha", c.mask.alpha},
            {"overlap_rule", to_string(c.mask.rule)},
            {"min_fraction", c.mask.min_fraction},
            {"mask_application", to_string(c.application)},
            {"feature_target", to_string(c.target)},
            {"feature_sigma_max", c.feature_sigma_max}};
}

LossConfig loss_config_from_json(const json& j) {
    LossConfig c;
    c.lambda_feat = j.value("lambda_feat", c.lambda_feat);
    c.diffusion_weight = j.value("diffusion_weight", c.diffusion_weight);
    if (j.contains("variant")) c.mask.variant = parse_variant(j["variant"].get<std::string>());
    c.mask.alpha = j.value("alpha", c.mask.alpha);
    if (j.contains("overlap_rule")) c.mask.rule = parse_overlap_rule(j["overlap_rule"].get<std::string>());
    c.mask.min_fraction = j.value("min_fraction", c.mask.min_fraction);
    if (j.contains("mask_application")) c.application = parse_mask_application(j["mask_application"].get<std::string>());
    if (j.contains("feature_target")) c.target = parse_feature_target(j["feature_target"].get<std::string>());
    c.feature_sigma_max = j.value("feature_sigma_max", c.feature_sigma_max);
    c.validate();
    return c;
}

bool patch_in_box(const Box& box, std::size_t u, std::size_t v, std::size_t p, const MaskConfig& cfg) {
    const double x0 = static_cast<double>(v * p), x1 = static_cast<double>((v + 1) * p);
    const double y0 = static_cast<double>(u * p), y1 = static_cast<double>((u + 1) * p);
    switch (cfg.rule) {
        case OverlapRule::AnyOverlap:
            return box.x_min < x1 && box.x_max > x0 && box.y_min < y1 && box.y_max > y0;
        case OverlapRule::Center: {
            const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
            return cx >= box.x_min && cx < box.x_max && cy >= box.y_min && cy < box.y_max;
        }
        case OverlapRule::MinFraction: {
            const double ix = std::max(0.0, std::min(box.x_max, x1) - std::max(box.x_min, x0));
            const double iy = std::max(0.0, std::min(box.y_max, y1) - std::max(box.y_min, y0));
            return ix * iy >= cfg.min_fraction * static_cast<double>(p * p);
        }
    }
    return false;
}

PatchMask build_mask(const BoxTrack& boxes, std::size_t grid_h, std::size_t grid_w, std::size_t patch_size, const MaskConfig& cfg) {
    cfg.validate();
    const std::size_t N = boxes.size();
    validate_boxes(boxes, N, grid_h * patch_size, grid_w * patch_size);
    const double inside = cfg.variant == MaskVariant::GlobalOnly ? 1.0 : cfg.alpha;
    const double outside = cfg.variant == MaskVariant::BoxOnly ? 0.0 : 1.0;
    Tensor w({N, grid_h, grid_w}, outside);
    if (cfg.variant != MaskVariant::GlobalOnly) {
        for (std::size_t n = 0; n < N; ++n) {
            for (const Box& b : boxes[n]) {
                // only patches intersecting the box's bounding range can qualify
                const auto u_lo = static_cast<std::size_t>(std::floor(b.y_min / static_cast<double>(patch_size)));
                const auto v_lo = static_cast<std::size_t>(std::floor(b.x_min / static_cast<double>(patch_size)));
                for (std::size_t u = u_lo; u < grid_h && static_cast<double>(u * patch_size) < b.y_max; ++u)
                    for (std::size_t v = v_lo; v < grid_w && static_cast<double>(v * patch_size) < b.x_max; ++v)
                        if (patch_in_box(b, u, v, patch_size, cfg)) w[(n * grid_h + u) * grid_w + v] = inside;
            }
        }
    }
    return PatchMask(std::move(w), cfg.alpha);
}

namespace {

void check_grid_shapes(const FeatureGrid& f_gt, const Shape& gen, const PatchMask& mask) {
    const auto& g = f_gt.features().shape();
    const auto& m = mask.weights().shape();
    if (m.size() != 3 || m[0] != g[0] || m[1] != g[1] || m[2] != g[2]) {
        throw ShapeError("feature loss: mask " + shape_str(m) + " does not match feature grid " + shape_str(g));
    }
    if (shape_numel(gen) != f_gt.features().numel()) {
        throw ShapeError("feature loss: generated features " + shape_str(gen) + " do not match " + shape_str(g));
    }
}

/// Per-element weights broadcast over the channel axis.
Tensor element_weights(const PatchMask& mask, std::size_t d, MaskApplication app) {
    const Tensor& m = mask.weights();
    Tensor w({m.numel() * d});
    for (std::size_t i = 0; i < m.numel(); ++i) {
        const double k = app == MaskApplication::PreSquare ? m[i] * m[i] : m[i];
        std::fill_n(w.data() + i * d, d, k);
    }
    return w;
}

}  // namespace

double feature_consistency_loss(const FeatureGrid& f_gt, const FeatureGrid& f_gen, const PatchMask& mask, MaskApplication application) {
    require_same_shape(f_gt.features(), f_gen.features(), "feature_consistency_loss");
    check_grid_shapes(f_gt, f_gen.features().shape(), mask);
    const std::size_t d = f_gt.feature_dim();
    const Tensor& a = f_gt.features();
    const Tensor& b = f_gen.features();
    const Tensor& m = mask.weights();
    double acc = 0.0;
    for (std::size_t i = 0; i < m.numel(); ++i) {
        double patch = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = application == MaskApplication::PreSquare ? (a[i * d + c] - b[i * d + c]) * m[i] : a[i * d + c] - b[i * d + c];
            patch += diff * diff;
        }
        acc += application == MaskApplication::PreSquare ? patch : m[i] * patch;
    }
    return acc / static_cast<double>(a.numel());
}

ad::Var feature_consistency_loss(const FeatureGrid& f_gt, const ad::Var& f_gen, const PatchMask& mask, MaskApplication application) {
    check_grid_shapes(f_gt, f_gen->value.shape(), mask);
    const Shape& s = f_gen->value.shape();
    return ad::weighted_sq_mean(f_gen, f_gt.features().reshaped(s),
                                element_weights(mask, f_gt.feature_dim(), application).reshaped(s));
}

LossBreakdown combined_loss(double l_diff, double l_feat, const LossConfig& cfg) {
    cfg.validate();
    LossBreakdown b;
    b.diffusion_loss = l_diff;
    b.feature_loss = l_feat;
    b.diffusion_weight = cfg.diffusion_weight;
    b.lambda_feat = cfg.lambda_feat;
    b.total = cfg.diffusion_weight * l_diff + cfg.lambda_feat * l_feat;
    return b;
}

ClipTargets prepare_targets(const VideoClip& clip, const BoxTrack& boxes, const nets::Backbones& nets, const LossConfig& cfg) {
    const std::size_t p = nets.extractor.spec().patch_size;
    require_divisible(clip, nets.codec.spec().downsample, p);
    validate_boxes(boxes, clip.num_frames(), clip.height(), clip.width());
    const LatentClip z0 = nets.codec.encode(clip);
    const Tensor target = cfg.target == FeatureTarget::GroundTruth ? clip.frames() : nets.codec.decode(z0);
    return ClipTargets{z0.latents(), nets.extractor.extract(target),
                       build_mask(boxes, clip.height() / p, clip.width() / p, p, cfg.mask),
                       nets::make_condition(clip, nets.codec, nets.extractor)};
}

TrainingLoss lsa_training_loss(const ClipTargets& t, const ad::Var& z0, double sigma, const Tensor& noise, const nets::Backbones& nets,
                               const LossConfig& requested) {
    requested.validate();
    LossConfig cfg = requested;
    if (cfg.feature_sigma_max > 0.0 && sigma > cfg.feature_sigma_max) cfg.lambda_feat = 0.0;
    require_same_shape(z0->value, noise, "lsa_training_loss noise");
    require_same_shape(z0->value, t.z0, "lsa_training_loss latents");
    if (!(sigma > 0.0)) throw DomainError("training sigma must be > 0");

    const ad::Var zt = ad::add(z0, ad::constant(noise * sigma));
    const ad::Var v = nets.denoiser.forward(zt, sigma, t.cond);
    const ad::Var z0_hat = diffusion::denoised_estimate(zt, v, sigma);
    const ad::Var l_diff = ad::scale(ad::sq_mean(ad::sub(z0_hat, z0), Tensor::zeros_like(t.z0)), diffusion::loss_weight(sigma));

    ad::Var l_feat;
    double l_feat_value = 0.0;
    if (cfg.lambda_feat > 0.0) {
        const ad::Var x_hat = nets.codec.decode_graph(z0_hat);
        l_feat = feature_consistency_loss(t.f_gt, nets.extractor.extract_graph(x_hat), t.mask, cfg.application);
        l_feat_value = l_feat->value[0];
    } else {
        const ad::Var x_hat = nets.codec.decode_graph(ad::constant(z0_hat->value));
        l_feat_value = feature_consistency_loss(t.f_gt, nets.extractor.extract_graph(x_hat), t.mask, cfg.application)->value[0];
    }

    TrainingLoss out;
    out.breakdown = combined_loss(l_diff->value[0], l_feat_value, cfg);
    out.total = l_feat ? ad::combine({l_diff, l_feat}, {cfg.diffusion_weight, cfg.lambda_feat}) : ad::combine({l_diff}, {cfg.diffusion_weight});
    return out;
}

TrainingLoss lsa_training_loss(const VideoClip& clip, const BoxTrack& boxes, double sigma, const Tensor& noise, const nets::Backbones& nets,
                               const LossConfig& cfg) {
    const ClipTargets t = prepare_targets(clip, boxes, nets, cfg);
    return lsa_training_loss(t, ad::constant(t.z0), sigma, noise, nets, cfg);
}

}  // namespace lsa::loss
