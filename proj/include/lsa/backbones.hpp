#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

#include "lsa/core_types.hpp"
#include "lsa/diffusion.hpp"
#include "lsa/params.hpp"

namespace lsa {

/// Conditioning shared by every frame of a generated clip: the encoded first
/// frame copied N times (channel-concatenated with the noisy latents) and a
/// global first-frame embedding used for feature-wise modulation.
struct ConditionBundle {
    Tensor first_frame_latent_replicated;  // [N x c x h x w]
    Tensor first_frame_embedding;          // [d_cond]

    /// Throws InvariantError if slices differ or values are non-finite.
    void validate() const;
};

}  // namespace lsa

namespace lsa::nets {

struct CodecSpec {
    std::size_t downsample = 4;  // power of two
    std::size_t latent_channels = 4;
    std::size_t hidden = 16;
    std::uint64_t parameter_seed = 1;

    friend bool operator==(const CodecSpec&, const CodecSpec&) = default;
};

struct FeatureExtractorSpec {
    std::size_t patch_size = 4;
    std::size_t feature_dim = 32;
    std::uint64_t parameter_seed = 2;

    friend bool operator==(const FeatureExtractorSpec&, const FeatureExtractorSpec&) = default;
};

struct DenoiserSpec {
    std::size_t latent_channels = 4;
    std::size_t hidden = 32;
    std::size_t cond_dim = 32;
    std::size_t temporal_kernel = 3;
    std::uint64_t parameter_seed = 3;

    friend bool operator==(const DenoiserSpec&, const DenoiserSpec&) = default;
};

nlohmann::json to_json(const CodecSpec& s);
nlohmann::json to_json(const FeatureExtractorSpec& s);
nlohmann::json to_json(const DenoiserSpec& s);
CodecSpec codec_spec_from_json(const nlohmann::json& j);
FeatureExtractorSpec extractor_spec_from_json(const nlohmann::json& j);
DenoiserSpec denoiser_spec_from_json(const nlohmann::json& j);

/// Per-frame convolutional autoencoder standing in for the VAE.
/// Latents are multiplied by `latent_scale` so encoded data has roughly unit variance.
class Codec {
public:
    explicit Codec(CodecSpec spec);

    const CodecSpec& spec() const noexcept { return spec_; }
    double latent_scale() const noexcept { return latent_scale_; }
    void set_latent_scale(double s);

    LatentClip encode(const VideoClip& clip) const;
    /// frames: [N x 3 x H x W] -> scaled latents.
    Tensor encode_frames(const Tensor& frames) const;
    /// Pixel output in (0, 1); requires clean latents.
    Tensor decode(const LatentClip& latents) const;

    ad::Var encode_graph(const ad::Var& frames) const;
    ad::Var decode_graph(const ad::Var& latents) const;

    ParamSet& params() noexcept { return params_; }
    const ParamSet& params() const noexcept { return params_; }

private:
    std::size_t stages() const;

    CodecSpec spec_;
    ParamSet params_;
    double latent_scale_ = 1.0;
};

/// Frozen patch feature extractor: patch embedding followed by two channel-mixing layers.
/// Purely local: each patch's feature depends only on that patch's pixels.
class FeatureExtractor {
public:
    explicit FeatureExtractor(FeatureExtractorSpec spec);

    const FeatureExtractorSpec& spec() const noexcept { return spec_; }
    bool frozen() const noexcept { return true; }

    FeatureGrid extract(const Tensor& frames) const;
    /// Differentiable w.r.t. `frames`; returns [N * gh * gw x d] rows ordered (n, u, v).
    ad::Var extract_graph(const ad::Var& frames) const;
    /// Mean of the patch features of a single frame [1 x 3 x H x W].
    Tensor pooled(const Tensor& frame) const;

    const ParamSet& params() const noexcept { return params_; }
    /// Only for restoring checkpoints; parameters never receive gradients.
    void restore(const std::vector<std::pair<std::string, Tensor>>& values) { params_.restore(values); }

private:
    FeatureExtractorSpec spec_;
    ParamSet params_;
};

/// Small spatio-temporal velocity predictor standing in for the video U-Net.
class DenoiserNet {
public:
    explicit DenoiserNet(DenoiserSpec spec);

    const DenoiserSpec& spec() const noexcept { return spec_; }

    diffusion::VelocityPrediction denoise(const LatentClip& zt, double sigma, const ConditionBundle& cond) const;
    /// The noisy latents are channel-concatenated with the replicated first-frame latent inside.
    ad::Var forward(const ad::Var& zt, double sigma, const ConditionBundle& cond) const;

    ParamSet& params() noexcept { return params_; }
    const ParamSet& params() const noexcept { return params_; }

    diffusion::Denoiser as_function() const;

private:
    DenoiserSpec spec_;
    ParamSet params_;
};

ConditionBundle make_condition(const Tensor& first_frame, std::size_t num_frames, const Codec& codec, const FeatureExtractor& extractor);
ConditionBundle make_condition(const VideoClip& clip, const Codec& codec, const FeatureExtractor& extractor);

struct Backbones {
    Codec codec;
    DenoiserNet denoiser;
    FeatureExtractor extractor;

    Backbones(CodecSpec c, DenoiserSpec d, FeatureExtractorSpec e) : codec(c), denoiser(d), extractor(e) {}

    /// Freezes codec and extractor, leaves only the denoiser trainable.
    void freeze_for_finetuning();
};

// Checkpoints: one container per backbone (codec.ckpt, denoiser.ckpt, extractor.ckpt).
void save_codec(const Codec& c, const std::filesystem::path& file);
Codec load_codec(const std::filesystem::path& file);
void save_denoiser(const DenoiserNet& d, const std::filesystem::path& file);
DenoiserNet load_denoiser(const std::filesystem::path& file);
void save_extractor(const FeatureExtractor& e, const std::filesystem::path& file);
FeatureExtractor load_extractor(const std::filesystem::path& file);

void save_backbones(const Backbones& nets, const std::filesystem::path& dir);
Backbones load_backbones(const std::filesystem::path& dir);

struct CodecTrainConfig {
    std::size_t steps = 400;
    std::size_t frames_per_step = 8;
    double learning_rate = 2e-3;
    std::uint64_t seed = 11;
};

struct CodecTrainReport {
    std::vector<double> loss_history;
    double final_recon_mse = 0.0;
    double latent_scale = 1.0;
};

/// Plain reconstruction pre-training, then calibrates latent_scale. Leaves the codec frozen.
CodecTrainReport pretrain_codec(Codec& codec, const std::vector<VideoClip>& clips, const CodecTrainConfig& cfg);

/// Mean squared reconstruction error of decode(encode(clip)) over the given clips.
double reconstruction_mse(const Codec& codec, const std::vector<VideoClip>& clips);

}  // namespace lsa::nets
