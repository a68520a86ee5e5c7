#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsa/tensor.hpp"

namespace lsa {

/// N-frame RGB clip, frames laid out [N x 3 x H x W] with pixels in [0, 1].
class VideoClip {
public:
    VideoClip(Tensor frames, int fps, std::string clip_id);

    const Tensor& frames() const noexcept { return frames_; }
    int fps() const noexcept { return fps_; }
    const std::string& clip_id() const noexcept { return clip_id_; }

    std::size_t num_frames() const noexcept { return frames_.dim(0); }
    std::size_t height() const noexcept { return frames_.dim(2); }
    std::size_t width() const noexcept { return frames_.dim(3); }
    /// Frame `n` as a [1 x 3 x H x W] tensor.
    Tensor frame(std::size_t n) const { return frames_.slice0(n, n + 1); }

    friend bool operator==(const VideoClip&, const VideoClip&) = default;

private:
    Tensor frames_;
    int fps_;
    std::string clip_id_;
};

/// Throws InvariantError unless H and W are multiples of `downsample` and `patch`.
void require_divisible(const VideoClip& clip, std::size_t downsample, std::size_t patch);

/// Axis-aligned box in pixel units, half-open [x_min, x_max) x [y_min, y_max).
struct Box {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
    std::string class_label;
    std::int64_t object_id = 0;

    double width() const noexcept { return x_max - x_min; }
    double height() const noexcept { return y_max - y_min; }
    friend bool operator==(const Box&, const Box&) = default;
};

/// Per-frame lists of dynamic-object boxes.
using BoxTrack = std::vector<std::vector<Box>>;

/// Throws InvariantError naming the frame when a box leaves the W x H frame or is degenerate.
void validate_boxes(const BoxTrack& track, std::size_t num_frames, std::size_t height, std::size_t width);

/// Latent tensor [N x c x h x w] and the noise level it carries (0 for clean latents).
class LatentClip {
public:
    LatentClip(Tensor latents, double sigma);

    const Tensor& latents() const noexcept { return latents_; }
    double sigma() const noexcept { return sigma_; }
    std::size_t num_frames() const noexcept { return latents_.dim(0); }

private:
    Tensor latents_;
    double sigma_;
};

/// Per-frame patch features [N x (H/p) x (W/p) x d].
class FeatureGrid {
public:
    FeatureGrid(Tensor features, std::size_t patch_size);

    const Tensor& features() const noexcept { return features_; }
    std::size_t patch_size() const noexcept { return patch_size_; }
    std::size_t feature_dim() const noexcept { return features_.dim(3); }
    std::size_t grid_h() const noexcept { return features_.dim(1); }
    std::size_t grid_w() const noexcept { return features_.dim(2); }

private:
    Tensor features_;
    std::size_t patch_size_;
};

/// Per-patch weights [N x (H/p) x (W/p)]; every entry is 0, 1 or alpha.
class PatchMask {
public:
    PatchMask(Tensor weights, double alpha);

    const Tensor& weights() const noexcept { return weights_; }
    double alpha() const noexcept { return alpha_; }

private:
    Tensor weights_;
    double alpha_;
};

struct LossBreakdown {
    double diffusion_loss = 0.0;
    double feature_loss = 0.0;
    double total = 0.0;
    double diffusion_weight = 1.0;
    double lambda_feat = 0.0;

    friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

}  // namespace lsa
