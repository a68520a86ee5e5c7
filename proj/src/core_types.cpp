#include "lsa/core_types.hpp"

#include <cmath>

namespace lsa {

VideoClip::VideoClip(Tensor frames, int fps, std::string clip_id)
    : frames_(std::move(frames)), fps_(fps), clip_id_(std::move(clip_id)) {
    if (frames_.rank() != 4) throw InvariantError("clip '" + clip_id_ + "': frames must be [N x 3 x H x W], got " + shape_str(frames_.shape()));
    if (frames_.dim(0) < 2) throw InvariantError("clip '" + clip_id_ + "': needs at least 2 frames, got " + std::to_string(frames_.dim(0)));
    if (frames_.dim(1) != 3) throw InvariantError("clip '" + clip_id_ + "': expected 3 channels, got " + std::to_string(frames_.dim(1)));
    if (frames_.dim(2) == 0 || frames_.dim(3) == 0) throw InvariantError("clip '" + clip_id_ + "': empty frame");
    if (fps_ <= 0) throw InvariantError("clip '" + clip_id_ + "': fps must be positive");
    const std::size_t per_frame = frames_.stride0();
    for (std::size_t i = 0; i < frames_.numel(); ++i) {
        const double v = frames_[i];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw InvariantError("clip '" + clip_id_ + "': pixel out of [0,1] or non-finite in frame " + std::to_string(i / per_frame));
        }
    }
}

void require_divisible(const VideoClip& clip, std::size_t downsample, std::size_t patch) {
    for (std::size_t m : {downsample, patch}) {
        if (m == 0 || clip.height() % m || clip.width() % m) {
            throw InvariantError("clip '" + clip.clip_id() + "': frame " + std::to_string(clip.height()) + "x" +
                                 std::to_string(clip.width()) + " not divisible by " + std::to_string(m));
        }
    }
}

void validate_boxes(const BoxTrack& track, std::size_t num_frames, std::size_t height, std::size_t width) {
    if (track.size() != num_frames) {
        throw InvariantError("box track has " + std::to_string(track.size()) + " frames, clip has " + std::to_string(num_frames));
    }
    for (std::size_t f = 0; f < track.size(); ++f) {
        for (const auto& b : track[f]) {
            const bool finite = std::isfinite(b.x_min) && std::isfinite(b.y_min) && std::isfinite(b.x_max) && std::isfinite(b.y_max);
            if (!finite || b.x_min < 0 || b.y_min < 0 || b.x_min >= b.x_max || b.y_min >= b.y_max ||
                b.x_max > static_cast<double>(width) || b.y_max > static_cast<double>(height)) {
                throw InvariantError("frame " + std::to_string(f) + ": box of object " + std::to_string(b.object_id) +
                                     " violates 0 <= min < max <= frame size");
            }
        }
    }
}

LatentClip::LatentClip(Tensor latents, double sigma) : latents_(std::move(latents)), sigma_(sigma) {
    if (latents_.rank() != 4) throw InvariantError("latents must be [N x c x h x w], got " + shape_str(latents_.shape()));
    if (!std::isfinite(sigma_) || sigma_ < 0.0) throw InvariantError("latent sigma must be finite and >= 0");
    if (!latents_.all_finite()) throw NonFiniteError("latents contain non-finite values");
}

FeatureGrid::FeatureGrid(Tensor features, std::size_t patch_size) : features_(std::move(features)), patch_size_(patch_size) {
    if (features_.rank() != 4) throw InvariantError("feature grid must be [N x gh x gw x d], got " + shape_str(features_.shape()));
    if (patch_size_ == 0) throw InvariantError("patch size must be positive");
    if (!features_.all_finite()) throw NonFiniteError("feature grid contains non-finite values");
}

PatchMask::PatchMask(Tensor weights, double alpha) : weights_(std::move(weights)), alpha_(alpha) {
    if (weights_.rank() != 3) throw InvariantError("patch mask must be [N x gh x gw], got " + shape_str(weights_.shape()));
    if (!std::isfinite(alpha_) || alpha_ <= 0.0) throw InvariantError("mask alpha must be finite and positive");
    for (double w : weights_.values()) {
        if (w != 0.0 && w != 1.0 && w != alpha_) throw InvariantError("mask entries must be 0, 1 or alpha");
    }
}

}  // namespace lsa
