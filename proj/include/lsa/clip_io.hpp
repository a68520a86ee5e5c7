#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "lsa/core_types.hpp"

namespace lsa {

/// On-disk clip directory:
///   frames/00000.png, frames/00001.png, ...   8-bit RGB, lossless
///   annotations.json  {"fps": int, "frames": [[{"box": [x1,y1,x2,y2], "class": str, "id": int}, ...], ...]}
/// The clip id is the directory name.
struct ClipRequirements {
    std::size_t downsample = 1;
    std::size_t patch = 1;
};

std::pair<VideoClip, BoxTrack> load_clip(const std::filesystem::path& dir, ClipRequirements req = {});

/// Pixels are quantized to 8 bits; values that are multiples of 1/255 round-trip exactly.
void save_clip(const VideoClip& clip, const BoxTrack& boxes, const std::filesystem::path& dir);

/// Raw 8-bit RGB image helpers, interleaved rows.
struct Rgb8Image {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels;
};
Rgb8Image read_png(const std::filesystem::path& file);
void write_png(const Rgb8Image& img, const std::filesystem::path& file);

/// Round a [0,1] tensor to the nearest multiple of 1/255 (what save_clip stores).
Tensor quantize_8bit(Tensor frames);

}  // namespace lsa
