#include "lsa/clip_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>

namespace lsa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string frame_name(std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%05zu.png", n);
    return buf;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

Rgb8Image read_png(const fs::path& file) {
    FilePtr fp(std::fopen(file.c_str(), "rb"));
    if (!fp) throw FormatError("cannot open " + file.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8)) throw FormatError(file.string() + ": not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("libpng init failed for " + file.string());
    }
    Rgb8Image img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(file.string() + ": corrupt PNG data");
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    img.width = png_get_image_width(png, info);
    img.height = png_get_image_height(png, info);
    if (png_get_rowbytes(png, info) != img.width * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(file.string() + ": unsupported PNG layout");
    }
    img.pixels.resize(img.width * img.height * 3);
    rows.resize(img.height);
    for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * img.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const Rgb8Image& img, const fs::path& file) {
    FilePtr fp(std::fopen(file.c_str(), "wb"));
    if (!fp) throw IoError("cannot write " + file.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng init failed for " + file.string());
    }
    std::vector<png_const_bytep> rows(img.height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing " + file.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    // fixed settings keep the byte stream reproducible
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * img.width * 3;
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor quantize_8bit(Tensor frames) {
    for (auto& v : frames.values()) v = static_cast<double>(to_byte(v)) / 255.0;
    return frames;
}

std::pair<VideoClip, BoxTrack> load_clip(const fs::path& dir, ClipRequirements req) {
    const fs::path ann_path = dir / "annotations.json";
    if (!fs::exists(ann_path)) throw FormatError("annotation file missing: " + ann_path.string());
    json ann;
    {
        std::ifstream in(ann_path);
        try {
            ann = json::parse(in);
        } catch (const json::exception& e) {
            throw FormatError(ann_path.string() + ": malformed annotations (" + e.what() + ")");
        }
    }
    if (!ann.is_object() || !ann.contains("fps") || !ann.contains("frames") || !ann["frames"].is_array()) {
        throw FormatError(ann_path.string() + ": expected object with 'fps' and 'frames'");
    }
    const std::size_t n = ann["frames"].size();
    BoxTrack track(n);
    for (std::size_t f = 0; f < n; ++f) {
        const auto& jf = ann["frames"][f];
        if (!jf.is_array()) throw FormatError(ann_path.string() + ": frame " + std::to_string(f) + " is not a list");
        for (const auto& jb : jf) {
            try {
                const auto& b = jb.at("box");
                if (!b.is_array() || b.size() != 4) throw FormatError("box must have 4 numbers");
                track[f].push_back(Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>(),
                                       jb.at("class").get<std::string>(), jb.at("id").get<std::int64_t>()});
            } catch (const json::exception& e) {
                throw FormatError(ann_path.string() + ": frame " + std::to_string(f) + ": malformed box (" + e.what() + ")");
            }
        }
    }

    std::size_t H = 0, W = 0;
    std::vector<double> data;
    for (std::size_t f = 0; f < n; ++f) {
        const fs::path fp = dir / "frames" / frame_name(f);
        if (!fs::exists(fp)) throw FormatError("missing frame " + std::to_string(f) + ": " + fp.string());
        const Rgb8Image img = read_png(fp);
        if (f == 0) {
            H = img.height;
            W = img.width;
            data.resize(n * 3 * H * W);
        } else if (img.height != H || img.width != W) {
            throw FormatError("frame " + std::to_string(f) + " of " + dir.string() + ": dimension mismatch");
        }
        double* dst = data.data() + f * 3 * H * W;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t c = 0; c < 3; ++c) dst[(c * H + y) * W + x] = img.pixels[(y * W + x) * 3 + c] / 255.0;
    }
    if (fs::exists(dir / "frames" / frame_name(n))) {
        throw FormatError(dir.string() + ": more frame images than annotated frames");
    }
    const std::string id = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    VideoClip clip(Tensor({n, 3, H, W}, std::move(data)), ann["fps"].get<int>(), id);
    require_divisible(clip, req.downsample, req.patch);
    validate_boxes(track, n, H, W);
    return {std::move(clip), std::move(track)};
}

void save_clip(const VideoClip& clip, const BoxTrack& boxes, const fs::path& dir) {
    validate_boxes(boxes, clip.num_frames(), clip.height(), clip.width());
    std::error_code ec;
    fs::create_directories(dir / "frames", ec);
    if (ec) throw IoError("cannot create " + (dir / "frames").string() + ": " + ec.message());
    const std::size_t H = clip.height(), W = clip.width();
    for (std::size_t f = 0; f < clip.num_frames(); ++f) {
        Rgb8Image img{W, H, std::vector<std::uint8_t>(W * H * 3)};
        const double* src = clip.frames().data() + f * 3 * H * W;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t c = 0; c < 3; ++c) img.pixels[(y * W + x) * 3 + c] = to_byte(src[(c * H + y) * W + x]);
        write_png(img, dir / "frames" / frame_name(f));
    }
    json ann;
    ann["fps"] = clip.fps();
    ann["frames"] = json::array();
    for (const auto& frame : boxes) {
        json jf = json::array();
        for (const auto& b : frame) jf.push_back({{"box", {b.x_min, b.y_min, b.x_max, b.y_max}}, {"class", b.class_label}, {"id", b.object_id}});
        ann["frames"].push_back(std::move(jf));
    }
    std::ofstream out(dir / "annotations.json");
    if (!out) throw IoError("cannot write " + (dir / "annotations.json").string());
    out << ann.dump(1) << '\n';
}

}  // namespace lsa
