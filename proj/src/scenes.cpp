#include "lsa/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lsa/checkpoint.hpp"
#include "lsa/clip_io.hpp"
#include "lsa/error.hpp"

namespace lsa::scenes {

using nlohmann::json;

namespace {

constexpr double kTurnRate = 0.12;  // rad / frame
constexpr double kGoFrames = 3.0;
constexpr double kStopFrames = 2.0;

template <class E>
E parse_enum(const std::string& s, const std::vector<std::pair<std::string, E>>& table, const char* what) {
    for (const auto& [name, e] : table)
        if (name == s) return e;
    std::string options;
    for (const auto& [name, e] : table) options += (options.empty() ? "" : " | ") + name;
    throw ConfigError(std::string("unknown ") + what + " '" + s + "' (expected " + options + ")");
}

const std::vector<std::pair<std::string, MotionModel>> kMotionNames{
    {"linear", MotionModel::Linear}, {"turning", MotionModel::Turning}, {"stop-and-go", MotionModel::StopAndGo}};
const std::vector<std::pair<std::string, Background>> kBackgroundNames{
    {"gradient", Background::Gradient}, {"texture", Background::Texture}, {"static-noise", Background::StaticNoise}};

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * std::generate_canonical<double, 53>(rng);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// Grey-level background renderer, deterministic per seed.
class BackgroundField {
public:
    BackgroundField(Background kind, std::uint64_t seed, std::size_t H, std::size_t W) : kind_(kind), H_(H), W_(W) {
        std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
        phase_a_ = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        phase_b_ = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        const double s = static_cast<double>(W) / 64.0;
        period_x_ = uniform(rng, 8.0, 16.0) * s;
        period_y_ = uniform(rng, 8.0, 16.0) * s;
        cell_ = std::max<std::size_t>(2, W / 8);
        lattice_w_ = (W + cell_ - 1) / cell_;
        lattice_h_ = (H + cell_ - 1) / cell_ + 1;
        lattice_.resize(lattice_w_ * lattice_h_);
        for (double& v : lattice_) v = uniform(rng, 0.0, 1.0);
    }

    double value(double x, double y) const {
        const double W = static_cast<double>(W_), H = static_cast<double>(H_);
        switch (kind_) {
            case Background::Gradient:
                return 0.3 + 0.35 * y / H + 0.06 * std::sin(4.0 * std::numbers::pi * x / W + phase_a_);
            case Background::Texture:
                return 0.5 + 0.12 * std::sin(2.0 * std::numbers::pi * x / period_x_ + phase_a_) *
                                 std::cos(2.0 * std::numbers::pi * y / period_y_ + phase_b_);
            case Background::StaticNoise: {
                // value noise, periodic horizontally so the scroll wraps seamlessly
                const double c = static_cast<double>(cell_);
                double gx = std::fmod(x / c, static_cast<double>(lattice_w_));
                if (gx < 0) gx += static_cast<double>(lattice_w_);
                const double gy = std::clamp(y / c, 0.0, static_cast<double>(lattice_h_ - 1) - 1e-9);
                const std::size_t x0 = static_cast<std::size_t>(gx) % lattice_w_, y0 = static_cast<std::size_t>(gy);
                const std::size_t x1 = (x0 + 1) % lattice_w_, y1 = std::min(y0 + 1, lattice_h_ - 1);
                const double tx = smoothstep(gx - std::floor(gx)), ty = smoothstep(gy - std::floor(gy));
                const auto L = [&](std::size_t xx, std::size_t yy) { return lattice_[yy * lattice_w_ + xx]; };
                const double top = L(x0, y0) * (1 - tx) + L(x1, y0) * tx;
                const double bot = L(x0, y1) * (1 - tx) + L(x1, y1) * tx;
                return 0.35 + 0.3 * (top * (1 - ty) + bot * ty);
            }
        }
        return 0.5;
    }

private:
    Background kind_;
    std::size_t H_, W_;
    double phase_a_ = 0, phase_b_ = 0, period_x_ = 8, period_y_ = 8;
    std::size_t cell_ = 8, lattice_w_ = 1, lattice_h_ = 1;
    std::vector<double> lattice_;
};

bool visible_at(const ObjectSpec& o, MotionModel m, double t, double H, double W) {
    const auto [x, y] = object_position(o, m, t);
    return x + o.width > 0.5 && x < W - 0.5 && y + o.height > 0.5 && y < H - 0.5;
}

std::size_t visible_frames(const ObjectSpec& o, MotionModel m, std::size_t N, std::size_t H, std::size_t W) {
    std::size_t k = 0;
    for (std::size_t t = 0; t < N; ++t)
        if (visible_at(o, m, static_cast<double>(t), static_cast<double>(H), static_cast<double>(W))) ++k;
    return k;
}

bool separated(const ObjectSpec& a, const ObjectSpec& b, double margin) {
    return a.x + a.width + margin <= b.x || b.x + b.width + margin <= a.x || a.y + a.height + margin <= b.y ||
           b.y + b.height + margin <= a.y;
}

json object_to_json(const ObjectSpec& o) {
    return {{"class", o.class_label}, {"x", o.x}, {"y", o.y}, {"width", o.width}, {"height", o.height}, {"vx", o.vx}, {"vy", o.vy}};
}

ObjectSpec object_from_json(const json& j) {
    ObjectSpec o;
    o.class_label = j.at("class").get<std::string>();
    object_class(o.class_label);
    o.x = j.at("x").get<double>();
    o.y = j.at("y").get<double>();
    o.width = j.at("width").get<double>();
    o.height = j.at("height").get<double>();
    o.vx = j.value("vx", 0.0);
    o.vy = j.value("vy", 0.0);
    return o;
}

std::array<double, 2> range_from_json(const json& j, const char* what) {
    const auto r = j.get<std::array<double, 2>>();
    if (!(r[0] <= r[1])) throw ConfigError(std::string(what) + ": range must satisfy lo <= hi");
    return r;
}

}  // namespace

std::string to_string(MotionModel m) {
    for (const auto& [name, e] : kMotionNames)
        if (e == m) return name;
    return "?";
}

std::string to_string(Background b) {
    for (const auto& [name, e] : kBackgroundNames)
        if (e == b) return name;
    return "?";
}

MotionModel parse_motion_model(const std::string& s) { return parse_enum(s, kMotionNames, "motion model"); }
Background parse_background(const std::string& s) { return parse_enum(s, kBackgroundNames, "background"); }

const std::vector<ObjectClass>& palette() {
    static const std::vector<ObjectClass> p{
        {"car", {0.86, 0.12, 0.10}, 1.0, 0.0},
        {"truck", {0.10, 0.24, 0.86}, -1.0, 0.0},
        {"pedestrian", {0.10, 0.76, 0.20}, 0.0, 1.0},
        {"cyclist", {0.90, 0.80, 0.10}, 0.0, -1.0},
    };
    return p;
}

const ObjectClass& object_class(const std::string& name) {
    for (const auto& c : palette())
        if (c.name == name) return c;
    throw ConfigError("unknown object class '" + name + "'");
}

json to_json(const SceneSpec& s) {
    json objects = json::array();
    for (const auto& o : s.objects) objects.push_back(object_to_json(o));
    return {{"num_objects", s.num_objects},
            {"motion_model", to_string(s.motion_model)},
            {"object_size_range", s.object_size_range},
            {"background", to_string(s.background)},
            {"ego_motion", s.ego_motion},
            {"speed", s.speed},
            {"seed", s.seed},
            {"objects", objects}};
}

SceneSpec scene_spec_from_json(const json& j) {
    SceneSpec s;
    s.num_objects = j.value("num_objects", s.num_objects);
    if (j.contains("motion_model")) s.motion_model = parse_motion_model(j["motion_model"].get<std::string>());
    if (j.contains("object_size_range")) s.object_size_range = range_from_json(j["object_size_range"], "object_size_range");
    if (j.contains("background")) s.background = parse_background(j["background"].get<std::string>());
    s.ego_motion = j.value("ego_motion", s.ego_motion);
    s.speed = j.value("speed", s.speed);
    s.seed = j.value("seed", s.seed);
    if (j.contains("objects"))
        for (const auto& o : j["objects"]) s.objects.push_back(object_from_json(o));
    return s;
}

std::pair<double, double> object_position(const ObjectSpec& o, MotionModel model, double t) {
    switch (model) {
        case MotionModel::Linear:
            return {o.x + o.vx * t, o.y + o.vy * t};
        case MotionModel::Turning: {
            // velocity rotates at a constant rate; integrate R(w s) v0 over [0, t]
            const double w = kTurnRate, s = std::sin(w * t), c = std::cos(w * t);
            const double dx = (s * o.vx - (1.0 - c) * o.vy) / w;
            const double dy = ((1.0 - c) * o.vx + s * o.vy) / w;
            return {o.x + dx, o.y + dy};
        }
        case MotionModel::StopAndGo: {
            const double period = kGoFrames + kStopFrames;
            const double cycles = std::floor(t / period);
            const double moved = cycles * kGoFrames + std::min(t - cycles * period, kGoFrames);
            return {o.x + o.vx * moved, o.y + o.vy * moved};
        }
    }
    return {o.x, o.y};
}

std::vector<ObjectSpec> resolve_objects(const SceneSpec& spec, std::size_t N, std::size_t H, std::size_t W) {
    const double Hd = static_cast<double>(H), Wd = static_cast<double>(W);
    if (!spec.objects.empty()) {
        for (const auto& o : spec.objects) {
            if (o.width < 1 || o.height < 1 || o.width > Wd || o.height > Hd) {
                throw ConfigError("object of size " + std::to_string(o.width) + "x" + std::to_string(o.height) + " does not fit a " +
                                  std::to_string(W) + "x" + std::to_string(H) + " frame");
            }
        }
        return spec.objects;
    }
    const auto [lo, hi] = spec.object_size_range;
    if (lo < 1.0 || hi > std::min(Hd, Wd)) {
        throw ConfigError("object_size_range [" + std::to_string(lo) + ", " + std::to_string(hi) + "] does not fit a " +
                          std::to_string(W) + "x" + std::to_string(H) + " frame");
    }
    std::mt19937_64 rng(spec.seed);
    std::vector<ObjectSpec> out;
    for (std::size_t k = 0; k < spec.num_objects; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            const ObjectClass& cls = palette()[uniform_index(rng, palette().size())];
            ObjectSpec o;
            o.class_label = cls.name;
            o.width = std::round(uniform(rng, lo, hi));
            o.height = std::round(uniform(rng, lo, hi));
            o.vx = cls.dx * spec.speed;
            o.vy = cls.dy * spec.speed;
            // start roughly centred on the path so the object spends most frames on screen
            const double travel_x = o.vx * static_cast<double>(N - 1), travel_y = o.vy * static_cast<double>(N - 1);
            const double x_lo = std::max(0.0, -travel_x), x_hi = std::max(x_lo, Wd - o.width - std::max(0.0, travel_x));
            const double y_lo = std::max(0.0, -travel_y), y_hi = std::max(y_lo, Hd - o.height - std::max(0.0, travel_y));
            o.x = std::floor(uniform(rng, x_lo, x_hi));
            o.y = std::floor(uniform(rng, y_lo, y_hi));
            if (visible_frames(o, spec.motion_model, N, H, W) * 2 < N) continue;
            bool ok = true;
            for (const auto& other : out) ok = ok && separated(o, other, 2.0);
            if (!ok) continue;
            out.push_back(o);
            placed = true;
        }
        if (!placed) throw ConfigError("cannot place object " + std::to_string(k) + " without overlap; scene spec unsatisfiable");
    }
    return out;
}

std::pair<VideoClip, BoxTrack> generate_clip(const SceneSpec& spec, std::size_t N, std::size_t H, std::size_t W, const std::string& clip_id) {
    if (N < 2) throw InvariantError("generate_clip: N must be >= 2");
    if (H == 0 || W == 0) throw InvariantError("generate_clip: empty frame");
    const std::vector<ObjectSpec> objects = resolve_objects(spec, N, H, W);
    const BackgroundField bg(spec.background, spec.seed, H, W);

    Tensor frames({N, 3, H, W});
    BoxTrack track(N);
    std::vector<int> owner(H * W);
    const std::size_t plane = H * W;
    for (std::size_t n = 0; n < N; ++n) {
        const double t = static_cast<double>(n);
        std::fill(owner.begin(), owner.end(), -1);
        for (std::size_t k = 0; k < objects.size(); ++k) {
            const auto [ox, oy] = object_position(objects[k], spec.motion_model, t);
            // pixel (i, j) is covered when its centre lies inside the object rectangle
            const auto first = [](double a) { return static_cast<long>(std::ceil(a - 0.5)); };
            const long j0 = std::max(0L, first(ox)), j1 = std::min(static_cast<long>(W), first(ox + objects[k].width));
            const long i0 = std::max(0L, first(oy)), i1 = std::min(static_cast<long>(H), first(oy + objects[k].height));
            for (long i = i0; i < i1; ++i)
                for (long j = j0; j < j1; ++j) owner[static_cast<std::size_t>(i) * W + static_cast<std::size_t>(j)] = static_cast<int>(k);
        }
        std::vector<std::array<long, 4>> bounds(objects.size(), {static_cast<long>(W), static_cast<long>(H), -1, -1});
        const double scroll = spec.ego_motion * t;
        for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                const int k = owner[i * W + j];
                double* px = frames.data() + n * 3 * plane + i * W + j;
                if (k < 0) {
                    const double v = std::clamp(bg.value(static_cast<double>(j) + 0.5 + scroll, static_cast<double>(i) + 0.5), 0.0, 1.0);
                    px[0] = px[plane] = px[2 * plane] = v;
                } else {
                    const auto& rgb = object_class(objects[static_cast<std::size_t>(k)].class_label).rgb;
                    px[0] = rgb[0];
                    px[plane] = rgb[1];
                    px[2 * plane] = rgb[2];
                    auto& b = bounds[static_cast<std::size_t>(k)];
                    b[0] = std::min(b[0], static_cast<long>(j));
                    b[1] = std::min(b[1], static_cast<long>(i));
                    b[2] = std::max(b[2], static_cast<long>(j));
                    b[3] = std::max(b[3], static_cast<long>(i));
                }
            }
        }
        for (std::size_t k = 0; k < objects.size(); ++k) {
            const auto& b = bounds[k];
            if (b[2] < 0) continue;
            track[n].push_back(Box{static_cast<double>(b[0]), static_cast<double>(b[1]), static_cast<double>(b[2] + 1),
                                   static_cast<double>(b[3] + 1), objects[k].class_label, static_cast<std::int64_t>(k)});
        }
    }
    return {VideoClip(quantize_8bit(std::move(frames)), 7, clip_id), std::move(track)};
}

SceneDistribution SceneDistribution::scaled_to(std::size_t H) const {
    const double s = static_cast<double>(H) / 64.0;
    SceneDistribution d = *this;
    d.object_size_range = {object_size_range[0] * s, object_size_range[1] * s};
    d.ego_motion_range = {ego_motion_range[0] * s, ego_motion_range[1] * s};
    d.speed = speed * s;
    return d;
}

json to_json(const SceneDistribution& d) {
    json motions = json::array(), bgs = json::array();
    for (auto m : d.motion_models) motions.push_back(to_string(m));
    for (auto b : d.backgrounds) bgs.push_back(to_string(b));
    return {{"num_objects", d.num_objects},
            {"motion_models", motions},
            {"backgrounds", bgs},
            {"object_size_range", d.object_size_range},
            {"ego_motion_range", d.ego_motion_range},
            {"speed", d.speed}};
}

SceneDistribution scene_distribution_from_json(const json& j) {
    SceneDistribution d;
    if (j.contains("num_objects")) {
        d.num_objects = j["num_objects"].get<std::array<std::size_t, 2>>();
        if (d.num_objects[0] > d.num_objects[1]) throw ConfigError("num_objects: range must satisfy lo <= hi");
    }
    if (j.contains("motion_models")) {
        d.motion_models.clear();
        for (const auto& m : j["motion_models"]) d.motion_models.push_back(parse_motion_model(m.get<std::string>()));
    }
    if (j.contains("backgrounds")) {
        d.backgrounds.clear();
        for (const auto& b : j["backgrounds"]) d.backgrounds.push_back(parse_background(b.get<std::string>()));
    }
    if (d.motion_models.empty() || d.backgrounds.empty()) throw ConfigError("scene distribution needs at least one motion model and background");
    if (j.contains("object_size_range")) d.object_size_range = range_from_json(j["object_size_range"], "object_size_range");
    if (j.contains("ego_motion_range")) d.ego_motion_range = range_from_json(j["ego_motion_range"], "ego_motion_range");
    d.speed = j.value("speed", d.speed);
    return d;
}

SceneSpec sample_spec(const SceneDistribution& dist, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SceneSpec s;
    s.seed = seed;
    s.num_objects = dist.num_objects[0] + uniform_index(rng, dist.num_objects[1] - dist.num_objects[0] + 1);
    s.motion_model = dist.motion_models[uniform_index(rng, dist.motion_models.size())];
    s.background = dist.backgrounds[uniform_index(rng, dist.backgrounds.size())];
    s.object_size_range = dist.object_size_range;
    s.ego_motion = uniform(rng, dist.ego_motion_range[0], dist.ego_motion_range[1]);
    s.speed = dist.speed;
    return s;
}

json to_json(const DatasetConfig& c) {
    return {{"train_count", c.train_count}, {"test_count", c.test_count}, {"frames", c.frames},
            {"height", c.height},           {"width", c.width},           {"fps", c.fps},
            {"seed", c.seed},               {"distribution", to_json(c.distribution)}};
}

DatasetConfig dataset_config_from_json(const json& j) {
    DatasetConfig c;
    c.train_count = j.value("train_count", c.train_count);
    c.test_count = j.value("test_count", c.test_count);
    c.frames = j.value("frames", c.frames);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.fps = j.value("fps", c.fps);
    c.seed = j.value("seed", c.seed);
    if (j.contains("distribution")) c.distribution = scene_distribution_from_json(j["distribution"]);
    return c;
}

std::vector<const ManifestEntry*> Manifest::split(const std::string& name) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : clips)
        if (e.split == name) out.push_back(&e);
    return out;
}

json to_json(const Manifest& m) {
    json clips = json::array();
    for (const auto& e : m.clips) clips.push_back({{"id", e.id}, {"split", e.split}, {"seed", e.seed}, {"spec", to_json(e.spec)}});
    return {{"version", m.version}, {"frames", m.frames}, {"height", m.height}, {"width", m.width}, {"fps", m.fps}, {"clips", clips}};
}

Manifest manifest_from_json(const json& j) {
    Manifest m;
    try {
        m.version = j.at("version").get<int>();
        if (m.version != kManifestVersion) {
            throw SpecMismatchError("manifest version " + std::to_string(m.version) + " is not supported (expected " +
                                    std::to_string(kManifestVersion) + ")");
        }
        m.frames = j.value("frames", std::size_t{0});
        m.height = j.value("height", std::size_t{0});
        m.width = j.value("width", std::size_t{0});
        m.fps = j.value("fps", 7);
        for (const auto& c : j.at("clips")) {
            ManifestEntry e;
            e.id = c.at("id").get<std::string>();
            e.split = c.at("split").get<std::string>();
            if (e.split != "train" && e.split != "test") throw FormatError("manifest: clip '" + e.id + "' has unknown split '" + e.split + "'");
            e.seed = c.at("seed").get<std::uint64_t>();
            e.spec = scene_spec_from_json(c.at("spec"));
            m.clips.push_back(std::move(e));
        }
    } catch (const json::exception& ex) {
        throw FormatError(std::string("malformed manifest: ") + ex.what());
    }
    return m;
}

Manifest load_manifest(const std::filesystem::path& file) {
    if (!std::filesystem::exists(file)) throw IoError("manifest not found: " + file.string());
    json j;
    try {
        j = json::parse(read_text_file(file));
    } catch (const json::parse_error& ex) {
        throw FormatError("malformed manifest " + file.string() + ": " + ex.what());
    }
    return manifest_from_json(j);
}

void save_manifest(const Manifest& m, const std::filesystem::path& file) { write_text_file(file, to_json(m).dump(1) + "\n"); }

std::filesystem::path clip_dir(const std::filesystem::path& root, const ManifestEntry& e) { return root / e.split / e.id; }

std::uint64_t clip_seed(std::uint64_t dataset_seed, std::uint64_t index) {
    std::uint64_t z = dataset_seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Manifest generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
    const SceneDistribution dist = cfg.distribution.scaled_to(cfg.height);
    Manifest m;
    m.frames = cfg.frames;
    m.height = cfg.height;
    m.width = cfg.width;
    m.fps = cfg.fps;
    const std::size_t total = cfg.train_count + cfg.test_count;
    for (std::size_t i = 0; i < total; ++i) {
        const bool train = i < cfg.train_count;
        char id[32];
        std::snprintf(id, sizeof id, "%s_%05zu", train ? "train" : "test", train ? i : i - cfg.train_count);
        ManifestEntry e{id, train ? "train" : "test", clip_seed(cfg.seed, i), {}};
        e.spec = sample_spec(dist, e.seed);
        try {
            auto [clip, boxes] = generate_clip(e.spec, cfg.frames, cfg.height, cfg.width, e.id);
            save_clip(VideoClip(clip.frames(), cfg.fps, e.id), boxes, clip_dir(out_dir, e));
        } catch (const Error& ex) {
            throw Error("clip " + e.id + ": " + ex.what());
        }
        m.clips.push_back(std::move(e));
    }
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

}  // namespace lsa::scenes
