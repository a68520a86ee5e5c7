#include "lsa/backbones.hpp"

#include <cmath>
#include <numbers>

#include "lsa/checkpoint.hpp"
#include "lsa/optim.hpp"

namespace lsa {

void ConditionBundle::validate() const {
    const Tensor& r = first_frame_latent_replicated;
    if (r.rank() != 4) throw InvariantError("condition latent must be [N x c x h x w]");
    if (!r.all_finite() || !first_frame_embedding.all_finite()) throw InvariantError("condition contains non-finite values");
    const std::size_t st = r.stride0();
    for (std::size_t n = 1; n < r.dim(0); ++n) {
        for (std::size_t i = 0; i < st; ++i) {
            if (r[n * st + i] != r[i]) throw InvariantError("replicated first-frame latent slices differ at frame " + std::to_string(n));
        }
    }
}

}  // namespace lsa

namespace lsa::nets {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double he_std(std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

void add_conv(ParamSet& ps, const std::string& name, std::size_t cout, std::size_t cin, std::size_t k, double gain,
              std::mt19937_64& rng) {
    ps.add(name + ".w", init_normal({cout, cin, k, k}, gain * he_std(cin * k * k), rng));
    ps.add(name + ".b", Tensor({cout}));
}

void add_linear(ParamSet& ps, const std::string& name, std::size_t out, std::size_t in, double stddev, std::mt19937_64& rng) {
    ps.add(name + ".w", init_normal({out, in}, stddev, rng));
    ps.add(name + ".b", Tensor({out}));
}

ad::Var conv(const ParamSet& ps, const std::string& name, const ad::Var& x, int stride = 1) {
    return ad::conv2d(x, ps.get(name + ".w"), ps.get(name + ".b"), stride, 1);
}

ad::Var lin(const ParamSet& ps, const std::string& name, const ad::Var& x) {
    return ad::linear(x, ps.get(name + ".w"), ps.get(name + ".b"));
}

std::size_t log2_exact(std::size_t v) {
    if (v == 0 || (v & (v - 1)) != 0) throw InvariantError("codec downsample must be a power of two, got " + std::to_string(v));
    std::size_t s = 0;
    while (v > 1) {
        v >>= 1;
        ++s;
    }
    return s;
}

}  // namespace

json to_json(const CodecSpec& s) {
    return {{"downsample", s.downsample}, {"latent_channels", s.latent_channels}, {"hidden", s.hidden}, {"parameter_seed", s.parameter_seed}};
}
json to_json(const FeatureExtractorSpec& s) {
    return {{"patch_size", s.patch_size}, {"feature_dim", s.feature_dim}, {"parameter_seed", s.parameter_seed}};
}
json to_json(const DenoiserSpec& s) {
    return {{"latent_channels", s.latent_channels}, {"hidden", s.hidden}, {"cond_dim", s.cond_dim},
            {"temporal_kernel", s.temporal_kernel}, {"parameter_seed", s.parameter_seed}};
}

CodecSpec codec_spec_from_json(const json& j) {
    CodecSpec s;
    s.downsample = j.value("downsample", s.downsample);
    s.latent_channels = j.value("latent_channels", s.latent_channels);
    s.hidden = j.value("hidden", s.hidden);
    s.parameter_seed = j.value("parameter_seed", s.parameter_seed);
    return s;
}
FeatureExtractorSpec extractor_spec_from_json(const json& j) {
    FeatureExtractorSpec s;
    s.patch_size = j.value("patch_size", s.patch_size);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.parameter_seed = j.value("parameter_seed", s.parameter_seed);
    return s;
}
DenoiserSpec denoiser_spec_from_json(const json& j) {
    DenoiserSpec s;
    s.latent_channels = j.value("latent_channels", s.latent_channels);
    s.hidden = j.value("hidden", s.hidden);
    s.cond_dim = j.value("cond_dim", s.cond_dim);
    s.temporal_kernel = j.value("temporal_kernel", s.temporal_kernel);
    s.parameter_seed = j.value("parameter_seed", s.parameter_seed);
    return s;
}

// ---------------------------------------------------------------- codec

Codec::Codec(CodecSpec spec) : spec_(spec) {
    const std::size_t n = stages();
    if (spec_.latent_channels == 0 || spec_.hidden == 0) throw InvariantError("codec channels must be positive");
    std::mt19937_64 rng(spec_.parameter_seed);
    const std::size_t h = spec_.hidden, c = spec_.latent_channels;
    add_conv(params_, "enc.in", h, 3, 3, 1.0, rng);
    for (std::size_t i = 0; i < n; ++i) add_conv(params_, "enc.down" + std::to_string(i), h, h, 3, 1.0, rng);
    add_conv(params_, "enc.out", c, h, 3, 0.5, rng);
    add_conv(params_, "dec.in", h, c, 3, 1.0, rng);
    for (std::size_t i = 0; i < n; ++i) add_conv(params_, "dec.up" + std::to_string(i), h, h, 3, 1.0, rng);
    add_conv(params_, "dec.out", 3, h, 3, 0.5, rng);
    params_.set_trainable(false);
}

std::size_t Codec::stages() const { return log2_exact(spec_.downsample); }

void Codec::set_latent_scale(double s) {
    if (!(s > 0.0) || !std::isfinite(s)) throw InvariantError("latent scale must be finite and positive");
    latent_scale_ = s;
}

ad::Var Codec::encode_graph(const ad::Var& frames) const {
    ad::Var h = ad::silu(conv(params_, "enc.in", frames));
    for (std::size_t i = 0; i < stages(); ++i) h = ad::silu(conv(params_, "enc.down" + std::to_string(i), h, 2));
    return ad::scale(conv(params_, "enc.out", h), latent_scale_);
}

ad::Var Codec::decode_graph(const ad::Var& latents) const {
    if (latents->value.rank() != 4 || latents->value.dim(1) != spec_.latent_channels) {
        throw ShapeError("decode: expected [N x " + std::to_string(spec_.latent_channels) + " x h x w], got " + shape_str(latents->value.shape()));
    }
    ad::Var h = ad::silu(conv(params_, "dec.in", ad::scale(latents, 1.0 / latent_scale_)));
    for (std::size_t i = 0; i < stages(); ++i) h = ad::silu(conv(params_, "dec.up" + std::to_string(i), ad::upsample2x(h)));
    return ad::sigmoid(conv(params_, "dec.out", h));
}

Tensor Codec::encode_frames(const Tensor& frames) const {
    if (frames.rank() != 4 || frames.dim(1) != 3) throw ShapeError("encode: frames must be [N x 3 x H x W]");
    if (frames.dim(2) % spec_.downsample || frames.dim(3) % spec_.downsample) {
        throw InvariantError("encode: frame " + std::to_string(frames.dim(2)) + "x" + std::to_string(frames.dim(3)) +
                             " not divisible by downsample " + std::to_string(spec_.downsample));
    }
    return encode_graph(ad::constant(frames))->value;
}

LatentClip Codec::encode(const VideoClip& clip) const { return LatentClip(encode_frames(clip.frames()), 0.0); }

Tensor Codec::decode(const LatentClip& latents) const {
    if (latents.sigma() != 0.0) throw DomainError("decode expects clean latents (sigma = 0)");
    Tensor out = decode_graph(ad::constant(latents.latents()))->value;
    for (auto& v : out.values()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

// ---------------------------------------------------------------- extractor

FeatureExtractor::FeatureExtractor(FeatureExtractorSpec spec) : spec_(spec) {
    if (spec_.patch_size == 0 || spec_.feature_dim == 0) throw InvariantError("extractor patch size and feature dim must be positive");
    std::mt19937_64 rng(spec_.parameter_seed);
    const std::size_t p = spec_.patch_size, d = spec_.feature_dim, in = 3 * p * p;
    // pixels in [0,1]; scale so pre-activations of a centred patch have unit-ish variance
    Tensor we = init_normal({d, in}, 3.0 / std::sqrt(static_cast<double>(in)), rng);
    Tensor be({d});
    for (std::size_t o = 0; o < d; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < in; ++i) s += we[o * in + i];
        be[o] = -0.5 * s;
    }
    params_.add("embed.w", std::move(we));
    params_.add("embed.b", std::move(be));
    add_linear(params_, "mix1", d, d, 1.2 / std::sqrt(static_cast<double>(d)), rng);
    add_linear(params_, "mix2", d, d, 1.2 / std::sqrt(static_cast<double>(d)), rng);
    params_.set_trainable(false);
}

ad::Var FeatureExtractor::extract_graph(const ad::Var& frames) const {
    const auto& s = frames->value.shape();
    if (s.size() != 4 || s[1] != 3) throw ShapeError("extract_features: frames must be [N x 3 x H x W], got " + shape_str(s));
    if (s[2] % spec_.patch_size || s[3] % spec_.patch_size) {
        throw InvariantError("extract_features: frame " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                             " not divisible by patch size " + std::to_string(spec_.patch_size));
    }
    ad::Var h = ad::tanh(lin(params_, "embed", ad::patchify(frames, spec_.patch_size)));
    h = ad::tanh(lin(params_, "mix1", h));
    return lin(params_, "mix2", h);
}

FeatureGrid FeatureExtractor::extract(const Tensor& frames) const {
    const std::size_t p = spec_.patch_size;
    Tensor f = extract_graph(ad::constant(frames))->value;
    return FeatureGrid(std::move(f).reshaped({frames.dim(0), frames.dim(2) / p, frames.dim(3) / p, spec_.feature_dim}), p);
}

Tensor FeatureExtractor::pooled(const Tensor& frame) const {
    if (frame.rank() != 4 || frame.dim(0) != 1) throw ShapeError("pooled: expected a single [1 x 3 x H x W] frame");
    return ad::mean_rows(extract_graph(ad::constant(frame)))->value;
}

// ---------------------------------------------------------------- denoiser

DenoiserNet::DenoiserNet(DenoiserSpec spec) : spec_(spec) {
    if (spec_.temporal_kernel % 2 == 0) throw InvariantError("temporal kernel must be odd");
    std::mt19937_64 rng(spec_.parameter_seed);
    const std::size_t c = spec_.latent_channels, H = spec_.hidden;
    const double lin_std = 1.0 / std::sqrt(static_cast<double>(H));
    add_linear(params_, "emb", H, spec_.cond_dim + 3, 1.0 / std::sqrt(static_cast<double>(spec_.cond_dim + 3)), rng);
    for (const char* f : {"film1", "film2"}) {
        add_linear(params_, std::string(f) + ".gamma", H, H, 0.1 * lin_std, rng);
        add_linear(params_, std::string(f) + ".beta", H, H, 0.1 * lin_std, rng);
    }
    add_conv(params_, "conv1", H, 2 * c + 1, 3, 1.0, rng);
    add_conv(params_, "conv2", H, H, 3, 0.5, rng);
    params_.add("temporal.w", init_normal({H, spec_.temporal_kernel}, 0.1, rng));
    add_conv(params_, "conv3", H, H, 3, 0.5, rng);
    add_conv(params_, "conv4", H, H, 3, 1.0, rng);
    add_conv(params_, "out", c, H, 3, 0.2, rng);
}

ad::Var DenoiserNet::forward(const ad::Var& zt, double sigma, const ConditionBundle& cond) const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("denoise: sigma must be finite and > 0");
    const auto& s = zt->value.shape();
    if (s.size() != 4 || s[1] != spec_.latent_channels) {
        throw ShapeError("denoise: latents must be [N x " + std::to_string(spec_.latent_channels) + " x h x w], got " + shape_str(s));
    }
    if (cond.first_frame_latent_replicated.shape() != s) {
        throw ShapeError("denoise: condition latent " + shape_str(cond.first_frame_latent_replicated.shape()) +
                         " does not match noisy latents " + shape_str(s));
    }
    if (cond.first_frame_embedding.numel() != spec_.cond_dim) throw ShapeError("denoise: condition embedding has wrong size");

    const std::size_t N = s[0], plane = s[2] * s[3];
    Tensor pos({N, 1, s[2], s[3]});
    for (std::size_t n = 0; n < N; ++n) {
        const double v = N > 1 ? static_cast<double>(n) / static_cast<double>(N - 1) - 0.5 : 0.0;
        std::fill_n(pos.data() + n * plane, plane, v);
    }
    const double c_in = 1.0 / std::sqrt(1.0 + sigma * sigma);
    const ad::Var x = ad::concat_channels({ad::scale(zt, c_in), ad::constant(cond.first_frame_latent_replicated), ad::constant(std::move(pos))});

    const double c_noise = 0.25 * std::log(sigma);
    Tensor e_in({1, spec_.cond_dim + 3});
    std::copy_n(cond.first_frame_embedding.data(), spec_.cond_dim, e_in.data());
    e_in[spec_.cond_dim] = c_noise;
    e_in[spec_.cond_dim + 1] = std::sin(std::numbers::pi * c_noise);
    e_in[spec_.cond_dim + 2] = std::cos(std::numbers::pi * c_noise);
    const ad::Var emb = ad::silu(lin(params_, "emb", ad::constant(std::move(e_in))));

    ad::Var h = ad::silu(ad::film(conv(params_, "conv1", x), lin(params_, "film1.gamma", emb), lin(params_, "film1.beta", emb)));
    h = ad::add(h, ad::silu(conv(params_, "conv2", h)));
    h = ad::add(h, ad::temporal_conv(h, params_.get("temporal.w")));
    h = ad::add(h, ad::silu(ad::film(conv(params_, "conv3", h), lin(params_, "film2.gamma", emb), lin(params_, "film2.beta", emb))));
    h = ad::silu(conv(params_, "conv4", h));
    return conv(params_, "out", h);
}

diffusion::VelocityPrediction DenoiserNet::denoise(const LatentClip& zt, double sigma, const ConditionBundle& cond) const {
    return {forward(ad::constant(zt.latents()), sigma, cond)->value, sigma};
}

diffusion::Denoiser DenoiserNet::as_function() const {
    return [this](const LatentClip& zt, double sigma, const ConditionBundle& cond) { return denoise(zt, sigma, cond); };
}

// ---------------------------------------------------------------- conditioning

ConditionBundle make_condition(const Tensor& first_frame, std::size_t num_frames, const Codec& codec, const FeatureExtractor& extractor) {
    if (first_frame.rank() != 4 || first_frame.dim(0) != 1) throw ShapeError("make_condition: expected a [1 x 3 x H x W] frame");
    const Tensor z = codec.encode_frames(first_frame);
    Shape rs = z.shape();
    rs[0] = num_frames;
    Tensor rep(rs);
    for (std::size_t n = 0; n < num_frames; ++n) std::copy_n(z.data(), z.numel(), rep.data() + n * z.numel());
    ConditionBundle c{std::move(rep), extractor.pooled(first_frame)};
    c.validate();
    return c;
}

ConditionBundle make_condition(const VideoClip& clip, const Codec& codec, const FeatureExtractor& extractor) {
    return make_condition(clip.frame(0), clip.num_frames(), codec, extractor);
}

void Backbones::freeze_for_finetuning() {
    codec.params().set_trainable(false);
    denoiser.params().set_trainable(true);
}

// ---------------------------------------------------------------- checkpoints

void save_codec(const Codec& c, const fs::path& file) {
    write_checkpoint({"codec", {{"spec", to_json(c.spec())}, {"parameter_seed", c.spec().parameter_seed}, {"latent_scale", c.latent_scale()}},
                      c.params().snapshot()},
                     file);
}

Codec load_codec(const fs::path& file) {
    const auto ck = read_checkpoint(file);
    if (ck.kind != "codec") throw SpecMismatchError(file.string() + ": expected a codec checkpoint, found '" + ck.kind + "'");
    Codec c(codec_spec_from_json(ck.meta.at("spec")));
    c.params().restore(ck.tensors);
    c.params().set_trainable(false);
    c.set_latent_scale(ck.meta.at("latent_scale").get<double>());
    return c;
}

void save_denoiser(const DenoiserNet& d, const fs::path& file) {
    write_checkpoint({"denoiser", {{"spec", to_json(d.spec())}, {"parameter_seed", d.spec().parameter_seed}}, d.params().snapshot()}, file);
}

DenoiserNet load_denoiser(const fs::path& file) {
    const auto ck = read_checkpoint(file);
    if (ck.kind != "denoiser") throw SpecMismatchError(file.string() + ": expected a denoiser checkpoint, found '" + ck.kind + "'");
    DenoiserNet d(denoiser_spec_from_json(ck.meta.at("spec")));
    d.params().restore(ck.tensors);
    return d;
}

void save_extractor(const FeatureExtractor& e, const fs::path& file) {
    write_checkpoint({"extractor", {{"spec", to_json(e.spec())}, {"parameter_seed", e.spec().parameter_seed}}, e.params().snapshot()}, file);
}

FeatureExtractor load_extractor(const fs::path& file) {
    const auto ck = read_checkpoint(file);
    if (ck.kind != "extractor") throw SpecMismatchError(file.string() + ": expected an extractor checkpoint, found '" + ck.kind + "'");
    FeatureExtractor e(extractor_spec_from_json(ck.meta.at("spec")));
    e.restore(ck.tensors);
    return e;
}

void save_backbones(const Backbones& nets, const fs::path& dir) {
    save_codec(nets.codec, dir / "codec.ckpt");
    save_denoiser(nets.denoiser, dir / "denoiser.ckpt");
    save_extractor(nets.extractor, dir / "extractor.ckpt");
}

Backbones load_backbones(const fs::path& dir) {
    Codec c = load_codec(dir / "codec.ckpt");
    DenoiserNet d = load_denoiser(dir / "denoiser.ckpt");
    FeatureExtractor e = load_extractor(dir / "extractor.ckpt");
    Backbones b(c.spec(), d.spec(), e.spec());
    b.codec = std::move(c);
    b.denoiser = std::move(d);
    b.extractor = std::move(e);
    return b;
}

// ---------------------------------------------------------------- codec pre-training

CodecTrainReport pretrain_codec(Codec& codec, const std::vector<VideoClip>& clips, const CodecTrainConfig& cfg) {
    if (clips.empty()) throw Error("pretrain_codec: no clips");
    CodecTrainReport report;
    codec.set_latent_scale(1.0);
    codec.params().set_trainable(true);
    train::AdamW opt(codec.params(), {cfg.learning_rate, 0.9, 0.999, 1e-8, 0.0, 1.0});
    std::mt19937_64 rng(cfg.seed);
    const Tensor& f0 = clips.front().frames();
    const std::size_t H = f0.dim(2), W = f0.dim(3), plane = 3 * H * W;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Tensor batch({cfg.frames_per_step, 3, H, W});
        for (std::size_t i = 0; i < cfg.frames_per_step; ++i) {
            const auto& clip = clips[std::uniform_int_distribution<std::size_t>(0, clips.size() - 1)(rng)];
            if (clip.height() != H || clip.width() != W) throw ShapeError("pretrain_codec: clips must share frame size");
            const std::size_t f = std::uniform_int_distribution<std::size_t>(0, clip.num_frames() - 1)(rng);
            std::copy_n(clip.frames().data() + f * plane, plane, batch.data() + i * plane);
        }
        codec.params().zero_grad();
        const ad::Var x = ad::constant(batch);
        const ad::Var loss = ad::sq_mean(codec.decode_graph(codec.encode_graph(x)), batch);
        ad::backward(loss);
        opt.step(codec.params());
        report.loss_history.push_back(loss->value[0]);
    }
    codec.params().set_trainable(false);

    // calibrate latent scale to unit standard deviation
    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    const std::size_t probe = std::min<std::size_t>(clips.size(), 32);
    for (std::size_t i = 0; i < probe; ++i) {
        const Tensor z = codec.encode_frames(clips[i].frames());
        for (double v : z.values()) {
            s += v;
            s2 += v * v;
        }
        n += z.numel();
    }
    const double mean = s / static_cast<double>(n);
    const double var = s2 / static_cast<double>(n) - mean * mean;
    codec.set_latent_scale(1.0 / std::sqrt(std::max(var, 1e-12)));
    report.latent_scale = codec.latent_scale();
    report.final_recon_mse = reconstruction_mse(codec, std::vector<VideoClip>(clips.begin(), clips.begin() + static_cast<std::ptrdiff_t>(probe)));
    return report;
}

double reconstruction_mse(const Codec& codec, const std::vector<VideoClip>& clips) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& clip : clips) {
        const Tensor rec = codec.decode(codec.encode(clip));
        for (std::size_t i = 0; i < rec.numel(); ++i) {
            const double d = rec[i] - clip.frames()[i];
            acc += d * d;
        }
        n += rec.numel();
    }
    return n ? acc / static_cast<double>(n) : 0.0;
}

}  // namespace lsa::nets
