#include "lsa/diffusion.hpp"

#include <cmath>
#include <string>

#include "lsa/backbones.hpp"

namespace lsa::diffusion {

NoiseSchedule make_schedule(std::size_t num_steps, double sigma_min, double sigma_max, double rho) {
    if (num_steps < 1) throw DomainError("schedule needs at least one step");
    if (!(sigma_min > 0.0) || !std::isfinite(sigma_max) || !(rho > 0.0) || !std::isfinite(rho)) {
        throw DomainError("schedule requires 0 < sigma_min, finite sigma_max and rho > 0");
    }
    if (num_steps == 1 ? sigma_min > sigma_max : !(sigma_min < sigma_max)) {
        throw DomainError("schedule requires sigma_min < sigma_max");
    }
    NoiseSchedule s;
    s.sigma_min_ = sigma_min;
    s.sigma_max_ = sigma_max;
    s.rho_ = rho;
    s.sigmas_.reserve(num_steps + 1);
    if (num_steps == 1) {
        s.sigmas_.push_back(sigma_max);
    } else {
        const double hi = std::pow(sigma_max, 1.0 / rho);
        const double lo = std::pow(sigma_min, 1.0 / rho);
        for (std::size_t i = 0; i < num_steps; ++i) {
            const double frac = static_cast<double>(i) / static_cast<double>(num_steps - 1);
            s.sigmas_.push_back(std::pow(hi + frac * (lo - hi), rho));
        }
        // pin the endpoints against pow round-off
        s.sigmas_.front() = sigma_max;
        s.sigmas_[num_steps - 1] = sigma_min;
    }
    s.sigmas_.push_back(0.0);
    return s;
}

LatentClip add_noise(const LatentClip& z0, double sigma, const Tensor& noise) {
    if (z0.sigma() != 0.0) throw DomainError("add_noise expects clean latents (sigma = 0)");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("add_noise: sigma must be finite and >= 0");
    require_same_shape(z0.latents(), noise, "add_noise");
    Tensor zt = z0.latents();
    if (sigma != 0.0) zt.add_scaled(noise, sigma);
    return LatentClip(std::move(zt), sigma);
}

double c_out(double sigma) {
    if (!(sigma >= 0.0)) throw DomainError("c_out: sigma must be >= 0");
    return -sigma / std::sqrt(1.0 + sigma * sigma);
}

double c_skip(double sigma) {
    if (!(sigma >= 0.0)) throw DomainError("c_skip: sigma must be >= 0");
    return 1.0 / (1.0 + sigma * sigma);
}

double loss_weight(double sigma) {
    if (!(sigma > 0.0)) throw DomainError("loss weight is undefined at sigma = 0");
    return (1.0 + sigma * sigma) / (sigma * sigma);
}

LatentClip denoised_estimate(const LatentClip& zt, const VelocityPrediction& v) {
    if (zt.sigma() != v.sigma) throw DomainError("denoised_estimate: latent sigma and prediction sigma differ");
    require_same_shape(zt.latents(), v.v, "denoised_estimate");
    const double a = c_out(v.sigma), b = c_skip(v.sigma);
    Tensor out = zt.latents() * b;
    if (a != 0.0) out.add_scaled(v.v, a);
    return LatentClip(std::move(out), 0.0);
}

ad::Var denoised_estimate(const ad::Var& zt, const ad::Var& v, double sigma) {
    return ad::axpby(c_out(sigma), v, c_skip(sigma), zt);
}

double diffusion_loss(const LatentClip& z0_hat, const LatentClip& z0, double sigma) {
    require_same_shape(z0_hat.latents(), z0.latents(), "diffusion_loss");
    const double w = loss_weight(sigma);
    const auto& a = z0_hat.latents();
    const auto& b = z0.latents();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return w * acc / static_cast<double>(a.numel());
}

ad::Var diffusion_loss(const ad::Var& z0_hat, const Tensor& z0, double sigma) {
    return ad::scale(ad::sq_mean(z0_hat, z0), loss_weight(sigma));
}

LatentClip euler_sample(const Denoiser& model, const NoiseSchedule& schedule, const Tensor& init_noise, const ConditionBundle& cond) {
    if (init_noise.rank() != 4) throw ShapeError("euler_sample: init noise must be [N x c x h x w]");
    const auto& sig = schedule.sigmas();
    Tensor z = init_noise * sig.front();
    for (std::size_t i = 0; i + 1 < sig.size(); ++i) {
        const double s = sig[i], s_next = sig[i + 1];
        const std::size_t step = schedule.num_steps() - i;
        const LatentClip zt(z, s);
        const VelocityPrediction v = model(zt, s, cond);
        if (v.v.shape() != z.shape()) {
            throw ShapeError("euler_sample: model output " + shape_str(v.v.shape()) + " does not match latents " + shape_str(z.shape()));
        }
        if (!v.v.all_finite()) throw NonFiniteError("euler_sample: non-finite model output at step " + std::to_string(step));
        const LatentClip z0_hat = denoised_estimate(zt, VelocityPrediction{v.v, s});
        if (s_next == 0.0) {
            // the final step lands on the estimate itself
            z = z0_hat.latents();
        } else {
            // slope d = (z - z0_hat) / s, step z += (s_next - s) * d
            const double h = (s_next - s) / s;
            for (std::size_t k = 0; k < z.numel(); ++k) z[k] += h * (z[k] - z0_hat.latents()[k]);
        }
        if (!z.all_finite()) throw NonFiniteError("euler_sample: non-finite latents after step " + std::to_string(step));
    }
    return LatentClip(std::move(z), 0.0);
}

double SigmaSampler::operator()(std::mt19937_64& rng) const {
    std::normal_distribution<double> nd(0.0, 1.0);
    return std::exp(location + scale * nd(rng));
}

Tensor standard_normal(const Shape& shape, std::mt19937_64& rng) {
    Tensor t(shape);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& v : t.values()) v = nd(rng);
    return t;
}

}  // namespace lsa::diffusion
