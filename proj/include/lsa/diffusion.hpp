#pragma once

#include <functional>
#include <random>
#include <vector>

#include "lsa/autograd.hpp"
#include "lsa/core_types.hpp"

namespace lsa {
struct ConditionBundle;
}

namespace lsa::diffusion {

/// Noise levels sigma_T > ... > sigma_1 > sigma_0 = 0, stored in sampling order
/// (index 0 holds sigma_T, the last entry is exactly 0).
class NoiseSchedule {
public:
    std::size_t num_steps() const noexcept { return sigmas_.size() - 1; }
    const std::vector<double>& sigmas() const noexcept { return sigmas_; }
    double sigma_min() const noexcept { return sigma_min_; }
    double sigma_max() const noexcept { return sigma_max_; }
    double rho() const noexcept { return rho_; }

private:
    friend NoiseSchedule make_schedule(std::size_t, double, double, double);
    std::vector<double> sigmas_;
    double sigma_min_ = 0, sigma_max_ = 0, rho_ = 0;
};

/// Karras power-interpolated spacing between sigma_max and sigma_min, then a final 0.
/// T = 1 yields [sigma_max, 0].
NoiseSchedule make_schedule(std::size_t num_steps, double sigma_min = 0.002, double sigma_max = 80.0, double rho = 7.0);

struct VelocityPrediction {
    Tensor v;
    double sigma = 0.0;
};

LatentClip add_noise(const LatentClip& z0, double sigma, const Tensor& noise);

// v-prediction coefficients
double c_out(double sigma);
double c_skip(double sigma);
/// (1 + sigma^2) / sigma^2; DomainError at sigma <= 0.
double loss_weight(double sigma);

/// z0_hat = c_out(sigma) * v + c_skip(sigma) * z_t, tagged sigma = 0.
LatentClip denoised_estimate(const LatentClip& zt, const VelocityPrediction& v);
ad::Var denoised_estimate(const ad::Var& zt, const ad::Var& v, double sigma);

/// w(sigma) * mean((z0_hat - z0)^2).
double diffusion_loss(const LatentClip& z0_hat, const LatentClip& z0, double sigma);
ad::Var diffusion_loss(const ad::Var& z0_hat, const Tensor& z0, double sigma);

using Denoiser = std::function<VelocityPrediction(const LatentClip& zt, double sigma, const ConditionBundle& cond)>;

/// Deterministic Euler integration from sigma_T down to 0.
LatentClip euler_sample(const Denoiser& model, const NoiseSchedule& schedule, const Tensor& init_noise, const ConditionBundle& cond);

/// Log-normal training noise level: exp(location + scale * N(0,1)).
struct SigmaSampler {
    double location = -1.2;
    double scale = 1.2;

    double operator()(std::mt19937_64& rng) const;
};

/// Fills a tensor of `shape` with independent standard normal draws.
Tensor standard_normal(const Shape& shape, std::mt19937_64& rng);

}  // namespace lsa::diffusion
