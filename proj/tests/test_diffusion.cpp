#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "lsa/diffusion.hpp"
#include "lsa/error.hpp"

using namespace lsa;
using namespace lsa::diffusion;

namespace {

ConditionBundle dummy_condition(std::size_t N) { return {Tensor({N, 1, 2, 2}), Tensor({4})}; }

/// Velocity that makes the one-step estimate equal `target` exactly: v = (target - c_skip z) / c_out.
Denoiser oracle_toward(const Tensor& target) {
    return [target](const LatentClip& zt, double sigma, const ConditionBundle&) {
        Tensor v = (target - zt.latents() * c_skip(sigma)) * (1.0 / c_out(sigma));
        return VelocityPrediction{v, sigma};
    };
}

}  // namespace

TEST_CASE("schedule shape and endpoints") {
    const auto one = make_schedule(1, 1.0, 1.0);
    CHECK(one.sigmas() == std::vector<double>{1.0, 0.0});

    const auto s = make_schedule(50);
    REQUIRE(s.sigmas().size() == 51);
    CHECK(s.sigmas().front() == doctest::Approx(80.0).epsilon(1e-12));
    CHECK(s.sigmas()[49] == doctest::Approx(0.002).epsilon(1e-12));
    CHECK(s.sigmas().back() == 0.0);
    for (std::size_t T : {2, 3, 7, 20, 50})
        for (double rho : {1.0, 3.0, 7.0}) {
            const auto sc = make_schedule(T, 0.01, 5.0, rho);
            for (std::size_t i = 1; i < sc.sigmas().size(); ++i) CHECK(sc.sigmas()[i] < sc.sigmas()[i - 1]);
        }
    CHECK_THROWS_AS(make_schedule(0), DomainError);
    CHECK_THROWS_AS(make_schedule(5, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(make_schedule(5, 0.0, 1.0), DomainError);
    CHECK_THROWS_AS(make_schedule(5, 0.1, 1.0, 0.0), DomainError);
}

TEST_CASE("add_noise") {
    std::mt19937_64 rng(1);
    const LatentClip z0(testing::random_tensor({2, 2, 3, 3}, rng), 0.0);
    const Tensor noise = testing::random_tensor({2, 2, 3, 3}, rng);
    CHECK(add_noise(z0, 0.0, noise).latents() == z0.latents());
    const auto z = add_noise(LatentClip(Tensor({2, 2, 3, 3}), 0.0), 2.0, Tensor({2, 2, 3, 3}, 1.0));
    for (double v : z.latents().storage()) CHECK(v == 2.0);
    CHECK(z.sigma() == 2.0);
    CHECK_THROWS_AS(add_noise(z0, 1.0, Tensor({2, 2, 3, 4})), ShapeError);
}

TEST_CASE("add_noise variance matches sigma squared") {
    std::mt19937_64 rng(2);
    const double sigma = 1.7;
    const Tensor noise = standard_normal({1000, 1, 10, 10}, rng);
    const LatentClip z0(Tensor({1000, 1, 10, 10}, 0.3), 0.0);
    const Tensor d = add_noise(z0, sigma, noise).latents() - z0.latents();
    double mean = 0, sq = 0;
    for (double v : d.storage()) mean += v;
    mean /= d.numel();
    for (double v : d.storage()) sq += (v - mean) * (v - mean);
    CHECK(sq / (d.numel() - 1) == doctest::Approx(sigma * sigma).epsilon(0.05));
}

TEST_CASE("coefficients match closed forms") {
    CHECK(c_out(0.0) == 0.0);
    CHECK(c_skip(0.0) == 1.0);
    CHECK(c_out(1.0) == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(c_skip(1.0) == 0.5);
    CHECK(loss_weight(1.0) == 2.0);
    CHECK(std::abs(c_skip(1e6)) < 1e-6);
    CHECK(std::abs(loss_weight(1e6) - 1.0) < 1e-6);
    CHECK_THROWS_AS(loss_weight(0.0), DomainError);
    CHECK_THROWS_AS(c_out(-1.0), DomainError);
    for (double e = -3; e <= 3; e += 0.25) {
        const double s = std::pow(10.0, e);
        CHECK(testing::rel_err(c_skip(s) * (1 + s * s), 1.0) < 1e-12);
        CHECK(testing::rel_err(c_out(s) * std::sqrt(1 + s * s), -s) < 1e-12);
    }
}

TEST_CASE("denoised estimate") {
    std::mt19937_64 rng(3);
    const Tensor z = testing::random_tensor({2, 1, 2, 2}, rng);
    CHECK(denoised_estimate(LatentClip(z, 0.0), {testing::random_tensor({2, 1, 2, 2}, rng), 0.0}).latents() == z);
    const auto half = denoised_estimate(LatentClip(z, 1.0), {Tensor({2, 1, 2, 2}), 1.0});
    CHECK(half.latents() == z * 0.5);
    CHECK(half.sigma() == 0.0);
    CHECK_THROWS_AS(denoised_estimate(LatentClip(z, 1.0), {Tensor({2, 1, 2, 2}), 2.0}), DomainError);

    const Tensor z0 = testing::random_tensor({2, 1, 2, 2}, rng);
    const Tensor noise = testing::random_tensor({2, 1, 2, 2}, rng);
    for (double sigma : {0.01, 0.5, 3.0, 40.0}) {
        const auto zt = add_noise(LatentClip(z0, 0.0), sigma, noise);
        const Tensor v = (z0 - zt.latents() * c_skip(sigma)) * (1.0 / c_out(sigma));
        const auto est = denoised_estimate(zt, {v, sigma});
        for (std::size_t i = 0; i < z0.numel(); ++i) CHECK(std::abs(est.latents()[i] - z0[i]) < 1e-6);
    }
}

TEST_CASE("diffusion loss") {
    std::mt19937_64 rng(4);
    const Tensor a = testing::random_tensor({2, 3, 2, 2}, rng);
    CHECK(diffusion_loss(LatentClip(a, 0.0), LatentClip(a, 0.0), 0.5) == 0.0);
    CHECK(diffusion_loss(LatentClip(a + Tensor::full(a.shape(), 1.0), 0.0), LatentClip(a, 0.0), 1.0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK_THROWS_AS(diffusion_loss(LatentClip(a, 0.0), LatentClip(a, 0.0), 0.0), DomainError);
    CHECK_THROWS_AS(diffusion_loss(LatentClip(a, 0.0), LatentClip(Tensor({2, 3, 2, 1}), 0.0), 1.0), ShapeError);

    // permutation invariance
    const Tensor b = testing::random_tensor({2, 3, 2, 2}, rng);
    std::vector<std::size_t> perm(a.numel());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor pa(a.shape()), pb(b.shape());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        pa[i] = a[perm[i]];
        pb[i] = b[perm[i]];
    }
    CHECK(diffusion_loss(LatentClip(pa, 0.0), LatentClip(pb, 0.0), 0.7) ==
          doctest::Approx(diffusion_loss(LatentClip(a, 0.0), LatentClip(b, 0.0), 0.7)).epsilon(1e-13));
}

TEST_CASE("euler sampler with an oracle denoiser reaches the target") {
    std::mt19937_64 rng(5);
    const Tensor target = testing::random_tensor({3, 1, 2, 2}, rng);
    const Tensor init = standard_normal({3, 1, 2, 2}, rng);
    const auto cond = dummy_condition(3);
    for (std::size_t T : {1, 2, 5, 10, 50}) {
        const auto s = make_schedule(T, 0.002, 80.0);
        const auto out = euler_sample(oracle_toward(target), s, init * s.sigmas().front(), cond);
        CHECK(out.sigma() == 0.0);
        for (std::size_t i = 0; i < target.numel(); ++i) CHECK(std::abs(out.latents()[i] - target[i]) < 1e-5);
        const auto s2 = make_schedule(2 * T, 0.002, 80.0);
        const auto out2 = euler_sample(oracle_toward(target), s2, init * s2.sigmas().front(), cond);
        for (std::size_t i = 0; i < target.numel(); ++i) CHECK(std::abs(out.latents()[i] - out2.latents()[i]) < 1e-5);
    }
}

TEST_CASE("one Euler step lands exactly on the estimate") {
    std::mt19937_64 rng(6);
    const Tensor init = testing::random_tensor({2, 1, 2, 2}, rng);
    const Tensor vel = testing::random_tensor({2, 1, 2, 2}, rng);
    const Denoiser constant_v = [vel](const LatentClip&, double sigma, const ConditionBundle&) { return VelocityPrediction{vel, sigma}; };
    const auto s = make_schedule(1, 1.0, 1.0);
    const auto out = euler_sample(constant_v, s, init, dummy_condition(2));
    CHECK(out.latents() == denoised_estimate(LatentClip(init, 1.0), {vel, 1.0}).latents());
}

TEST_CASE("sampler reports the failing step") {
    const Denoiser wrong_shape = [](const LatentClip&, double sigma, const ConditionBundle&) { return VelocityPrediction{Tensor({1}), sigma}; };
    CHECK_THROWS_AS(euler_sample(wrong_shape, make_schedule(3), Tensor({2, 1, 2, 2}), dummy_condition(2)), ShapeError);
    const Denoiser blows_up = [](const LatentClip& z, double sigma, const ConditionBundle&) {
        Tensor v = z.latents();
        if (sigma < 1.0) v[0] = std::nan("");
        return VelocityPrediction{v, sigma};
    };
    CHECK_THROWS_WITH_AS(euler_sample(blows_up, make_schedule(10), Tensor({2, 1, 2, 2}, 1.0), dummy_condition(2)), doctest::Contains("step"),
                         NonFiniteError);
}

TEST_CASE("sigma sampler is log-normal and deterministic") {
    std::mt19937_64 a(9), b(9);
    SigmaSampler s;
    double mean_log = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = s(a);
        CHECK(x == s(b));
        mean_log += std::log(x);
    }
    CHECK(mean_log / n == doctest::Approx(-1.2).epsilon(0.03));
}
