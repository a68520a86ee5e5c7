#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "lsa/autograd.hpp"
#include "lsa/backbones.hpp"
#include "lsa/core_types.hpp"

namespace testing {

inline lsa::Tensor random_tensor(lsa::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    lsa::Tensor t(std::move(shape));
    for (auto& v : t.values()) v = u(rng);
    return t;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

/// Worst relative error between the analytic gradient of f w.r.t. x and central differences.
inline double gradient_check(const std::function<lsa::ad::Var(const lsa::ad::Var&)>& f, const lsa::Tensor& x0, double h = 1e-5,
                             std::size_t max_entries = 64) {
    auto x = lsa::ad::leaf(x0);
    lsa::ad::backward(f(x));
    const lsa::Tensor g = x->grad.empty() ? lsa::Tensor::zeros_like(x0) : x->grad;
    double worst = 0.0;
    const std::size_t stride = std::max<std::size_t>(1, x0.numel() / max_entries);
    for (std::size_t i = 0; i < x0.numel(); i += stride) {
        lsa::Tensor p = x0, m = x0;
        p[i] += h;
        m[i] -= h;
        const double fd = (f(lsa::ad::constant(p))->value[0] - f(lsa::ad::constant(m))->value[0]) / (2 * h);
        if (std::abs(fd) < 1e-9 && std::abs(g[i]) < 1e-9) continue;
        worst = std::max(worst, rel_err(fd, g[i]));
    }
    return worst;
}

/// Small backbones so unit tests stay fast: 16 x 16 frames, downsample 4, p = 4.
inline lsa::nets::Backbones tiny_backbones() {
    lsa::nets::CodecSpec c;
    c.hidden = 6;
    lsa::nets::DenoiserSpec d;
    d.hidden = 8;
    d.cond_dim = 8;
    lsa::nets::FeatureExtractorSpec e;
    e.feature_dim = 8;
    lsa::nets::Backbones b(c, d, e);
    b.freeze_for_finetuning();
    return b;
}

inline lsa::VideoClip random_clip(std::size_t N, std::size_t H, std::size_t W, std::mt19937_64& rng, const std::string& id = "c") {
    return lsa::VideoClip(random_tensor({N, 3, H, W}, rng, 0.0, 1.0), 7, id);
}

}  // namespace testing
