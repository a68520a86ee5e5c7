#include "lsa/optim.hpp"

#include <cmath>

namespace lsa::train {

AdamW::AdamW(const nets::ParamSet& params, AdamWConfig cfg) : cfg_(cfg) {
    for (const auto& [name, v] : params.items()) {
        m_.push_back(Tensor::zeros_like(v->value));
        v_.push_back(Tensor::zeros_like(v->value));
    }
}

double AdamW::step(nets::ParamSet& params) {
    const auto& items = params.items();
    if (items.size() != m_.size()) throw Error("AdamW: parameter set changed since construction");
    double sq = 0.0;
    for (const auto& [name, p] : items) {
        for (double g : p->grad.values()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    const double clip = (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm : 1.0;

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double lr = cfg_.learning_rate;
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto& p = items[i].second;
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        const bool has_grad = !p->grad.empty();
        for (std::size_t k = 0; k < p->value.numel(); ++k) {
            const double g = has_grad ? p->grad[k] * clip : 0.0;
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p->value[k] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p->value[k]);
        }
    }
    return norm;
}

std::vector<std::pair<std::string, Tensor>> AdamW::state_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < m_.size(); ++i) {
        out.emplace_back("adam.m." + std::to_string(i), m_[i]);
        out.emplace_back("adam.v." + std::to_string(i), v_[i]);
    }
    return out;
}

void AdamW::load_state(const std::vector<std::pair<std::string, Tensor>>& tensors, std::int64_t steps_taken) {
    std::size_t found = 0;
    for (const auto& [name, t] : tensors) {
        for (std::size_t i = 0; i < m_.size(); ++i) {
            const std::string suffix = std::to_string(i);
            if (name == "adam.m." + suffix) {
                require_same_shape(m_[i], t, "AdamW state");
                m_[i] = t;
                ++found;
            } else if (name == "adam.v." + suffix) {
                require_same_shape(v_[i], t, "AdamW state");
                v_[i] = t;
                ++found;
            }
        }
    }
    if (found != 2 * m_.size()) throw SpecMismatchError("optimizer state does not match parameter set");
    t_ = steps_taken;
}

}  // namespace lsa::train
