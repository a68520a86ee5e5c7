#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsa/params.hpp"

namespace lsa::train {

struct AdamWConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    /// Global-norm gradient clipping; <= 0 disables.
    double grad_clip = 1.0;
};

/// AdamW with decoupled weight decay over one ParamSet.
class AdamW {
public:
    AdamW(const nets::ParamSet& params, AdamWConfig cfg);

    /// Applies one update from the accumulated gradients and returns the
    /// pre-clipping global gradient norm. Parameters without a gradient are
    /// treated as having a zero gradient.
    double step(nets::ParamSet& params);

    std::int64_t steps_taken() const noexcept { return t_; }
    const AdamWConfig& config() const noexcept { return cfg_; }

    std::vector<std::pair<std::string, Tensor>> state_tensors() const;
    void load_state(const std::vector<std::pair<std::string, Tensor>>& tensors, std::int64_t steps_taken);

private:
    AdamWConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::int64_t t_ = 0;
};

}  // namespace lsa::train
