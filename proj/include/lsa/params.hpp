#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lsa/autograd.hpp"

namespace lsa::nets {

/// Ordered, named parameter leaves. Copies are deep.
class ParamSet {
public:
    ParamSet() = default;
    ParamSet(const ParamSet& other);
    ParamSet& operator=(const ParamSet& other);
    ParamSet(ParamSet&&) noexcept = default;
    ParamSet& operator=(ParamSet&&) noexcept = default;

    const ad::Var& add(std::string name, Tensor init);
    const ad::Var& get(const std::string& name) const;
    const std::vector<std::pair<std::string, ad::Var>>& items() const noexcept { return items_; }
    std::size_t count() const noexcept;

    void set_trainable(bool trainable);
    bool trainable() const noexcept { return trainable_; }
    void zero_grad();

    /// FNV-1a over names and the raw bytes of every value.
    std::uint64_t hash() const;

    std::vector<std::pair<std::string, Tensor>> snapshot() const;
    /// Restores values by name; shapes and name sets must match exactly.
    void restore(const std::vector<std::pair<std::string, Tensor>>& values);

private:
    std::vector<std::pair<std::string, ad::Var>> items_;
    bool trainable_ = true;
};

/// Gaussian initialisation with standard deviation `stddev`.
Tensor init_normal(Shape shape, double stddev, std::mt19937_64& rng);

}  // namespace lsa::nets
