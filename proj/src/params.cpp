#include "lsa/params.hpp"

#include <cstring>

namespace lsa::nets {

ParamSet::ParamSet(const ParamSet& other) : trainable_(other.trainable_) {
    items_.reserve(other.items_.size());
    for (const auto& [name, v] : other.items_) items_.emplace_back(name, ad::leaf(v->value, trainable_));
}

ParamSet& ParamSet::operator=(const ParamSet& other) {
    if (this != &other) {
        ParamSet tmp(other);
        *this = std::move(tmp);
    }
    return *this;
}

const ad::Var& ParamSet::add(std::string name, Tensor init) {
    for (const auto& [n, v] : items_) {
        if (n == name) throw Error("duplicate parameter name " + name);
    }
    items_.emplace_back(std::move(name), ad::leaf(std::move(init), trainable_));
    return items_.back().second;
}

const ad::Var& ParamSet::get(const std::string& name) const {
    for (const auto& [n, v] : items_) {
        if (n == name) return v;
    }
    throw Error("unknown parameter " + name);
}

std::size_t ParamSet::count() const noexcept {
    std::size_t n = 0;
    for (const auto& [name, v] : items_) n += v->value.numel();
    return n;
}

void ParamSet::set_trainable(bool trainable) {
    trainable_ = trainable;
    for (auto& [n, v] : items_) {
        v->requires_grad = trainable;
        v->grad = Tensor();
    }
}

void ParamSet::zero_grad() {
    for (auto& [n, v] : items_) v->grad = Tensor();
}

std::uint64_t ParamSet::hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, std::size_t len) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& [n, v] : items_) {
        mix(n.data(), n.size());
        mix(v->value.data(), v->value.numel() * sizeof(double));
    }
    return h;
}

std::vector<std::pair<std::string, Tensor>> ParamSet::snapshot() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(items_.size());
    for (const auto& [n, v] : items_) out.emplace_back(n, v->value);
    return out;
}

void ParamSet::restore(const std::vector<std::pair<std::string, Tensor>>& values) {
    if (values.size() != items_.size()) throw SpecMismatchError("parameter count mismatch on restore");
    for (std::size_t i = 0; i < items_.size(); ++i) {
        const auto& [name, t] = values[i];
        auto& [n, v] = items_[i];
        if (name != n) throw SpecMismatchError("parameter '" + name + "' found where '" + n + "' expected");
        if (t.shape() != v->value.shape()) {
            throw SpecMismatchError("parameter '" + n + "' has shape " + shape_str(t.shape()) + ", expected " + shape_str(v->value.shape()));
        }
        v->value = t;
        v->grad = Tensor();
    }
}

Tensor init_normal(Shape shape, double stddev, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> nd(0.0, stddev);
    for (auto& v : t.values()) v = nd(rng);
    return t;
}

}  // namespace lsa::nets
