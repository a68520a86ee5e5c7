#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "lsa/error.hpp"

namespace lsa {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

/// Dense row-major tensor of doubles with value semantics.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t i) const;
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::initializer_list<std::size_t> idx);
    double at(std::initializer_list<std::size_t> idx) const;

    /// Same data, new shape; element count must match.
    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    /// Copy of the contiguous slice [begin, end) along the leading axis.
    Tensor slice0(std::size_t begin, std::size_t end) const;
    /// Size of one leading-axis slice.
    std::size_t stride0() const;

    bool all_finite() const noexcept;
    double sum() const noexcept;
    double mean() const noexcept;

    Tensor& operator+=(const Tensor& o);
    Tensor& operator-=(const Tensor& o);
    Tensor& operator*=(double s) noexcept;
    void add_scaled(const Tensor& o, double s);
    void fill(double v) noexcept;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const;

    Shape shape_;
    std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);

/// Throws ShapeError naming `what` when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

std::size_t shape_numel(const Shape& s) noexcept;

}  // namespace lsa
