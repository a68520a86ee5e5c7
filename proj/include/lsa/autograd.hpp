#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lsa/tensor.hpp"

/// Minimal reverse-mode differentiation over Tensor values.
///
/// A graph is built implicitly by calling the op functions below. Nodes that
/// do not depend on any gradient-requiring leaf carry no backward closure, so
/// evaluating frozen networks on constant inputs costs nothing extra.
namespace lsa::ad {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    void accumulate(const Tensor& g);
    Tensor& grad_buffer();  // zero-initialized on first call
};

Var constant(Tensor t);
/// Leaf whose gradient is accumulated by backward().
Var leaf(Tensor t, bool requires_grad = true);

/// Seeds d(root)/d(root) = 1 (root must be a scalar) and propagates.
void backward(const Var& root);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// sa * a + sb * b.
Var axpby(double sa, const Var& a, double sb, const Var& b);

Var silu(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);

/// x: [B, Cin, H, W], w: [Cout, Cin, k, k], b: [Cout] (may be null). Zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
/// Nearest-neighbour 2x upsampling of [B, C, H, W].
Var upsample2x(const Var& x);
/// Concatenate [B, Ci, H, W] tensors along the channel axis.
Var concat_channels(const std::vector<Var>& xs);
/// Feature-wise modulation x * (1 + gamma[c]) + beta[c]; gamma, beta: [C].
Var film(const Var& x, const Var& gamma, const Var& beta);
/// Depthwise temporal convolution over the leading (frame) axis of [N, C, H, W];
/// w: [C, K] with K odd, zero padded at sequence ends.
Var temporal_conv(const Var& x, const Var& w);
/// x: [M, in], w: [out, in], b: [out] (may be null) -> [M, out].
Var linear(const Var& x, const Var& w, const Var& b);
/// [N, C, H, W] -> [N * (H/p) * (W/p), C * p * p], rows ordered (n, u, v).
Var patchify(const Var& x, std::size_t p);
Var reshape(const Var& x, Shape shape);
/// Mean over rows of [M, D] -> [D].
Var mean_rows(const Var& x);

/// mean(weights * (a - target)^2) as a scalar; weights share a's shape.
Var weighted_sq_mean(const Var& a, const Tensor& target, const Tensor& weights);
/// mean((a - target)^2) as a scalar.
Var sq_mean(const Var& a, const Tensor& target);
/// Weighted sum of scalar Vars.
Var combine(const std::vector<Var>& terms, const std::vector<double>& coeffs);

}  // namespace lsa::ad
