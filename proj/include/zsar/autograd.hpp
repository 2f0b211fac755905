#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "zsar/numerics.hpp"
#include "zsar/tensor.hpp"

// Tape-free reverse-mode differentiation over Tensor values. Every op builds a
// node holding its forward value and a closure that pushes the output gradient
// to its inputs; backward() walks the graph in reverse topological order.
namespace zsar::ag {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    // Gradient buffer, zero-initialized on first use.
    Tensor& grad_buffer();
};

class Var {
  public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    // Empty until backward() has reached this node.
    const Tensor& grad() const { return node_->grad; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }
    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& shared() const { return node_; }

    // Leaves only: parameter updates and finite-difference perturbation.
    Tensor& mutable_value() const;
    void zero_grad() const { node_->grad = Tensor(); }

  private:
    std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);

// Seeds d(root)/d(root) = 1 for a single-element root and accumulates into
// every reachable node that requires a gradient.
void backward(const Var& root);

// While alive on this thread, ops record no graph.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};
bool grad_enabled();

// Distance of the most recent forward passes to a point of
// non-differentiability: interpolation at an integer index, an active clamp
// bound, or a near tie in a min/max selection. Per thread.
namespace kink {
void reset();
double min_distance();
void note(double distance);
}  // namespace kink

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
// tanh-approximation GELU.
Var gelu(const Var& x);
Var log(const Var& x);
// Elementwise min(max(x, lo), hi); gradient is zero where the bound is active.
Var clamp(const Var& x, double lo, double hi);

// ---- linear algebra / layout ----
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);
// x[N x C] + b[C] on every row.
Var add_row_bias(const Var& x, const Var& bias);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& x, std::size_t begin, std::size_t count);
Var gather_rows(const Var& x, std::span<const std::size_t> rows);
// Flat-index gather returning a rank-1 tensor.
Var gather_elements(const Var& x, std::span<const std::size_t> flat);

// ---- reductions ----
Var sum(const Var& x);
Var mean(const Var& x);
// Mean over consecutive groups of `group` rows: [G*group x C] -> [G x C].
Var mean_row_groups(const Var& x, std::size_t group);

// ---- normalization / probability ----
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = kLayerNormEps);
Var softmax(const Var& x);
Var log_softmax(const Var& x);
// Scaled dot-product attention within consecutive blocks of `block` rows:
// rows of block b attend only to rows of block b. q, k, v are [N x D] with N
// a multiple of block.
Var block_attention(const Var& q, const Var& k, const Var& v, std::size_t block, double scale);
// [B x D], [K x D] -> [B x K] of row cosines.
Var cosine_matrix(const Var& a, const Var& b);
// mean_i  -sum_j t_ij log p_ij ; zero-target terms are skipped.
Var cross_entropy_probs(const Var& probs, const Tensor& targets);

// ---- motion statistics ----
// e[T x C] -> v[T], v_t = ||e_t - mean_s e_s||^2
Var deviation_from_mean(const Var& e);
// e[T x C] -> c[T], one-sided at the ends, halved two-sided inside.
Var central_difference(const Var& e);
// x[T] -> (x - min)/(max - min); all zeros (and zero gradient) when max == min.
Var minmax_normalize(const Var& x);
// Linear interpolation between rows of x[T x F] at 1-based positions idx[n].
// Position p uses rows floor(p) and floor(p)+1 with weight frac(p); p == T
// returns row T exactly and differentiates with the left neighbour.
Var interpolate_rows(const Var& x, const Var& idx);

}  // namespace zsar::ag
