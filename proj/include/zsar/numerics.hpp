#pragma once

#include <span>

#include "zsar/tensor.hpp"

namespace zsar {

inline constexpr double kLayerNormEps = 1e-5;

// [m x k] * [k x n]. Rank-1 operands are not promoted; both must be 2-D.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Normalizes every row over the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);

// Softmax over the last axis of every row (a rank-1 input is one row).
Tensor softmax(const Tensor& x);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
// Throws DegenerateInputError when either argument has zero norm.
double cosine_sim(std::span<const double> a, std::span<const double> b);
double cosine_sim(const Tensor& a, const Tensor& b);

double sigmoid(double x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// Column means of a matrix, accumulated as offsets from the first row so that
// identical rows give their value exactly.
Tensor column_mean(const Tensor& a);

}  // namespace zsar
