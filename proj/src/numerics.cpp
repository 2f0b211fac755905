#include "zsar/numerics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "zsar/errors.hpp"
#include "eigen_view.hpp"

namespace zsar {

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError(fmt::format("matmul: incompatible shapes {} and {}", shape_str(a.shape()),
                                         shape_str(b.shape())));
    }
    Tensor out({a.dim(0), b.dim(1)});
    matrix_map(out).noalias() = matrix_map(a) * matrix_map(b);
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose expects a matrix, got " + shape_str(a.shape()));
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
    const std::size_t c = x.cols();
    if (gain.size() != c || bias.size() != c) {
        throw DimensionError(fmt::format("layer_norm: channel mismatch, x {} gain {} bias {}", shape_str(x.shape()),
                                         shape_str(gain.shape()), shape_str(bias.shape())));
    }
    Tensor out(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        auto o = out.row(r);
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= static_cast<double>(c);
        const double rstd = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) o[j] = (in[j] - mean) * rstd * gain[j] + bias[j];
    }
    return out;
}

Tensor softmax(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        auto o = out.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (double& v : o) v /= sum;
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError(fmt::format("dot: length {} vs {}", a.size(), b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_sim(std::span<const double> a, std::span<const double> b) {
    const double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine_sim: zero-norm input");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double cosine_sim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "cosine_sim");
    return cosine_sim(a.data(), b.data());
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape());
    std::transform(x.data().begin(), x.data().end(), out.data().begin(), [](double v) { return sigmoid(v); });
    return out;
}

Tensor tanh(const Tensor& x) {
    Tensor out(x.shape());
    std::transform(x.data().begin(), x.data().end(), out.data().begin(), [](double v) { return std::tanh(v); });
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

Tensor column_mean(const Tensor& a) {
    if (a.rank() != 2 || a.rows() == 0) throw DimensionError("column_mean: expected a non-empty matrix, got " + shape_str(a.shape()));
    Tensor out({a.cols()});
    for (std::size_t r = 1; r < a.rows(); ++r)
        for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a.at(r, j) - a.at(0, j);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] = a.at(0, j) + out[j] / static_cast<double>(a.rows());
    return out;
}

}  // namespace zsar
