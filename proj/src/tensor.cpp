#include "zsar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "zsar/errors.hpp"

namespace zsar {

std::string shape_str(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, "x")); }

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {
void check_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor dims must be positive, got " + shape_str(shape));
    }
}
}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError(fmt::format("shape {} holds {} values, got {}", shape_str(shape_),
                                         shape_numel(shape_), data_.size()));
    }
}

Tensor Tensor::filled(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0) throw DimensionError("matrix needs at least one row");
    const std::size_t ncols = rows.begin()->size();
    std::vector<double> data;
    data.reserve(rows.size() * ncols);
    for (const auto& r : rows) {
        if (r.size() != ncols) throw DimensionError("ragged matrix literal");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), ncols}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) { return vector(std::vector<double>(values)); }

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != size()) {
        throw DimensionError(fmt::format("cannot reshape {} to {}", shape_str(shape_), shape_str(shape)));
    }
    return Tensor(std::move(shape), data_);
}

double Tensor::item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op, shape_str(a.shape()),
                                         shape_str(b.shape())));
    }
}

}  // namespace zsar
