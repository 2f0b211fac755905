#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace zsar {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major array of doubles with an explicit shape.
//
// Most operations treat a tensor of rank r >= 1 as a matrix of
// rows() = product of the leading r-1 dims by cols() = last dim.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor filled(Shape shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }
    // 2-D tensor from nested rows; all rows must have equal length.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);
    static Tensor vector(std::vector<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
    std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

    std::span<const double> row(std::size_t r) const { return data().subspan(r * cols(), cols()); }
    std::span<double> row(std::size_t r) { return data().subspan(r * cols(), cols()); }

    // Same data, new shape; the element count must match.
    Tensor reshaped(Shape shape) const;
    double item() const;
    bool all_finite() const;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

  private:
    Shape shape_;
    std::vector<double> data_;
};

// Throws DimensionError unless the two shapes are identical.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace zsar
