#pragma once

#include <Eigen/Core>

#include "zsar/tensor.hpp"

// Zero-copy Eigen views of row-major matrices for the dense kernels.
namespace zsar {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

inline MatrixView matrix_map(Tensor& t) { return MatrixView(t.data().data(), t.rows(), t.cols()); }
inline ConstMatrixView matrix_map(const Tensor& t) { return ConstMatrixView(t.data().data(), t.rows(), t.cols()); }

// rows [row, row + count) of an n x cols buffer
inline MatrixView block_map(double* data, std::size_t row, std::size_t count, std::size_t cols) {
    return MatrixView(data + row * cols, count, cols);
}
inline ConstMatrixView block_map(const double* data, std::size_t row, std::size_t count, std::size_t cols) {
    return ConstMatrixView(data + row * cols, count, cols);
}

}  // namespace zsar
