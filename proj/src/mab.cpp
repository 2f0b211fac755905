#include "zsar/mab.hpp"

#include <array>

#include <fmt/format.h>

#include "zsar/errors.hpp"

namespace zsar::mab {

GateParams GateParams::init(std::size_t channels) {
    return {ag::parameter(Tensor({3 * channels, channels})), ag::parameter(Tensor::filled({channels}, 1.0)),
            ag::parameter(Tensor({channels}))};
}

std::vector<ag::Var> GateParams::parameters() const { return {w_gate, ln_gain, ln_bias}; }

ag::Var fuse(const ag::Var& x_d, const ag::Var& x_g, const GateParams& params) {
    require_same_shape(x_d.value(), x_g.value(), "mab::fuse");
    const Shape shape = x_d.shape();
    const std::size_t c = x_d.value().cols();
    if (params.w_gate.value().rank() != 2 || params.w_gate.value().dim(0) != 3 * c || params.w_gate.value().dim(1) != c) {
        throw DimensionError(fmt::format("mab::fuse: {} channels vs gate weights {}", c,
                                         shape_str(params.w_gate.shape())));
    }
    const std::size_t rows = x_d.value().rows();
    const ag::Var d = ag::reshape(x_d, {rows, c});
    const ag::Var g = ag::reshape(x_g, {rows, c});
    const std::array<ag::Var, 3> parts{ag::mul(d, g), d, g};
    const ag::Var gate = ag::sigmoid(ag::matmul(ag::concat_cols(parts), params.w_gate));
    const ag::Var pre = ag::add(d, ag::mul(gate, g));
    return ag::reshape(ag::layer_norm(pre, params.ln_gain, params.ln_bias), shape);
}

Tensor fuse(const Tensor& x_d, const Tensor& x_g, const GateParams& params) {
    ag::NoGradGuard guard;
    return fuse(ag::constant(x_d), ag::constant(x_g), params).value();
}

}  // namespace zsar::mab
