#pragma once

#include <vector>

#include "zsar/autograd.hpp"
#include "zsar/tensor.hpp"

namespace zsar::mab {

// Gate weights act per (t, h, w) position on the channel axis and are shared
// across positions. No gate bias.
struct GateParams {
    ag::Var w_gate;    // 3C x C over [X_D * X_G, X_D, X_G]
    ag::Var ln_gain;   // C
    ag::Var ln_bias;   // C

    // Zero gate weights (every gate opens to 0.5), unit gain, zero bias.
    static GateParams init(std::size_t channels);
    std::vector<ag::Var> parameters() const;
};

// LayerNorm(X_D + sigmoid([X_D * X_G, X_D, X_G] W_g) * X_G) at every position.
// Throws DimensionError when the streams' shapes differ or C disagrees with
// the gate.
ag::Var fuse(const ag::Var& x_d, const ag::Var& x_g, const GateParams& params);
Tensor fuse(const Tensor& x_d, const Tensor& x_g, const GateParams& params);

}  // namespace zsar::mab
