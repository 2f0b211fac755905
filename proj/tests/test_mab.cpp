#include <doctest.h>

#include <array>
#include <cmath>

#include "zsar/errors.hpp"
#include "zsar/gradcheck.hpp"
#include "zsar/mab.hpp"

using namespace zsar;

namespace {

Tensor ln_rows(const Tensor& x) {
    Tensor out(x.shape());
    const std::size_t c = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mu = 0.0, var = 0.0;
        for (double v : x.row(r)) mu += v / c;
        for (double v : x.row(r)) var += (v - mu) * (v - mu) / c;
        for (std::size_t j = 0; j < c; ++j) out.row(r)[j] = (x.row(r)[j] - mu) / std::sqrt(var + kLayerNormEps);
    }
    return out;
}

double max_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("zero global stream leaves LayerNorm of the dynamic stream") {
    RngStream rng(1, 0);
    mab::GateParams p = mab::GateParams::init(5);
    p.w_gate.mutable_value() = rng.normal_tensor({15, 5});
    const Tensor xd = rng.normal_tensor({4, 2, 2, 5});
    const Tensor out = mab::fuse(xd, Tensor::zeros(xd.shape()), p);
    CHECK(out.shape() == xd.shape());
    CHECK(max_diff(out, ln_rows(xd)) <= 1e-12);
}

TEST_CASE("zero gate weights open every gate halfway") {
    RngStream rng(2, 0);
    const mab::GateParams p = mab::GateParams::init(5);
    const Tensor xd = rng.normal_tensor({4, 2, 2, 5});
    const Tensor xg = rng.normal_tensor({4, 2, 2, 5});
    CHECK(max_diff(mab::fuse(xd, xg, p), ln_rows(add(xd, scale(xg, 0.5)))) <= 1e-12);
}

TEST_CASE("gate matches a per-position loop") {
    RngStream rng(3, 0);
    mab::GateParams p = mab::GateParams::init(3);
    p.w_gate.mutable_value() = rng.normal_tensor({9, 3});
    const Tensor xd = rng.normal_tensor({2, 1, 2, 3});
    const Tensor xg = rng.normal_tensor({2, 1, 2, 3});
    Tensor pre(xd.shape());
    for (std::size_t r = 0; r < xd.rows(); ++r) {
        for (std::size_t j = 0; j < 3; ++j) {
            double z = 0.0;
            for (std::size_t i = 0; i < 3; ++i) {
                const double d = xd.row(r)[i], g = xg.row(r)[i];
                z += d * g * p.w_gate.value().at(i, j) + d * p.w_gate.value().at(3 + i, j) + g * p.w_gate.value().at(6 + i, j);
            }
            pre.row(r)[j] = xd.row(r)[j] + xg.row(r)[j] / (1.0 + std::exp(-z));
        }
    }
    CHECK(max_diff(mab::fuse(xd, xg, p), ln_rows(pre)) <= 1e-12);
}

TEST_CASE("shape errors") {
    const mab::GateParams p = mab::GateParams::init(4);
    CHECK_THROWS_AS(mab::fuse(Tensor::zeros({2, 4}), Tensor::zeros({3, 4}), p), DimensionError);
    CHECK_THROWS_AS(mab::fuse(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}), p), DimensionError);
}

TEST_CASE("fuse gradients and residual path") {
    RngStream rng(4, 0);
    mab::GateParams p = mab::GateParams::init(4);
    p.w_gate.mutable_value() = rng.normal_tensor({12, 4}, 0.5);
    p.ln_gain.mutable_value() = rng.normal_tensor({4});
    p.ln_bias.mutable_value() = rng.normal_tensor({4});
    const ag::Var xd = ag::parameter(rng.normal_tensor({3, 4}));
    const ag::Var xg = ag::parameter(rng.normal_tensor({3, 4}));
    const ag::Var w = ag::constant(rng.normal_tensor({3, 4}));
    const auto f = [&] { return ag::sum(ag::mul(mab::fuse(xd, xg, p), w)); };
    std::vector<ag::Var> params = p.parameters();
    params.push_back(xd);
    params.push_back(xg);
    CHECK(gradcheck::check_gradient("fuse", f, params).max_rel_error < 1e-4);

    // Saturated-closed gate: X_D still receives gradient.
    p.w_gate.mutable_value() = Tensor::filled({12, 4}, -1e3);
    const ag::Var xd2 = ag::parameter(Tensor::filled({3, 4}, 1.0));
    const ag::Var xg2 = ag::constant(rng.normal_tensor({3, 4}));
    for (std::size_t r = 0; r < 3; ++r) xd2.mutable_value().at(r, r) = 2.0;
    ag::backward(ag::sum(ag::mul(mab::fuse(xd2, xg2, p), w)));
    double norm = 0.0;
    for (double g : xd2.grad().data()) norm += g * g;
    CHECK(norm > 0.0);
}

TEST_CASE("raising one gate logit raises that channel's gated contribution") {
    RngStream rng(5, 0);
    mab::GateParams p = mab::GateParams::init(3);
    p.w_gate.mutable_value() = rng.normal_tensor({9, 3});
    const ag::Var xd = ag::constant(rng.normal_tensor({1, 3}));
    Tensor g = rng.normal_tensor({1, 3});
    g[1] = std::abs(g[1]) + 0.1;
    const ag::Var xg = ag::constant(g);
    double previous = -1.0;
    for (double bump : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
        mab::GateParams q = p;
        q.w_gate = ag::parameter(p.w_gate.value());
        // Column 1 multiplies the X_G block: adding to the entry fed by the
        // positive X_G[1] lifts the pre-sigmoid logit of channel 1.
        q.w_gate.mutable_value().at(6 + 1, 1) += bump;
        const std::array<ag::Var, 3> parts{ag::mul(xd, xg), xd, xg};
        const double gated = ag::mul(ag::sigmoid(ag::matmul(ag::concat_cols(parts), q.w_gate)), xg).value()[1];
        CHECK(std::abs(gated) > previous);
        previous = std::abs(gated);
    }
}
