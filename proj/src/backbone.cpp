#include "zsar/backbone.hpp"

#include <cmath>

#include <fmt/format.h>

#include "zsar/errors.hpp"

namespace zsar {

FrameFeatures::FrameFeatures(Tensor x) : x_(std::move(x)) {
    if (x_.rank() != 4) throw DimensionError("FrameFeatures: expected T x H x W x C, got " + shape_str(x_.shape()));
    if (x_.dim(0) < 4 || x_.dim(0) % 2 != 0) {
        throw DimensionError(fmt::format("FrameFeatures: frame count must be even and >= 4, got {}", x_.dim(0)));
    }
    if (!x_.all_finite()) throw NumericDomainError("FrameFeatures: non-finite entries");
}

FrameFeatures generate_video(const SyntheticVideoSpec& spec, const Tensor& class_prototypes,
                             const VideoGeometry& geometry, const RngStream& rng) {
    if (class_prototypes.rank() != 2) {
        throw DimensionError("generate_video: prototypes must be K x C, got " + shape_str(class_prototypes.shape()));
    }
    if (spec.class_id >= class_prototypes.dim(0)) {
        throw IndexError(fmt::format("generate_video: class {} outside [0, {})", spec.class_id, class_prototypes.dim(0)));
    }
    if (spec.motion_amplitude < 0.0 || spec.noise_sigma < 0.0) {
        throw ParameterError("generate_video: amplitude and noise must be non-negative");
    }
    const std::size_t t = geometry.frames, h = geometry.height, w = geometry.width;
    const std::size_t c = class_prototypes.dim(1);
    for (auto f : spec.motion_frames) {
        if (f < 1 || f > t) throw IndexError(fmt::format("generate_video: motion frame {} outside [1, {}]", f, t));
    }

    RngStream noise = rng.split(0);
    RngStream motion = rng.split(1);
    const auto proto = class_prototypes.row(spec.class_id);

    Tensor x({t, h, w, c});
    const std::size_t per_frame = h * w;
    for (std::size_t r = 0; r < t * per_frame; ++r) {
        auto row = x.row(r);
        for (std::size_t j = 0; j < c; ++j) row[j] = proto[j] + noise.normal(0.0, spec.noise_sigma);
    }

    for (auto f : spec.motion_frames) {
        std::vector<double> dir(c);
        for (auto& d : dir) d = motion.normal();
        const double n = l2_norm(dir);
        if (spec.motion_amplitude == 0.0 || n == 0.0) continue;
        for (std::size_t p = 0; p < per_frame; ++p) {
            auto row = x.row((f - 1) * per_frame + p);
            for (std::size_t j = 0; j < c; ++j) row[j] += spec.motion_amplitude * dir[j] / n;
        }
    }
    return FrameFeatures(std::move(x));
}

DualAdapter DualAdapter::zeros(std::size_t dim, std::size_t bottleneck) {
    DualAdapter a;
    a.dim = dim;
    a.bottleneck = bottleneck;
    a.w_query = ag::parameter(Tensor({dim, dim}));
    a.w_key = ag::parameter(Tensor({dim, dim}));
    a.w_value = ag::parameter(Tensor({dim, dim}));
    a.w_out = ag::parameter(Tensor({dim, dim}));
    a.w_down = ag::parameter(Tensor({dim, bottleneck}));
    a.b_down = ag::parameter(Tensor({bottleneck}));
    a.w_up = ag::parameter(Tensor({bottleneck, dim}));
    a.b_up = ag::parameter(Tensor({dim}));
    return a;
}

DualAdapter DualAdapter::identity_init(std::size_t dim, std::size_t bottleneck, RngStream& rng) {
    DualAdapter a = zeros(dim, bottleneck);
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    a.w_query.mutable_value() = rng.normal_tensor({dim, dim}, s);
    a.w_key.mutable_value() = rng.normal_tensor({dim, dim}, s);
    a.w_value.mutable_value() = rng.normal_tensor({dim, dim}, s);
    a.w_down.mutable_value() = rng.normal_tensor({dim, bottleneck}, s);
    return a;
}

std::vector<ag::Var> DualAdapter::parameters() const {
    return {w_query, w_key, w_value, w_out, w_down, b_down, w_up, b_up};
}

ag::Var apply_dual_adapter(const DualAdapter& adapter, const ag::Var& tokens, std::size_t block) {
    const Tensor& x = tokens.value();
    if (x.rank() != 2 || x.cols() != adapter.dim) {
        throw DimensionError(fmt::format("apply_dual_adapter: tokens {} vs adapter dim {}", shape_str(x.shape()), adapter.dim));
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(adapter.dim));
    const ag::Var q = ag::matmul(tokens, adapter.w_query);
    const ag::Var k = ag::matmul(tokens, adapter.w_key);
    const ag::Var v = ag::matmul(tokens, adapter.w_value);
    const ag::Var mixed = ag::block_attention(q, k, v, block == 0 ? x.rows() : block, inv_sqrt_d);
    const ag::Var attended = ag::add(tokens, ag::matmul(mixed, adapter.w_out));

    const ag::Var hidden = ag::gelu(ag::add_row_bias(ag::matmul(attended, adapter.w_down), adapter.b_down));
    const ag::Var mlp = ag::add_row_bias(ag::matmul(hidden, adapter.w_up), adapter.b_up);
    return ag::add(attended, mlp);
}

Tensor apply_dual_adapter(const DualAdapter& adapter, const Tensor& tokens) {
    ag::NoGradGuard guard;
    return apply_dual_adapter(adapter, ag::constant(tokens)).value();
}

ag::Var pool_video_embedding(const ag::Var& fused, const ag::Var& projection) {
    const Tensor& x = fused.value();
    const std::size_t c = x.cols();
    if (projection.value().rank() != 2 || projection.value().dim(0) != c) {
        throw DimensionError(fmt::format("pool_video_embedding: features {} vs projection {}", shape_str(x.shape()),
                                         shape_str(projection.shape())));
    }
    const ag::Var rows = ag::reshape(fused, {x.rows(), c});
    return ag::matmul(ag::mean_row_groups(rows, x.rows()), projection);
}

Tensor pool_video_embedding(const Tensor& fused, const Tensor& projection) {
    ag::NoGradGuard guard;
    const Tensor row = pool_video_embedding(ag::constant(fused), ag::constant(projection)).value();
    return row.reshaped({row.size()});
}

}  // namespace zsar
