#include "zsar/msm.hpp"

#include <fmt/format.h>

#include "zsar/errors.hpp"

namespace zsar::msm {

namespace {

OffsetHead::Mlp make_mlp(std::size_t hidden, RngStream* rng) {
    OffsetHead::Mlp mlp;
    mlp.w1 = ag::parameter(rng ? rng->normal_tensor({1, hidden}, 1.0) : Tensor({1, hidden}));
    mlp.b1 = ag::parameter(rng ? rng->normal_tensor({hidden}, 0.5) : Tensor({hidden}));
    mlp.w2 = ag::parameter(Tensor({hidden, 1}));
    mlp.b2 = ag::parameter(Tensor({1}));
    return mlp;
}

ag::Var run_mlp(const ag::Var& m_col, const OffsetHead::Mlp& mlp, double max_offset) {
    const ag::Var h = ag::tanh(ag::add_row_bias(ag::matmul(m_col, mlp.w1), mlp.b1));
    const ag::Var out = ag::add_row_bias(ag::matmul(h, mlp.w2), mlp.b2);
    return ag::scale(ag::tanh(out), max_offset);
}

std::vector<std::size_t> to_offsets(const std::vector<double>& anchors) {
    std::vector<std::size_t> idx;
    idx.reserve(anchors.size());
    for (double a : anchors) idx.push_back(static_cast<std::size_t>(a) - 1);
    return idx;
}

void require_clip(const Shape& shape) {
    if (shape.size() != 4 || shape[0] < 2 || shape[0] % 2 != 0) {
        throw DimensionError("motion separation expects T x H x W x C with even T, got " + shape_str(shape));
    }
}

ag::Var sample_at(const ag::Var& flat, const ag::Var& positions, const Shape& clip) {
    const ag::Var rows = ag::interpolate_rows(flat, positions);
    return ag::reshape(rows, {clip[0] / 2, clip[1], clip[2], clip[3]});
}

ag::Var anchored_positions(const ag::Var& delta, const std::vector<double>& anchors, std::size_t frames) {
    if (delta.value().size() != frames) {
        throw DimensionError(fmt::format("offsets must cover all {} frames, got {}", frames, shape_str(delta.shape())));
    }
    const auto idx = to_offsets(anchors);
    const ag::Var at_anchor = ag::gather_elements(delta, idx);
    return ag::clamp(ag::add(ag::constant(Tensor::vector(anchors)), at_anchor), 1.0, static_cast<double>(frames));
}

}  // namespace

OffsetHead OffsetHead::init(std::size_t hidden, double max_offset, RngStream& rng) {
    if (!(max_offset > 0.0)) throw ParameterError("OffsetHead: max offset must be positive");
    OffsetHead head;
    head.global = make_mlp(hidden, &rng);
    head.dynamic = make_mlp(hidden, &rng);
    head.max_offset = max_offset;
    return head;
}

OffsetHead OffsetHead::zeros(std::size_t hidden, double max_offset) {
    if (!(max_offset > 0.0)) throw ParameterError("OffsetHead: max offset must be positive");
    OffsetHead head;
    head.global = make_mlp(hidden, nullptr);
    head.dynamic = make_mlp(hidden, nullptr);
    head.max_offset = max_offset;
    return head;
}

std::vector<ag::Var> OffsetHead::parameters() const {
    return {global.w1, global.b1, global.w2, global.b2, dynamic.w1, dynamic.b1, dynamic.w2, dynamic.b2};
}

std::vector<double> global_anchors(std::size_t frames) {
    std::vector<double> a;
    for (std::size_t i = 1; i <= frames / 2; ++i) a.push_back(static_cast<double>(2 * i - 1));
    return a;
}

std::vector<double> dynamic_anchors(std::size_t frames) {
    std::vector<double> a;
    for (std::size_t i = 1; i <= frames / 2; ++i) a.push_back(static_cast<double>(2 * i));
    return a;
}

// ------------------------------------------------------------- value level

Tensor frame_embed(const FrameFeatures& x) {
    ag::NoGradGuard guard;
    return frame_embed(ag::constant(x.tensor())).value();
}

SaliencyProfile motion_stats(const Tensor& e) {
    if (e.rank() != 2) throw DimensionError("motion_stats: expected T x C, got " + shape_str(e.shape()));
    if (e.rows() < 2) throw DegenerateInputError(fmt::format("motion_stats: need at least 2 frames, got {}", e.rows()));
    ag::NoGradGuard guard;
    const ag::Var ev = ag::constant(e);
    SaliencyProfile p;
    p.e = e;
    p.mu = column_mean(e);
    p.v = ag::deviation_from_mean(ev).value();
    p.c = ag::central_difference(ev).value();
    return p;
}

Tensor saliency(const Tensor& v, const Tensor& c, double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) throw ParameterError("saliency: alpha and beta must be non-negative");
    require_same_shape(v, c, "saliency");
    ag::NoGradGuard guard;
    const ag::Var vn = ag::minmax_normalize(ag::constant(v));
    const ag::Var cn = ag::minmax_normalize(ag::constant(c));
    return ag::add(ag::scale(vn, alpha), ag::scale(cn, beta)).value();
}

SaliencyProfile saliency_profile(const FrameFeatures& x, SaliencyWeights weights) {
    SaliencyProfile p = motion_stats(frame_embed(x));
    ag::NoGradGuard guard;
    p.v_norm = ag::minmax_normalize(ag::constant(p.v)).value();
    p.c_norm = ag::minmax_normalize(ag::constant(p.c)).value();
    p.m = saliency(p.v, p.c, weights.alpha, weights.beta);
    return p;
}

std::pair<Tensor, Tensor> compute_offsets(const Tensor& m, const OffsetHead& head) {
    ag::NoGradGuard guard;
    auto [g, d] = compute_offsets(ag::constant(m), head);
    return {g.value(), d.value()};
}

StreamPair sample_streams(const FrameFeatures& x, const Tensor& delta_g, const Tensor& delta_d) {
    ag::NoGradGuard guard;
    const StreamVars s = sample_streams(ag::constant(x.tensor()), ag::constant(delta_g), ag::constant(delta_d));
    return {s.x_g.value(), s.x_d.value(), s.i_g.value(), s.i_d.value()};
}

// ------------------------------------------------------------ differentiable

ag::Var frame_embed(const ag::Var& x) {
    const Shape& s = x.shape();
    if (s.size() != 4) throw DimensionError("frame_embed: expected T x H x W x C, got " + shape_str(s));
    const ag::Var rows = ag::reshape(x, {s[0] * s[1] * s[2], s[3]});
    return ag::mean_row_groups(rows, s[1] * s[2]);
}

ag::Var saliency(const ag::Var& e, SaliencyWeights weights) {
    if (weights.alpha < 0.0 || weights.beta < 0.0) throw ParameterError("saliency: alpha and beta must be non-negative");
    const ag::Var vn = ag::minmax_normalize(ag::deviation_from_mean(e));
    const ag::Var cn = ag::minmax_normalize(ag::central_difference(e));
    return ag::add(ag::scale(vn, weights.alpha), ag::scale(cn, weights.beta));
}

std::pair<ag::Var, ag::Var> compute_offsets(const ag::Var& m, const OffsetHead& head) {
    const std::size_t t = m.value().size();
    const ag::Var col = ag::reshape(m, {t, 1});
    return {ag::reshape(run_mlp(col, head.global, head.max_offset), {t}),
            ag::reshape(run_mlp(col, head.dynamic, head.max_offset), {t})};
}

StreamVars sample_streams(const ag::Var& x, const ag::Var& delta_g, const ag::Var& delta_d) {
    const Shape clip = x.shape();
    require_clip(clip);
    const std::size_t t = clip[0];
    const ag::Var flat = ag::reshape(x, {t, clip[1] * clip[2] * clip[3]});
    StreamVars s;
    s.i_g = anchored_positions(delta_g, global_anchors(t), t);
    s.i_d = anchored_positions(delta_d, dynamic_anchors(t), t);
    s.x_g = sample_at(flat, s.i_g, clip);
    s.x_d = sample_at(flat, s.i_d, clip);
    return s;
}

StreamVars fixed_split(const ag::Var& x) {
    const Shape clip = x.shape();
    require_clip(clip);
    const std::size_t t = clip[0];
    const ag::Var flat = ag::reshape(x, {t, clip[1] * clip[2] * clip[3]});
    StreamVars s;
    s.i_g = ag::constant(Tensor::vector(global_anchors(t)));
    s.i_d = ag::constant(Tensor::vector(dynamic_anchors(t)));
    s.x_g = sample_at(flat, s.i_g, clip);
    s.x_d = sample_at(flat, s.i_d, clip);
    return s;
}

SeparationTrace separate(const ag::Var& x, const OffsetHead& head, SaliencyWeights weights) {
    SeparationTrace trace;
    trace.m = saliency(frame_embed(x), weights);
    std::tie(trace.delta_g, trace.delta_d) = compute_offsets(trace.m, head);
    trace.streams = sample_streams(x, trace.delta_g, trace.delta_d);
    return trace;
}

}  // namespace zsar::msm
