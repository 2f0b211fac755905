#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "zsar/autograd.hpp"
#include "zsar/backbone.hpp"
#include "zsar/rng.hpp"
#include "zsar/tensor.hpp"

// Motion separation: per-frame motion statistics, saliency, bounded learned
// temporal offsets and the fractional-index split of a clip into a global
// (odd-anchored) and a dynamic (even-anchored) stream.
//
// Frame positions are 1-based throughout, matching the continuous sampling
// indices, which live in [1, T].
namespace zsar::msm {

struct SaliencyProfile {
    Tensor e;       // T x C per-frame embeddings
    Tensor mu;      // C temporal mean
    Tensor v;       // T squared deviation from the mean
    Tensor c;       // T central difference
    Tensor v_norm;  // T, min-max normalized within the clip
    Tensor c_norm;  // T
    Tensor m;       // T saliency alpha * v_norm + beta * c_norm
};

struct SaliencyWeights {
    double alpha = 0.5;
    double beta = 0.5;
};

// Two scalar MLPs 1 -> hidden -> 1 (tanh hidden activation), one per stream,
// followed by delta * tanh(.).
struct OffsetHead {
    struct Mlp {
        ag::Var w1, b1, w2, b2;  // 1 x h, h, h x 1, 1
    };
    Mlp global;
    Mlp dynamic;
    double max_offset = 1.5;

    // Random hidden layer, zero output layer: offsets start at exactly 0.
    static OffsetHead init(std::size_t hidden, double max_offset, RngStream& rng);
    static OffsetHead zeros(std::size_t hidden, double max_offset);
    std::vector<ag::Var> parameters() const;
};

// Global anchors 1, 3, 5, ... and dynamic anchors 2, 4, 6, ... (T/2 each).
std::vector<double> global_anchors(std::size_t frames);
std::vector<double> dynamic_anchors(std::size_t frames);

// ---- value-level operations ----

// e_t = mean over H x W of X[t].
Tensor frame_embed(const FrameFeatures& x);
// Fills e, mu, v, c. Throws DegenerateInputError for fewer than 2 frames.
SaliencyProfile motion_stats(const Tensor& e);
// Min-max normalizes v and c within the clip (a constant statistic maps to
// all zeros) and combines them. Throws ParameterError on negative weights.
Tensor saliency(const Tensor& v, const Tensor& c, double alpha, double beta);
// Full profile including normalized statistics and m.
SaliencyProfile saliency_profile(const FrameFeatures& x, SaliencyWeights weights);
std::pair<Tensor, Tensor> compute_offsets(const Tensor& m, const OffsetHead& head);

struct StreamPair {
    Tensor x_g, x_d;  // T/2 x H x W x C
    Tensor i_g, i_d;  // T/2 continuous positions in [1, T]
};
// Offsets are given for every frame and read at the anchor positions.
StreamPair sample_streams(const FrameFeatures& x, const Tensor& delta_g, const Tensor& delta_d);

// ---- differentiable operations ----

// X [T x H x W x C] -> [T x C]
ag::Var frame_embed(const ag::Var& x);
// e [T x C] -> m [T]
ag::Var saliency(const ag::Var& e, SaliencyWeights weights);
// m [T] -> per-frame offsets [T], one per stream.
std::pair<ag::Var, ag::Var> compute_offsets(const ag::Var& m, const OffsetHead& head);

struct StreamVars {
    ag::Var x_g, x_d;
    ag::Var i_g, i_d;
};
// Clamped anchor + offset positions, then linear interpolation of X along time.
StreamVars sample_streams(const ag::Var& x, const ag::Var& delta_g, const ag::Var& delta_d);
// The fixed odd/even split: anchors sampled with zero offsets.
StreamVars fixed_split(const ag::Var& x);

struct SeparationTrace {
    ag::Var m, delta_g, delta_d;
    StreamVars streams;
};
// saliency -> offsets -> sampling on one clip.
SeparationTrace separate(const ag::Var& x, const OffsetHead& head, SaliencyWeights weights);

}  // namespace zsar::msm
