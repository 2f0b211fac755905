#pragma once

#include <cstddef>
#include <vector>

#include "zsar/autograd.hpp"
#include "zsar/rng.hpp"
#include "zsar/tensor.hpp"

namespace zsar {

// Frozen per-video feature block of shape T x H x W x C.
class FrameFeatures {
  public:
    // Throws DimensionError unless x is rank 4 with an even T >= 4, and
    // NumericDomainError on non-finite entries.
    explicit FrameFeatures(Tensor x);

    const Tensor& tensor() const { return x_; }
    std::size_t frames() const { return x_.dim(0); }
    std::size_t height() const { return x_.dim(1); }
    std::size_t width() const { return x_.dim(2); }
    std::size_t channels() const { return x_.dim(3); }

  private:
    Tensor x_;
};

struct VideoGeometry {
    std::size_t frames = 8;
    std::size_t height = 2;
    std::size_t width = 2;
};

struct SyntheticVideoSpec {
    std::size_t class_id = 0;                // row of the prototype table
    std::vector<std::size_t> motion_frames;  // 1-based frame positions
    double motion_amplitude = 0.0;
    double noise_sigma = 0.0;
};

// Every frame is the class prototype plus i.i.d. Gaussian noise; each motion
// frame additionally receives one random displacement vector of norm
// motion_amplitude shared by all of its spatial positions. Noise and
// displacement come from separate child streams of `rng`, so changing the
// amplitude never changes the noise draw.
FrameFeatures generate_video(const SyntheticVideoSpec& spec, const Tensor& class_prototypes,
                             const VideoGeometry& geometry, const RngStream& rng);

// Residual single-head self-attention followed by a residual bottleneck MLP,
// shared between the video token stream and the prompt token stream.
struct DualAdapter {
    std::size_t dim = 0;
    std::size_t bottleneck = 0;
    ag::Var w_query, w_key, w_value, w_out;  // dim x dim
    ag::Var w_down, b_down;                  // dim x bottleneck, bottleneck
    ag::Var w_up, b_up;                      // bottleneck x dim, dim

    // All weights zero: the exact identity map.
    static DualAdapter zeros(std::size_t dim, std::size_t bottleneck);
    // Random query/key/value/down projections, zero output and up
    // projections, so the adapter starts as the identity but still trains.
    static DualAdapter identity_init(std::size_t dim, std::size_t bottleneck, RngStream& rng);

    std::vector<ag::Var> parameters() const;
};

// tokens [N x D] -> [N x D]. Throws DimensionError when D != adapter.dim.
// With block > 0 the tokens are independent sequences of `block` rows each
// (one per video) and attention stays inside each sequence.
ag::Var apply_dual_adapter(const DualAdapter& adapter, const ag::Var& tokens, std::size_t block = 0);
Tensor apply_dual_adapter(const DualAdapter& adapter, const Tensor& tokens);

// Mean over every (t, h, w) position followed by projection [C x D]; the
// differentiable form returns a [1 x D] row.
ag::Var pool_video_embedding(const ag::Var& fused, const ag::Var& projection);
Tensor pool_video_embedding(const Tensor& fused, const Tensor& projection);

}  // namespace zsar
