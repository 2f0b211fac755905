#pragma once

#include <cstdint>

#include "zsar/tensor.hpp"

namespace zsar {

// Counter-based generator: the n-th draw is a pure function of
// (seed, stream_id, n), so streams can be split and consumed in any order
// without affecting each other. Normals use Box-Muller on our own uniforms so
// sequences do not depend on the standard library's distributions.
class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    std::uint64_t next_u64();
    // Uniform in [0, 1).
    double uniform();
    // Uniform in the open interval (0, 1).
    double uniform_open();
    double normal(double mean = 0.0, double stddev = 1.0);
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    Tensor normal_tensor(Shape shape, double stddev = 1.0);

    // Independent child stream; deterministic in (seed, stream_id, child).
    RngStream split(std::uint64_t child) const;

  private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace zsar
