#include "zsar/rng.hpp"

#include <cmath>
#include <numbers>

namespace zsar {

namespace {

// SplitMix64 finalizer; a bijection on 64-bit words with full avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), key_(mix64(mix64(seed + kGolden) ^ (stream_id * 0xD6E8FEB86659FD93ULL))) {}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t n = counter_++;
    return mix64(mix64(key_ + n * kGolden) ^ key_);
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform_open() { return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52; }

double RngStream::normal(double mean, double stddev) {
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

Tensor RngStream::normal_tensor(Shape shape, double stddev) {
    Tensor t(std::move(shape));
    for (auto& x : t.data()) x = normal(0.0, stddev);
    return t;
}

RngStream RngStream::split(std::uint64_t child) const {
    return RngStream(mix64(key_ ^ 0x5851F42D4C957F2DULL), mix64(child + kGolden));
}

}  // namespace zsar
