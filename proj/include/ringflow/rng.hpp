#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ringflow {

// splitmix64 finalizer; decorrelates nearby seeds.
std::uint64_t mix64(std::uint64_t x);

// Derives a named sub-stream seed from a master seed. Used to give each
// pipeline stage (collect / gen / policy / eval) its own independent stream.
std::uint64_t stream_seed(std::uint64_t master, std::string_view name);

// Derives an indexed sub-stream seed (per run, per episode, per rollout).
std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index);

// Deterministic random stream. All distribution mappings are implemented
// here so that results depend only on the mt19937_64 engine output, which
// the standard pins down bit-exactly.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  // Child stream derived from (this stream's seed, index); independent of
  // how much of the parent stream has been consumed.
  RngStream spawn(std::uint64_t index) const {
    return RngStream(stream_seed(seed_, index));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  // Standard normal via Box-Muller. Uses two uniforms per draw; no caching
  // so the stream position is a simple function of the draw count.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace ringflow
