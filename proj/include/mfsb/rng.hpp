#pragma once

#include <cmath>
#include <cstdint>

namespace mfsb {

// Deterministic splittable RNG (splitmix64 core).
//
// Substreams are derived from the construction seed, not from the draw
// position, so per-(batch, sample) streams stay stable under any evaluation
// order. Gaussians come from a hand-rolled Box-Muller so draws are identical
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : root_(seed), state_(seed) {}

  static std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the spare of each pair is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double two_pi = 6.283185307179586476925286766559;
    double u1 = 1.0 - uniform();  // (0, 1]: keeps log() finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = two_pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Independent stream keyed by (construction seed, tag). Draws from the
  // parent do not affect the child and vice versa.
  Rng substream(std::uint64_t tag) const {
    return Rng(mix64(root_ ^ mix64(tag ^ 0xA5A5A5A5DEADBEEFULL)));
  }

  std::uint64_t root() const { return root_; }

 private:
  std::uint64_t root_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mfsb
