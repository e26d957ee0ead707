#ifndef SMARTPASTE_RNG_HPP
#define SMARTPASTE_RNG_HPP

#include <cmath>
#include <cstdint>

#include "tensor.hpp"

namespace smartpaste {

/// Splittable deterministic RNG. A stream is fully determined by
/// (global_seed, stream_id); distinct stream ids are decorrelated by mixing
/// both words through splitmix64 before use. Reproducibility is guaranteed
/// within this implementation, not across implementations.
class Rng {
 public:
  Rng(uint64_t global_seed, uint64_t stream_id) {
    state_ = mix(mix(global_seed ^ 0x9e3779b97f4a7c15ull) ^ stream_id);
    if (state_ == 0) state_ = 0x6a09e667f3bcc909ull;
  }

  /// Pack a small tuple of tags into a stream id (purpose, iteration, index).
  static uint64_t stream(uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    return mix(mix(mix(a) ^ b) ^ c);
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  /// Uniform in [0,1) with 53-bit resolution.
  double next_double() {
    return double(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [a,b); degenerate a==b returns a.
  double uniform(double a, double b) {
    return a + (b - a) * next_double();
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    if (hi <= lo) return lo;
    return lo + int(next_u64() % uint64_t(hi - lo + 1));
  }

  /// Standard normal via Box-Muller; draws are consumed in pairs.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t state_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Single-channel image of i.i.d. standard normal values, shape (h, w, 1).
inline Tensor draw_gaussian_image(Rng& rng, int h, int w) {
  require(h >= 1 && w >= 1, "gaussian image dims must be >= 1");
  Tensor out({h, w, 1});
  for (double& v : out.data) v = rng.gaussian();
  return out;
}

}  // namespace smartpaste

#endif  // SMARTPASTE_RNG_HPP
