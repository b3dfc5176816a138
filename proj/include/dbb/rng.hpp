#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dbb {

// splitmix64 finalizer; used to derive independent child streams from a
// (seed, stream id) pair so results do not depend on thread scheduling.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t seed_mix(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed ^ mix64(stream + 0x6a09e667f3bcc909ULL));
}

inline std::uint64_t seed_mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return seed_mix(seed_mix(seed, a), b);
}

// Uniform in [0, 1) from the top 53 bits; bit-reproducible across platforms.
inline double u01(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Standard normal stream via Box-Muller on hand-mapped uniforms. Output is a
// deterministic function of the seed alone (no reliance on the
// implementation-defined std::normal_distribution algorithm).
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : eng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = u01(eng_);
    const double u2 = u01(eng_);
    const double radius = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), u1 < 1
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dbb
