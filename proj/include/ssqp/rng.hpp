#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ssqp/common.hpp"

namespace ssqp {

/// Seeded random stream with platform-stable draws. The standard
/// distributions are implementation-defined, so the transformations are done
/// by hand; two builds with the same seed produce the same sequence.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : eng_(seed) {}

  /// Derives an independent stream; mixing keeps nearby seeds uncorrelated.
  static RngStream derived(std::uint64_t seed, std::uint64_t stream_id) {
    return RngStream(mix(seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1)));
  }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (pairwise, cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    cached_ = radius * std::sin(angle);
    have_cached_ = true;
    return radius * std::cos(angle);
  }

  /// Student-t with df degrees of freedom (unscaled, variance df/(df-2)).
  double student_t(int df) {
    require(df >= 1, ErrorCode::InvalidArgument, "student_t: df must be >= 1");
    double chisq = 0.0;
    for (int i = 0; i < df; ++i) {
      const double z = normal();
      chisq += z * z;
    }
    return normal() / std::sqrt(chisq / static_cast<double>(df));
  }

  /// Poisson draw; inversion by multiplication for small means, normal
  /// rounding beyond (means in the model zoo stay well below the switch).
  long poisson(double mean) {
    require(mean >= 0.0 && std::isfinite(mean), ErrorCode::InvalidArgument,
            "poisson: mean must be finite and nonnegative");
    if (mean > 64.0) {
      const double draw = mean + std::sqrt(mean) * normal();
      return draw < 0.0 ? 0 : static_cast<long>(std::llround(draw));
    }
    const double limit = std::exp(-mean);
    long count = -1;
    double prod = 1.0;
    do {
      prod *= uniform();
      ++count;
    } while (prod > limit);
    return count;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 eng_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace ssqp
