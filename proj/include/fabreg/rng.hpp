#pragma once

#include <cstdint>
#include <limits>

#include "fabreg/dist.hpp"

namespace fabreg {

/// Counter-based 64-bit generator (SplitMix64 output function over a keyed
/// counter). Satisfies UniformRandomBitGenerator. `substream(i)` derives an
/// independent child stream, so parallel work can be split by index without
/// sharing state.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()();

  Rng substream(std::uint64_t index) const { return Rng(key_, index); }

  /// Uniform on the open interval (0, 1).
  double uniform();

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

double sample_normal(Rng& rng, double mean, double sd);
double sample_chi_square(Rng& rng, DegreesOfFreedom q);

}  // namespace fabreg
