#include "fabreg/rng.hpp"

#include <random>

#include "fabreg/error.hpp"

namespace fabreg {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(mix64(seed) ^ mix64(stream * kGolden + 0x632BE59BD9B4E019ULL))) {}

Rng::result_type Rng::operator()() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() {
  // 53 random bits, centred in their cell so 0 and 1 are excluded.
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double sample_normal(Rng& rng, double mean, double sd) {
  if (!(sd > 0.0)) throw DomainError("sample_normal: sd must be positive");
  return mean + sd * normal_quantile(rng.uniform());
}

double sample_chi_square(Rng& rng, DegreesOfFreedom q) {
  std::gamma_distribution<double> gamma(0.5 * q.as_double(), 2.0);
  return gamma(rng);
}

}  // namespace fabreg
