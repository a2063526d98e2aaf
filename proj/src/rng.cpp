#include "drs/rng.hpp"

#include <cmath>
#include <numbers>

namespace drs {

std::uint64_t Rng::mix(std::uint64_t z) {
  // splitmix64 finalizer
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng Rng::split(std::uint64_t stream) const {
  Rng child;
  child.key_ = mix(key_ ^ mix(stream + 0x3c6ef372fe94f82bULL));
  return child;
}

std::uint64_t Rng::next() {
  const std::uint64_t x = mix(key_ + 0x9e3779b97f4a7c15ULL * counter_);
  ++counter_;
  return mix(x ^ key_);
}

double Rng::uniform() {
  // 53 random bits, shifted off zero
  return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return x % n;
}

}  // namespace drs
