#include "schoolrun/rng.hpp"

#include <cmath>
#include <numbers>

namespace schoolrun {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

double Rng::normal() {
  // Box-Muller; u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::index(std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return r % n;
}

int Rng::poisson(double lambda) {
  if (lambda <= 0.0) return 0;
  if (lambda > 500.0) {
    const int k = static_cast<int>(std::lround(normal(lambda, std::sqrt(lambda))));
    return k < 0 ? 0 : k;
  }
  // Knuth's multiplication method, split into chunks to avoid exp underflow.
  int k = 0;
  double remaining = lambda;
  while (remaining > 0.0) {
    const double step = remaining > 200.0 ? 200.0 : remaining;
    remaining -= step;
    const double limit = std::exp(-step);
    double prod = uniform();
    while (prod > limit) {
      ++k;
      prod *= uniform();
    }
  }
  return k;
}

}  // namespace schoolrun
