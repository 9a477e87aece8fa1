#pragma once

#include <cstdint>
#include <random>

namespace schoolrun {

// Platform-stable random stream. std::mt19937_64 is fully specified by the
// standard, but the std:: distributions are not, so the transforms are done
// here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for entity `stream` under a master seed (SplitMix64
  // mixing), so generation order never changes individual draws.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  std::uint64_t index(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  int poisson(double lambda);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace schoolrun
