#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <string_view>

namespace mudlab {

// Seeded random source used by every stochastic routine.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The distributions are implemented here rather than taken from
// <random> because the standard leaves their algorithms to the library, and
// results must be bit-identical across toolchains.
class Rng {
 public:
  static constexpr std::string_view kName = "mt19937_64+boxmuller/v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer on [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  // Fair coin as +1 / -1.
  double sign() { return (engine_() >> 63) ? 1.0 : -1.0; }

  double standard_normal();

  // Circularly-symmetric complex Gaussian CN(0, variance).
  std::complex<double> complex_normal(double variance);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// SplitMix64 finalizer; used to derive child seeds.
std::uint64_t mix64(std::uint64_t x);

// Seed for one Monte Carlo trial. Depends only on its arguments so trials can
// run in any order or on any thread.
std::uint64_t child_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

}  // namespace mudlab
