#pragma once

// Portable random streams. Everything is derived from std::mt19937_64, whose
// output sequence is fixed by the C++ standard; the distributions below are
// implemented here instead of using <random>'s, whose algorithms are
// implementation-defined. Another implementation reproduces a stream with:
//
//   engine      MT19937-64 seeded with the 64-bit seed
//   uniform()   (next() >> 11) * 2^-53                      in [0, 1)
//   below(n)    rejection: draw next() until x >= (2^64 mod n); return x mod n
//   normal()    Box-Muller, one draw per pair of uniforms:
//               sqrt(-2 ln(1 - u1)) * cos(2 pi u2)
//   shuffle     Fisher-Yates from the back: for i = n-1 .. 1, swap(i, below(i+1))

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace tmc {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = -n % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t x = next();
      if (x >= limit) return x % n;
    }
  }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tmc
