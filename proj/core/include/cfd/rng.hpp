#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace cfd {

// Deterministic random stream. Only the raw mt19937_64 output is consumed;
// every transform (uniform, normal, shuffle) is hand-rolled so that runs
// are reproducible across standard libraries, not just across runs.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // [0, 1) with 53 bits of entropy.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  // Box-Muller, one draw per call (second value cached).
  double normal(double mean, double stddev) {
    if (has_cached_) {
      has_cached_ = false;
      return mean + stddev * cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return mean + stddev * r * std::cos(a);
  }

  // Normal(0, stddev) with samples beyond two deviations redrawn.
  double truncated_normal(double stddev) {
    for (;;) {
      const double x = normal(0.0, stddev);
      if (std::fabs(x) <= 2.0 * stddev) return x;
    }
  }

  // [0, n), n >= 1.
  int64_t below(int64_t n) {
    return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (int64_t i = static_cast<int64_t>(items.size()) - 1; i > 0; --i) {
      std::swap(items[static_cast<size_t>(i)], items[static_cast<size_t>(below(i + 1))]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace cfd
