#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "gdgt/tensor.hpp"

namespace gdgt {

/// Seeded generator with platform-independent uniform and normal draws
/// (std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }
  std::uint64_t next() { return engine_(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do u1 = uniform(); while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// He-normal initialization: N(0, 2 / fan_in).
inline Tensor kaiming_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& x : v) x = sd * rng.normal();
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

/// Uniform in [-lo, lo] with lo = 1/sqrt(fan_in).
inline Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  const double lim = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& x : v) x = rng.uniform(-lim, lim);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

inline Tensor random_normal(Shape shape, Rng& rng, double sd = 1.0, bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = sd * rng.normal();
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

}  // namespace gdgt
