#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gdgt/tensor.hpp"

namespace gdgt {

struct GradCheckOptions {
  double step = 1e-5;
  /// Errors are measured relative to max(|analytic|, |numeric|, floor), so
  /// gradients far below the finite-difference noise are compared in
  /// absolute terms.
  double floor = 1e-6;
  /// 0 checks every element; otherwise a seeded sample of this many per input.
  std::size_t max_elements_per_input = 0;
  std::uint64_t seed = 0;
  /// Halve the step (at most this many times) until successive central
  /// differences agree, then Richardson-extrapolate the last pair. This steps
  /// around nearby relu kinks and cancels the O(h^2) curvature error.
  std::size_t max_halvings = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  /// "input[i][j]" location of the worst element.
  std::string worst;
  bool passed = false;
};

using ScalarFn = std::function<Tensor()>;

/// Compares reverse-mode gradients of `fn` with respect to `inputs` against
/// central differences. `fn` must read the inputs' current values each call.
/// Existing gradients on the inputs are discarded.
GradCheckReport grad_check(const ScalarFn& fn, std::span<Tensor> inputs, double tol,
                           const GradCheckOptions& options = {});

}  // namespace gdgt
