#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gdgt {

/// Outcome of one property suite. `name` is a stable identifier.
struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Haar round trip on random integer 8x8 maps must be bit-exact, and the
/// band energy must be four times the input energy.
SuiteResult verify_dwt_reconstruction(std::size_t trials = 1000, std::uint64_t seed = 11);

/// Analytic vs central-difference gradients for conv2d, attention, the GLFF
/// and DGD blocks, a two-stage model and the loss (relative error < 1e-4).
SuiteResult verify_grad_check(std::uint64_t seed = 12);

/// compute_metrics against pixel-scanning counts on random mask pairs, plus
/// the two-category example with counts [[3,1],[1,3]].
SuiteResult verify_metrics_oracle(std::size_t trials = 200, std::uint64_t seed = 13);

/// Tile footprints cover random image sizes in [800, 3000]^2 with stride
/// 600; a 1400 x 1400 scene yields four tiles at {0, 600}^2.
SuiteResult verify_tiling_coverage(std::size_t trials = 50, std::uint64_t seed = 14);

std::vector<SuiteResult> run_verify_suites();

/// "PASS <name> (<seconds> s): <detail>" or FAIL.
std::string format_suite_line(const SuiteResult& result);

}  // namespace gdgt
