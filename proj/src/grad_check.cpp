#include "gdgt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace gdgt {

GradCheckReport grad_check(const ScalarFn& fn, std::span<Tensor> inputs, double tol,
                           const GradCheckOptions& options) {
  for (auto& t : inputs) t.zero_grad();
  Tensor loss = fn();
  backward(loss);

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& t = inputs[k];
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                       : std::vector<double>(t.numel(), 0.0);
    std::vector<std::size_t> picks(t.numel());
    std::iota(picks.begin(), picks.end(), 0);
    if (options.max_elements_per_input > 0 && picks.size() > options.max_elements_per_input) {
      std::shuffle(picks.begin(), picks.end(), rng);
      picks.resize(options.max_elements_per_input);
      std::sort(picks.begin(), picks.end());
    }
    auto values = t.mutable_data();
    for (auto i : picks) {
      const double saved = values[i];
      auto at = [&](double offset) {
        values[i] = saved + offset;
        return fn().item();
      };
      auto central = [&](double h) { return (at(h) - at(-h)) / (2.0 * h); };
      double h = options.step;
      double numeric = central(h);
      for (std::size_t halving = 0; halving < options.max_halvings; ++halving) {
        h *= 0.5;
        const double finer = central(h);
        const double agreement = std::abs(finer - numeric) / std::max({std::abs(finer), options.floor});
        const double extrapolated = (4.0 * finer - numeric) / 3.0;
        numeric = finer;
        if (agreement < 0.25 * tol) {
          numeric = extrapolated;
          break;
        }
      }
      values[i] = saved;
      const double abs_err = std::abs(numeric - analytic[i]);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), options.floor});
      const double rel = abs_err / denom;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error || report.checked == 0) {
        if (rel >= report.max_rel_error) report.worst = "input[" + std::to_string(k) + "][" + std::to_string(i) + "]";
        report.max_rel_error = std::max(report.max_rel_error, rel);
      }
      ++report.checked;
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace gdgt
