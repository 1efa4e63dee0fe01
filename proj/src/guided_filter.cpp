#include "gdgt/guided_filter.hpp"

#include <cmath>
#include <stdexcept>

namespace gdgt {

namespace {

// Inverse of softplus for v > 0: log(exp(v) - 1), stable for large v.
double inverse_softplus(double v) { return v > 30.0 ? v + std::log1p(-std::exp(-v)) : std::log(std::expm1(v)); }

}  // namespace

DgdParams DgdParams::create(std::size_t channels, Rng& rng, const DgdOptions& options) {
  if (channels == 0) throw ShapeError("DgdParams: zero channels");
  if (options.mean_kernel % 2 == 0) throw ShapeError("DgdParams: mean filter kernel must be odd");
  DgdParams p;
  p.options = options;
  p.channels = channels;
  const std::size_t in = options.guide == GuideSource::wavelet ? 4 * channels : channels;
  p.guide_weight = kaiming_normal({channels, in, 1, 1}, in, rng);
  p.guide_bias = Tensor::zeros({channels}, true);
  p.mean_weight = Tensor::zeros({channels, 1, options.mean_kernel, options.mean_kernel}, true);
  p.reset_mean_filter();
  p.epsilon_raw = Tensor::zeros({channels}, true);
  p.set_epsilon(options.epsilon_init);
  p.alpha = Tensor::scalar(options.alpha_init, true);
  p.beta = Tensor::scalar(options.beta_init, true);
  return p;
}

Tensor DgdParams::epsilon() const { return softplus(epsilon_raw); }

void DgdParams::set_epsilon(double value) {
  if (!(value > 0.0)) throw std::invalid_argument("epsilon must be positive");
  for (auto& v : epsilon_raw.mutable_data()) v = inverse_softplus(value);
}

void DgdParams::reset_mean_filter() {
  // The last tap absorbs the rounding of 1/k^2 so the taps, accumulated in
  // kernel order, sum to exactly 1 and a power-of-two constant map passes
  // through unchanged.
  const std::size_t taps = options.mean_kernel * options.mean_kernel;
  const double w = 1.0 / static_cast<double>(taps);
  auto v = mean_weight.mutable_data();
  for (std::size_t c = 0; c < channels; ++c) {
    double partial = 0.0;
    for (std::size_t i = 0; i + 1 < taps; ++i) {
      v[c * taps + i] = w;
      partial += w;
    }
    v[c * taps + taps - 1] = 1.0 - partial;
  }
}

void DgdParams::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "guide_conv.weight", guide_weight});
  out.push_back({prefix + "guide_conv.bias", guide_bias});
  out.push_back({prefix + "mean_filter.weight", mean_weight});
  out.push_back({prefix + "epsilon_raw", epsilon_raw});
  out.push_back({prefix + "alpha", alpha});
  out.push_back({prefix + "beta", beta});
}

Tensor build_guide(const WaveletBands& bands, const DgdParams& params) {
  if (params.options.guide != GuideSource::wavelet) throw ShapeError("build_guide: params expect a strided-conv guide");
  const std::size_t c = bands.ll.dim(1);
  if (4 * c != params.guide_weight.dim(1)) {
    throw ShapeError("build_guide: bands carry " + std::to_string(4 * c) + " channels but guide conv expects " +
                     std::to_string(params.guide_weight.dim(1)));
  }
  return conv2d(concat({bands.ll, bands.lh, bands.hl, bands.hh}, 1), params.guide_weight, params.guide_bias);
}

Tensor build_no_dwt_guide(const Tensor& x_res, const DgdParams& params) {
  if (params.options.guide != GuideSource::strided_conv) throw ShapeError("build_no_dwt_guide: params expect a wavelet guide");
  if (x_res.ndim() != 4 || x_res.dim(2) % 2 != 0 || x_res.dim(3) % 2 != 0) {
    throw ShapeError("build_no_dwt_guide: X_res must be BxCxHxW with even H, W; got " + shape_str(x_res.shape()));
  }
  return conv2d(x_res, params.guide_weight, params.guide_bias, 2);
}

Tensor learnable_mean(const Tensor& x, const DgdParams& params) {
  const std::size_t pad = params.options.mean_kernel / 2;
  return conv2d(pad_reflect(x, pad), params.mean_weight, {}, 1, 0, params.channels);
}

LocalStatistics local_statistics(const Tensor& x, const Tensor& y, const DgdParams& params) {
  if (x.shape() != y.shape()) {
    throw ShapeError("local_statistics: X " + shape_str(x.shape()) + " and Y " + shape_str(y.shape()) + " differ");
  }
  LocalStatistics s;
  s.mu_x = learnable_mean(x, params);
  s.mu_y = learnable_mean(y, params);
  s.sigma_xy = learnable_mean(x * y, params) - s.mu_x * s.mu_y;
  s.sigma_y = learnable_mean(y * y, params) - s.mu_y * s.mu_y;
  return s;
}

GuidedCoefficients guided_coefficients(const LocalStatistics& stats, const DgdParams& params) {
  GuidedCoefficients c;
  // Once the mean taps move off the box filter, f(Y*Y) - mu_Y^2 can dip below
  // zero; a variance is clamped at zero so the denominator stays >= epsilon.
  c.a = stats.sigma_xy / add(relu(stats.sigma_y), params.epsilon());
  if (params.options.form == CoefficientForm::printed) {
    c.b = stats.mu_y - c.a * stats.mu_x;
  } else {
    c.b = stats.mu_x - c.a * stats.mu_y;
  }
  return c;
}

DgdTrace dgd_trace(const Tensor& x_dec, const Tensor& x_res, const DgdParams& params) {
  const auto& d = x_dec.shape();
  const auto& r = x_res.shape();
  if (d.size() != 4 || r.size() != 4 || d[0] != r[0] || d[1] != r[1] || r[2] != 2 * d[2] || r[3] != 2 * d[3]) {
    throw ShapeError("dgd_forward: X_res " + shape_str(r) + " must be exactly twice the spatial size of X " +
                     shape_str(d) + " with equal batch and channels");
  }
  if (d[1] != params.channels) {
    throw ShapeError("dgd_forward: features have " + std::to_string(d[1]) + " channels, block expects " +
                     std::to_string(params.channels));
  }
  DgdTrace t;
  t.guide = params.options.guide == GuideSource::wavelet ? build_guide(haar_dwt(x_res), params)
                                                         : build_no_dwt_guide(x_res, params);
  t.stats = local_statistics(x_dec, t.guide, params);
  t.coeffs = guided_coefficients(t.stats, params);
  const auto mode = params.options.upsample;
  Tensor detail = mul(upsample(t.coeffs.a, 2, mode) * upsample(x_dec, 2, mode), params.alpha);
  t.z = detail + upsample(t.coeffs.b, 2, mode) + mul(x_res, params.beta);
  return t;
}

}  // namespace gdgt
