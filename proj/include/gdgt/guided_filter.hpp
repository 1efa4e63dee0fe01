#pragma once

#include <string>

#include "gdgt/ops.hpp"
#include "gdgt/random.hpp"
#include "gdgt/tensor.hpp"
#include "gdgt/wavelet.hpp"

namespace gdgt {

/// Where the guide map Y comes from.
enum class GuideSource {
  wavelet,       ///< 1x1 conv over the concatenated Haar bands of X_res
  strided_conv,  ///< stride-2 1x1 conv of X_res (the "without DWT" ablation)
};

/// How the offset b is formed from the local means.
enum class CoefficientForm {
  printed,    ///< b = mu_Y - A * mu_X
  classical,  ///< b = mu_X - A * mu_Y (guide and filtered input in the usual roles)
};

struct DgdOptions {
  std::size_t mean_kernel = 3;
  GuideSource guide = GuideSource::wavelet;
  CoefficientForm form = CoefficientForm::printed;
  UpsampleMode upsample = UpsampleMode::bilinear;
  double epsilon_init = 1e-2;
  double alpha_init = 1.0;
  double beta_init = 1.0;
};

/// Learnable state of one detail-guided decoding block.
struct DgdParams {
  DgdOptions options;
  std::size_t channels = 0;
  Tensor guide_weight;  // C x 4C x 1 x 1 (wavelet) or C x C x 1 x 1 (strided)
  Tensor guide_bias;    // C
  Tensor mean_weight;   // C x 1 x k x k, depthwise
  Tensor epsilon_raw;   // C, mapped through softplus
  Tensor alpha;         // 1
  Tensor beta;          // 1

  static DgdParams create(std::size_t channels, Rng& rng, const DgdOptions& options = {});

  /// Per-channel regularizer, softplus(epsilon_raw) > 0.
  Tensor epsilon() const;
  /// Sets every channel's regularizer to `value` (> 0).
  void set_epsilon(double value);
  /// Restores the k x k box filter (taps 1/k^2) on every channel.
  void reset_mean_filter();
  void collect(ParameterList& out, const std::string& prefix) const;
};

/// Y: the four bands concatenated on channels, then the 1x1 guide conv.
Tensor build_guide(const WaveletBands& bands, const DgdParams& params);

/// Y without wavelets: stride-2 1x1 conv of X_res, same resolution as the
/// wavelet guide.
Tensor build_no_dwt_guide(const Tensor& x_res, const DgdParams& params);

/// f_mu: depthwise k x k conv with reflect same-padding.
Tensor learnable_mean(const Tensor& x, const DgdParams& params);

struct LocalStatistics {
  Tensor mu_x;
  Tensor mu_y;
  Tensor sigma_xy;  // f(X*Y) - mu_X*mu_Y
  Tensor sigma_y;   // f(Y*Y) - mu_Y*mu_Y
};

LocalStatistics local_statistics(const Tensor& x, const Tensor& y, const DgdParams& params);

struct GuidedCoefficients {
  Tensor a;  // sigma_XY / (sigma_Y + eps)
  Tensor b;
};

GuidedCoefficients guided_coefficients(const LocalStatistics& stats, const DgdParams& params);

/// Every intermediate of one block evaluation.
struct DgdTrace {
  Tensor guide;
  LocalStatistics stats;
  GuidedCoefficients coeffs;
  Tensor z;
};

/// Z = alpha*up(A)*up(X) + up(b) + beta*X_res, where X = x_dec
/// (B x C x H x W) and the guide comes from x_res (B x C x 2H x 2W).
DgdTrace dgd_trace(const Tensor& x_dec, const Tensor& x_res, const DgdParams& params);

inline Tensor dgd_forward(const Tensor& x_dec, const Tensor& x_res, const DgdParams& params) {
  return dgd_trace(x_dec, x_res, params).z;
}

}  // namespace gdgt
