#pragma once

#include <string>

#include "gdgt/ops.hpp"
#include "gdgt/random.hpp"
#include "gdgt/tensor.hpp"

namespace gdgt {

enum class FusionWeights {
  scalar,       ///< one (global, local) weight pair for the whole map
  per_channel,  ///< a weight pair per channel
};

struct GlffOptions {
  std::size_t heads = 2;
  std::size_t window = 4;
  std::size_t ffn_ratio = 2;
  FusionWeights fusion = FusionWeights::scalar;
  /// false gives the plain attention block: no conv branch, no fusion.
  bool local_branch = true;
};

/// Learnable state of one global-local feature fusion block.
struct GlffParams {
  GlffOptions options;
  std::size_t channels = 0;

  Tensor norm1_gamma, norm1_beta;
  Tensor q_weight, q_bias, k_weight, k_bias, v_weight, v_bias;
  Tensor out_weight, out_bias;
  Tensor norm2_gamma, norm2_beta;
  Tensor ffn1_weight, ffn1_bias, ffn2_weight, ffn2_bias;
  Tensor dw_weight, dw_bias;  // C x 1 x 3 x 3 depthwise
  Tensor pw_weight, pw_bias;  // C x C x 1 x 1 pointwise
  Tensor fusion_logits;       // 2, or 2 x C for per-channel fusion

  static GlffParams create(std::size_t channels, Rng& rng, const GlffOptions& options = {});

  /// softmax(fusion_logits) over the (global, local) axis.
  Tensor fusion_weights() const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

/// Non-overlapping window x window groups of a feature map, flattened to
/// B x (groups*group_size) x C tokens, one window after another.
struct TokenGroups {
  Tensor tokens;
  std::size_t height = 0, width = 0, window = 0;
  std::size_t groups() const { return (height / window) * (width / window); }
  std::size_t group_size() const { return window * window; }
};

TokenGroups patch_embed(const Tensor& x, std::size_t window);
/// Inverse of patch_embed for tokens laid out like `layout`.
Tensor patch_unembed(const Tensor& tokens, const TokenGroups& layout);

/// softmax(QK^T / sqrt(d_head)) V per head within each group, heads
/// concatenated and output-projected. When `probabilities` is given it
/// receives the (B*groups) x heads x T x T attention matrix.
Tensor multi_head_attention(const TokenGroups& groups, const GlffParams& params, Tensor* probabilities = nullptr);

/// Depthwise 3x3 (reflect same-padding) -> relu -> pointwise 1x1.
Tensor local_branch(const Tensor& x, const GlffParams& params);

/// w0 * global + w1 * local with w = softmax(fusion_logits).
Tensor fuse(const Tensor& global_feat, const Tensor& local_feat, const GlffParams& params);

/// Pre-norm attention and feed-forward over windows, in parallel with the
/// local branch, fused, plus a residual around the whole block.
Tensor glff_forward(const Tensor& x, const GlffParams& params);

}  // namespace gdgt
