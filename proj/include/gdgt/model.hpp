#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gdgt/glff.hpp"
#include "gdgt/guided_filter.hpp"
#include "gdgt/label_mask.hpp"
#include "gdgt/random.hpp"
#include "gdgt/tensor.hpp"

namespace gdgt {

enum class DgdMode { off, no_dwt, full };

/// Component switches matching the four ablation rows:
/// Baseline (plain attention decoder), +GLFF, +GLFF+DGD without DWT, GDGT.
struct AblationConfig {
  bool use_glff = true;
  DgdMode dgd_mode = DgdMode::full;

  static AblationConfig baseline() { return {false, DgdMode::off}; }
  static AblationConfig glff() { return {true, DgdMode::off}; }
  static AblationConfig glff_dgd_no_dwt() { return {true, DgdMode::no_dwt}; }
  static AblationConfig full() { return {true, DgdMode::full}; }
  /// The four rows in table order.
  static std::array<AblationConfig, 4> table_rows() { return {baseline(), glff(), glff_dgd_no_dwt(), full()}; }

  /// Row label, e.g. "+GLFF+DGD(no-dwt)" or "GDGT".
  std::string tag() const;

  friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

struct GdgtConfig {
  std::size_t input_size = 64;
  std::size_t in_channels = 3;
  std::vector<std::size_t> stage_channels{16, 32, 64, 128};
  std::size_t num_categories = kNumCategories;
  std::size_t window = 4;
  std::size_t heads = 2;
  AblationConfig ablation;
  FusionWeights fusion = FusionWeights::scalar;
  CoefficientForm dgd_form = CoefficientForm::printed;
  UpsampleMode dgd_upsample = UpsampleMode::bilinear;

  std::size_t num_stages() const { return stage_channels.size(); }
  /// Spatial side of encoder stage i: input_size / 2^(i+1).
  std::size_t stage_size(std::size_t i) const { return input_size >> (i + 1); }
  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;

  /// 512 x 512 input with 64..512 channels.
  static GdgtConfig full_scale();

  friend bool operator==(const GdgtConfig&, const GdgtConfig&) = default;
};

/// Convolution followed by group normalization.
struct ConvNorm {
  Tensor weight;
  Tensor gamma, beta;
  std::size_t groups = 1;

  static ConvNorm create(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng);
  Tensor operator()(const Tensor& x, std::size_t stride = 1) const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

struct ResidualBlock {
  ConvNorm first, second;
  Tensor operator()(const Tensor& x) const;
};

struct EncoderStage {
  ConvNorm down;  // stride-2 3x3
  std::array<ResidualBlock, 2> blocks;
};

struct DecoderStage {
  GlffParams glff;
  ConvNorm proj;  // 1x1 to the skip's channel count
  DgdParams dgd;                  // undefined tensors when DGD is off
};

struct EncoderFeatures {
  Tensor stem;                 // B x C0 x S x S
  std::vector<Tensor> stages;  // stage i: B x C_i x S/2^(i+1) x S/2^(i+1)
};

/// U-shaped network: residual encoder, GLFF decoder stages, DGD skip fusion,
/// per-pixel category head.
class GdgtModel {
 public:
  GdgtModel(GdgtConfig config, std::uint64_t seed);

  const GdgtConfig& config() const { return config_; }

  EncoderFeatures encoder_forward(const Tensor& image) const;
  /// Logits B x num_categories x S x S.
  Tensor decoder_forward(const EncoderFeatures& features) const;
  Tensor forward(const Tensor& image) const { return decoder_forward(encoder_forward(image)); }
  std::vector<LabelMask> predict(const Tensor& image) const;

  /// Named parameters in a stable order; names are unique.
  ParameterList parameters() const;
  std::size_t parameter_count() const;

  const ConvNorm& stem() const { return stem_; }
  const std::vector<EncoderStage>& encoder_stages() const { return encoder_; }
  std::vector<EncoderStage>& encoder_stages() { return encoder_; }
  /// Indexed like the encoder stages: decoder stage i starts at stage i's resolution.
  const std::vector<DecoderStage>& decoder_stages() const { return decoder_; }
  std::vector<DecoderStage>& decoder_stages() { return decoder_; }
  const Tensor& head_weight() const { return head_weight_; }
  const Tensor& head_bias() const { return head_bias_; }

 private:
  GdgtConfig config_;
  ConvNorm stem_;
  std::vector<EncoderStage> encoder_;
  std::vector<DecoderStage> decoder_;
  Tensor head_weight_, head_bias_;
};

}  // namespace gdgt
