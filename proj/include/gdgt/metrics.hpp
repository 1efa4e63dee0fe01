#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdgt/label_mask.hpp"

namespace gdgt {

/// counts[gt][pred], num_categories x num_categories.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_categories = kNumCategories);

  /// Adds one pixel per mask position. Throws on shape mismatch or
  /// out-of-range labels, leaving the matrix unchanged.
  void accumulate(const LabelMask& pred, const LabelMask& gt);
  void add(std::size_t gt, std::size_t pred, std::uint64_t n = 1);
  void merge(const ConfusionMatrix& other);

  std::size_t num_categories() const { return k_; }
  std::uint64_t count(std::size_t gt, std::size_t pred) const { return counts_[gt * k_ + pred]; }
  std::uint64_t total() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

/// Scores in [0,1]. A category absent from both ground truth and prediction
/// has present[c] == false, IoU 0, and is left out of the mIoU and F1 means.
struct SegmentationMetrics {
  std::vector<double> iou;
  std::vector<double> f1_per_category;
  std::vector<bool> present;
  double miou = 0.0;
  double f1 = 0.0;
  double oa = 0.0;
  double fwiou = 0.0;

  friend bool operator==(const SegmentationMetrics&, const SegmentationMetrics&) = default;
};

/// IoU_c = TP/(TP+FP+FN); F1 = macro mean of 2TP/(2TP+FP+FN); OA = trace/total;
/// FWIoU = sum_c freq_gt(c) * IoU_c. Throws on an empty matrix.
SegmentationMetrics compute_metrics(const ConfusionMatrix& cm);

/// Column header matching report_row.
std::string report_header(std::size_t num_categories = kNumCategories);

/// "<tag>  mIoU F1 OA FWIoU | per-category IoU..." as percentages with two
/// decimals; the four headline values are separated by single spaces.
std::string report_row(const SegmentationMetrics& m, const std::string& tag);

/// key=value lines with round-trip precision.
std::string metrics_dump(const SegmentationMetrics& m, const std::string& tag = {});
/// Parses metrics_dump output; `tag` receives the tag line if present.
SegmentationMetrics parse_metrics_dump(const std::string& text, std::string* tag = nullptr);

}  // namespace gdgt
