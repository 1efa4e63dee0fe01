#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gdgt/data.hpp"
#include "gdgt/metrics.hpp"
#include "gdgt/model.hpp"

namespace gdgt {

enum class OptimizerKind { adam, sgd };
enum class LrSchedule { constant, cosine };

/// Scenes synth_scene(seed + i, size) for i in [0, count).
struct SyntheticSpec {
  std::size_t count = 20;
  std::size_t size = 64;
  std::uint64_t seed = 1;

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

/// A manifest file when `manifest` is set, otherwise synthetic scenes.
struct DatasetSpec {
  std::filesystem::path manifest;
  SyntheticSpec synthetic;

  bool uses_manifest() const { return !manifest.empty(); }
  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct TrainConfig {
  double lr = 6e-4;
  std::size_t epochs = 12;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  AblationConfig ablation;
  OptimizerKind optimizer = OptimizerKind::adam;
  LrSchedule schedule = LrSchedule::constant;

  DatasetSpec train_data;
  /// An empty validation spec (no manifest, synthetic count 0) validates on
  /// the training set.
  DatasetSpec val_data{{}, {0, 64, 100001}};

  /// Multi-scale rescaling applied to every source scene before tiling.
  std::vector<double> scale_ratios{1.0};
  std::size_t tile_size = kTileSize;
  std::size_t overlap = kTileOverlap;

  /// Throws std::invalid_argument unless lr > 0, epochs >= 1, batch_size >= 1
  /// and the tiling/scale settings are usable.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Source scenes of a dataset spec, before rescaling and tiling.
std::vector<Scene> load_scenes(const DatasetSpec& spec);

/// Rescales each scene by every ratio, tiles anything larger than the tile
/// size, and resizes every piece to input_size x input_size.
std::vector<Scene> prepare_samples(std::span<const Scene> scenes, std::span<const double> ratios,
                                   std::size_t tile_size, std::size_t overlap, std::size_t input_size);

/// Stacks scene images into a B x 3 x S x S batch.
Tensor stack_images(std::span<const Scene> scenes, std::span<const std::size_t> indices);

/// Pixel-wise cross-entropy, mean over all pixels of the batch.
Tensor segmentation_loss(const Tensor& logits, std::span<const LabelMask> masks);

/// Adam (decays 0.9 / 0.999, eps 1e-8) or plain gradient descent over a
/// parameter list. Parameters without a gradient are left untouched.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, ParameterList params);

  void step(double lr);
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  OptimizerKind kind_;
  ParameterList params_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

double scheduled_lr(const TrainConfig& config, std::size_t step, std::size_t total_steps);

ConfusionMatrix confusion(const GdgtModel& model, std::span<const Scene> samples, std::size_t batch_size = 8);
SegmentationMetrics evaluate(const GdgtModel& model, std::span<const Scene> samples, std::size_t batch_size = 8);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean batch loss
  SegmentationMetrics val;
};

/// Header line naming the ablation row, then one line per epoch.
std::string format_log_header(const TrainConfig& config);
std::string format_epoch_line(const EpochRecord& record);

struct TrainHooks {
  std::ostream* log = nullptr;
  /// Written whenever validation mIoU improves.
  std::filesystem::path checkpoint;
};

struct TrainResult {
  GdgtModel model;  // parameters from the best-mIoU epoch
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  SegmentationMetrics best;
};

/// Trains a model built from `model_config` with `config.ablation`. The
/// samples must already be input-sized. Deterministic given config.seed.
TrainResult train(GdgtConfig model_config, const TrainConfig& config, std::span<const Scene> train_set,
                  std::span<const Scene> val_set, const TrainHooks& hooks = {});

struct SweepRow {
  AblationConfig ablation;
  SegmentationMetrics metrics;
};

/// Trains and validates each of the four ablation rows from the same seed.
std::vector<SweepRow> ablation_sweep(const GdgtConfig& model_config, const TrainConfig& config,
                                     std::span<const Scene> train_set, std::span<const Scene> val_set,
                                     std::ostream* log = nullptr);

/// report_header followed by one report_row per sweep row.
std::string sweep_table(std::span<const SweepRow> rows);

}  // namespace gdgt
