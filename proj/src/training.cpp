#include "gdgt/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <sstream>

#include "gdgt/checkpoint.hpp"
#include "gdgt/ops.hpp"

namespace gdgt {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("TrainConfig: " + m); };
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be a positive finite number");
  if (epochs < 1) fail("epochs must be at least 1");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (scale_ratios.empty()) fail("scale_ratios must not be empty");
  for (double r : scale_ratios)
    if (!(r > 0.0) || !std::isfinite(r)) fail("scale ratios must be positive");
  if (tile_size == 0 || overlap >= tile_size) fail("overlap must be smaller than tile_size");
}

std::vector<Scene> load_scenes(const DatasetSpec& spec) {
  std::vector<Scene> scenes;
  if (spec.uses_manifest()) {
    for (const auto& rec : read_manifest(spec.manifest)) {
      Scene s = read_scene(rec.image, rec.mask);
      s.meta.source_id = rec.image.filename().string();
      if (rec.scale != 1.0) s = rescale_scene(s, rec.scale);
      scenes.push_back(std::move(s));
    }
  } else {
    for (std::size_t i = 0; i < spec.synthetic.count; ++i) {
      scenes.push_back(synth_scene(spec.synthetic.seed + i, spec.synthetic.size));
    }
  }
  return scenes;
}

std::vector<Scene> prepare_samples(std::span<const Scene> scenes, std::span<const double> ratios,
                                   std::size_t tile_size, std::size_t overlap, std::size_t input_size) {
  std::vector<Scene> out;
  auto emit = [&](const Scene& s) {
    if (s.height() == input_size && s.width() == input_size) {
      out.push_back(s);
    } else {
      out.push_back(resize_to_input(s, input_size));
    }
  };
  for (const auto& scene : scenes) {
    for (double r : ratios) {
      const Scene scaled = r == 1.0 ? scene : rescale_scene(scene, r);
      if (scaled.height() > tile_size || scaled.width() > tile_size) {
        for (const auto& t : tile_scene(scaled, tile_size, overlap).tiles) emit(t);
      } else {
        emit(scaled);
      }
    }
  }
  return out;
}

Tensor stack_images(std::span<const Scene> scenes, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("stack_images: empty batch");
  const Shape& first = scenes[indices[0]].image.shape();
  std::vector<double> data;
  data.reserve(indices.size() * shape_numel(first));
  for (auto i : indices) {
    const auto& img = scenes[i].image;
    if (img.shape() != first) {
      throw ShapeError("stack_images: image " + shape_str(img.shape()) + " differs from " + shape_str(first));
    }
    data.insert(data.end(), img.data().begin(), img.data().end());
  }
  Shape s{indices.size()};
  s.insert(s.end(), first.begin(), first.end());
  return Tensor::from_data(std::move(s), std::move(data));
}

Tensor segmentation_loss(const Tensor& logits, std::span<const LabelMask> masks) {
  const auto& s = logits.shape();
  if (s.size() != 4 || s[0] != masks.size()) {
    throw ShapeError("segmentation_loss: " + std::to_string(masks.size()) + " masks for logits " + shape_str(s));
  }
  std::vector<std::uint8_t> labels;
  labels.reserve(shape_numel(s) / s[1]);
  for (const auto& m : masks) {
    if (m.height != s[2] || m.width != s[3]) {
      throw ShapeError("segmentation_loss: mask " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                       " does not match logits " + shape_str(s));
    }
    labels.insert(labels.end(), m.labels.begin(), m.labels.end());
  }
  return cross_entropy(logits, labels);
}

Optimizer::Optimizer(OptimizerKind kind, ParameterList params) : kind_(kind), params_(std::move(params)) {
  if (kind_ == OptimizerKind::adam) {
    for (const auto& p : params_) {
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }
}

void Optimizer::step(double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].tensor;
    if (!t.has_grad()) continue;
    auto g = t.grad();
    auto w = t.mutable_data();
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
      continue;
    }
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
    }
  }
}

void Optimizer::zero_grad() { gdgt::zero_grad(params_); }

double scheduled_lr(const TrainConfig& config, std::size_t step, std::size_t total_steps) {
  if (config.schedule == LrSchedule::constant || total_steps == 0) return config.lr;
  const double t = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

ConfusionMatrix confusion(const GdgtModel& model, std::span<const Scene> samples, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("evaluate: batch_size must be positive");
  const std::size_t S = model.config().input_size;
  ConfusionMatrix cm(model.config().num_categories);
  NoGradGuard no_grad;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) {
      if (samples[i].height() != S || samples[i].width() != S) {
        throw ShapeError("evaluate: sample " + std::to_string(i) + " is " + std::to_string(samples[i].height()) +
                         "x" + std::to_string(samples[i].width()) + ", model input is " + std::to_string(S));
      }
      idx.push_back(i);
    }
    const auto preds = model.predict(stack_images(samples, idx));
    for (std::size_t b = 0; b < idx.size(); ++b) cm.accumulate(preds[b], samples[idx[b]].mask);
  }
  return cm;
}

SegmentationMetrics evaluate(const GdgtModel& model, std::span<const Scene> samples, std::size_t batch_size) {
  if (samples.empty()) throw std::invalid_argument("evaluate: dataset is empty");
  return compute_metrics(confusion(model, samples, batch_size));
}

std::string format_log_header(const TrainConfig& config) {
  std::ostringstream os;
  os << "# tag=" << config.ablation.tag() << " lr=" << config.lr << " epochs=" << config.epochs
     << " batch_size=" << config.batch_size << " seed=" << config.seed;
  return os.str();
}

std::string format_epoch_line(const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "epoch=%zu loss=%.17g miou=%.17g f1=%.17g oa=%.17g fwiou=%.17g", r.epoch, r.loss,
                r.val.miou, r.val.f1, r.val.oa, r.val.fwiou);
  return buf;
}

namespace {

std::vector<std::vector<double>> snapshot(const ParameterList& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore(const ParameterList& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
  }
}

}  // namespace

TrainResult train(GdgtConfig model_config, const TrainConfig& config, std::span<const Scene> train_set,
                  std::span<const Scene> val_set, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: training dataset is empty");
  if (val_set.empty()) val_set = train_set;
  model_config.ablation = config.ablation;

  GdgtModel model(model_config, config.seed);
  const ParameterList params = model.parameters();
  Optimizer opt(config.optimizer, params);
  Rng order_rng(config.seed ^ 0xD1B54A32D192ED03ULL);

  const std::size_t n = train_set.size();
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = batches * config.epochs;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  if (hooks.log) *hooks.log << format_log_header(config) << '\n' << std::flush;

  std::vector<EpochRecord> records;
  std::vector<std::vector<double>> best_values;
  SegmentationMetrics best;
  std::size_t best_epoch = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t start = b * config.batch_size;
      const std::span<const std::size_t> idx(order.data() + start, std::min(n, start + config.batch_size) - start);
      std::vector<LabelMask> masks;
      for (auto i : idx) masks.push_back(train_set[i].mask);
      const Tensor loss = segmentation_loss(model.forward(stack_images(train_set, idx)), masks);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError("train: loss became non-finite (" + std::to_string(value) + ") at epoch " +
                              std::to_string(epoch) + ", batch " + std::to_string(b + 1));
      }
      loss_sum += value;
      opt.zero_grad();
      backward(loss);
      opt.step(scheduled_lr(config, opt.steps(), total_steps));
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(batches);
    rec.val = evaluate(model, val_set, config.batch_size);
    if (hooks.log) *hooks.log << format_epoch_line(rec) << '\n' << std::flush;
    if (best_epoch == 0 || rec.val.miou > best.miou) {
      best = rec.val;
      best_epoch = epoch;
      best_values = snapshot(params);
      if (!hooks.checkpoint.empty()) save_checkpoint(hooks.checkpoint, model);
    }
    records.push_back(std::move(rec));
  }
  opt.zero_grad();
  restore(params, best_values);
  return TrainResult{std::move(model), std::move(records), best_epoch, std::move(best)};
}

std::vector<SweepRow> ablation_sweep(const GdgtConfig& model_config, const TrainConfig& config,
                                     std::span<const Scene> train_set, std::span<const Scene> val_set,
                                     std::ostream* log) {
  std::vector<SweepRow> rows;
  for (const auto& ab : AblationConfig::table_rows()) {
    TrainConfig c = config;
    c.ablation = ab;
    TrainHooks hooks;
    hooks.log = log;
    auto result = train(model_config, c, train_set, val_set, hooks);
    rows.push_back({ab, result.best});
  }
  return rows;
}

std::string sweep_table(std::span<const SweepRow> rows) {
  std::string out = report_header(rows.empty() ? kNumCategories : rows.front().metrics.iou.size()) + "\n";
  for (const auto& r : rows) out += report_row(r.metrics, r.ablation.tag()) + "\n";
  return out;
}

}  // namespace gdgt
