#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gdgt/checkpoint.hpp"
#include "gdgt/config.hpp"
#include "gdgt/data.hpp"
#include "gdgt/image_io.hpp"
#include "gdgt/metrics.hpp"
#include "gdgt/ops.hpp"
#include "gdgt/training.hpp"
#include "gdgt/verify.hpp"

namespace fs = std::filesystem;
using namespace gdgt;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

// Raised for bad flag combinations detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Writes to standard output and, when open, to a log file.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == traits_type::eof()) return traits_type::not_eof(c);
    const char ch = traits_type::to_char_type(c);
    if (a_->sputc(ch) == traits_type::eof()) return traits_type::eof();
    if (b_ && b_->sputc(ch) == traits_type::eof()) return traits_type::eof();
    return c;
  }
  int sync() override { return (a_->pubsync() == 0 && (!b_ || b_->pubsync() == 0)) ? 0 : -1; }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// ---- synth -------------------------------------------------------------

struct SynthArgs {
  std::uint64_t seed = 1;
  std::size_t count = 10;
  std::size_t size = 64;
  fs::path out;
};

int cmd_synth(const SynthArgs& a) {
  if (a.size < 64) throw UsageError("--size must be at least 64, got " + std::to_string(a.size));
  if (a.count == 0) throw UsageError("--count must be positive");
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec || !fs::is_directory(a.out)) throw std::runtime_error("cannot create output directory " + a.out.string());
  std::vector<ManifestRecord> records;
  for (std::size_t i = 0; i < a.count; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "scene_%04zu", i);
    const Scene s = synth_scene(a.seed + i, a.size);
    const fs::path image = std::string(stem) + ".png", mask = std::string(stem) + "_mask.png";
    write_scene(s, a.out / image, a.out / mask);
    records.push_back({image, mask, 1.0});
  }
  write_manifest(a.out / "manifest.txt", records);
  std::cout << "wrote " << a.count << " scenes and " << (a.out / "manifest.txt").string() << '\n';
  return 0;
}

// ---- train -------------------------------------------------------------

struct TrainArgs {
  fs::path config;
  double lr = TrainConfig{}.lr;
  std::size_t epochs = TrainConfig{}.epochs;
  std::size_t batch_size = TrainConfig{}.batch_size;
  std::uint64_t seed = 0;
  std::string ablation = "full";
  std::string optimizer = "adam";
  fs::path data;
  fs::path val_data;
  fs::path checkpoint = RunConfig{}.checkpoint;
  fs::path log;
};

// Options left null are not offered by the subcommand.
struct TrainOptions {
  CLI::Option *lr = nullptr, *epochs = nullptr, *batch_size = nullptr, *seed = nullptr, *ablation = nullptr,
              *optimizer = nullptr, *data = nullptr, *val_data = nullptr, *checkpoint = nullptr, *log = nullptr;
};

RunConfig resolve_run_config(const fs::path& config, const TrainArgs& a, const TrainOptions& o) {
  RunConfig rc = config.empty() ? RunConfig{} : load_run_config(config);
  auto given = [](const CLI::Option* opt) { return opt && opt->count() > 0; };
  if (given(o.lr)) rc.train.lr = a.lr;
  if (given(o.epochs)) rc.train.epochs = a.epochs;
  if (given(o.batch_size)) rc.train.batch_size = a.batch_size;
  if (given(o.seed)) rc.train.seed = a.seed;
  if (given(o.ablation)) rc.train.ablation = parse_ablation(a.ablation);
  if (given(o.optimizer)) rc.train.optimizer = a.optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
  if (given(o.data)) rc.train.train_data.manifest = a.data;
  if (given(o.val_data)) rc.train.val_data.manifest = a.val_data;
  if (given(o.checkpoint)) rc.checkpoint = a.checkpoint;
  if (given(o.log)) rc.log = a.log;
  rc.model.ablation = rc.train.ablation;
  rc.model.validate();
  rc.train.validate();
  return rc;
}

struct Datasets {
  std::vector<Scene> train, val;
};

Datasets load_datasets(const RunConfig& rc) {
  const TrainConfig& t = rc.train;
  auto prepare = [&](const DatasetSpec& spec) {
    const auto scenes = load_scenes(spec);
    return prepare_samples(scenes, t.scale_ratios, t.tile_size, t.overlap, rc.model.input_size);
  };
  Datasets d;
  d.train = prepare(t.train_data);
  if (d.train.empty()) throw std::runtime_error("training dataset is empty");
  const bool has_val = t.val_data.uses_manifest() || t.val_data.synthetic.count > 0;
  if (has_val) d.val = prepare(t.val_data);
  return d;
}

int cmd_train(const RunConfig& rc) {
  const Datasets d = load_datasets(rc);
  std::ofstream file;
  if (!rc.log.empty()) {
    if (rc.log.has_parent_path()) fs::create_directories(rc.log.parent_path());
    file.open(rc.log, std::ios::trunc);
    if (!file) throw std::runtime_error("cannot write log " + rc.log.string());
  }
  TeeBuf tee(std::cout.rdbuf(), file.is_open() ? file.rdbuf() : nullptr);
  std::ostream log(&tee);
  if (rc.checkpoint.has_parent_path()) fs::create_directories(rc.checkpoint.parent_path());
  TrainHooks hooks;
  hooks.log = &log;
  hooks.checkpoint = rc.checkpoint;
  const TrainResult r = train(rc.model, rc.train, d.train, d.val, hooks);
  log << "# best epoch " << r.best_epoch << ", checkpoint " << rc.checkpoint.string() << '\n';
  log << "# " << report_header() << '\n' << "# " << report_row(r.best, rc.train.ablation.tag()) << '\n';
  log.flush();
  return 0;
}

// ---- eval --------------------------------------------------------------

struct EvalArgs {
  fs::path checkpoint;
  fs::path data;
  fs::path config;
  bool sweep = false;
  fs::path dump;
  std::size_t synthetic_count = 8;
  std::size_t synthetic_size = 64;
  std::uint64_t synthetic_seed = 100001;
  std::size_t batch_size = 8;
};

std::string dump_path_for(const fs::path& dump, const AblationConfig& ab) {
  return (dump.parent_path() / (dump.stem().string() + "_" + ablation_name(ab) + dump.extension().string())).string();
}

int cmd_eval(const EvalArgs& a, const TrainArgs& ta, const TrainOptions& to) {
  if (a.sweep) {
    if (!a.checkpoint.empty()) throw UsageError("--ablation-sweep trains its own models; drop --checkpoint");
    RunConfig rc = resolve_run_config(a.config, ta, to);
    if (!a.data.empty()) rc.train.val_data.manifest = a.data;
    const Datasets d = load_datasets(rc);
    const auto rows = ablation_sweep(rc.model, rc.train, d.train, d.val, &std::cerr);
    std::cout << sweep_table(rows);
    if (!a.dump.empty()) {
      for (const auto& r : rows) write_text(dump_path_for(a.dump, r.ablation), metrics_dump(r.metrics, r.ablation.tag()));
    }
    return 0;
  }
  if (a.checkpoint.empty()) throw UsageError("eval needs --checkpoint or --ablation-sweep");
  const GdgtModel model = load_checkpoint(a.checkpoint);
  DatasetSpec spec;
  if (!a.data.empty()) {
    spec.manifest = a.data;
  } else {
    spec.synthetic = {a.synthetic_count, a.synthetic_size, a.synthetic_seed};
  }
  const auto scenes = load_scenes(spec);
  const std::vector<double> ratios{1.0};
  const auto samples = prepare_samples(scenes, ratios, kTileSize, kTileOverlap, model.config().input_size);
  const SegmentationMetrics m = evaluate(model, samples, a.batch_size);
  const std::string tag = model.config().ablation.tag();
  std::cout << report_header() << '\n' << report_row(m, tag) << '\n';
  if (!a.dump.empty()) write_text(a.dump, metrics_dump(m, tag));
  return 0;
}

// ---- predict -----------------------------------------------------------

struct PredictArgs {
  fs::path checkpoint;
  fs::path image;
  fs::path out;
  fs::path viz;
  std::size_t tile_size = kTileSize;
  std::size_t overlap = kTileOverlap;
};

// Logits K x h x w for a 3 x h x w image, predicted at the model's input size.
Tensor predict_logits(const GdgtModel& model, const Tensor& chw) {
  const std::size_t S = model.config().input_size, h = chw.dim(1), w = chw.dim(2);
  Tensor x = reshape(chw, {1, 3, h, w});
  if (h != S || w != S) x = resize_bilinear(x, S, S);
  Tensor logits = model.forward(x);
  if (h != S || w != S) logits = resize_bilinear(logits, h, w);
  const std::size_t K = logits.dim(1);
  return reshape(logits, {K, h, w});
}

int cmd_predict(const PredictArgs& a) {
  const GdgtModel model = load_checkpoint(a.checkpoint);
  const RgbImage rgb = read_rgb_image(a.image);
  Scene scene;
  scene.image = image_to_tensor(rgb);
  scene.mask = LabelMask(rgb.height, rgb.width);
  NoGradGuard no_grad;
  LabelMask mask;
  std::size_t tiles = 1;
  if (rgb.height > a.tile_size || rgb.width > a.tile_size) {
    const TileSet set = tile_scene(scene, a.tile_size, a.overlap);
    std::vector<TileLogits> parts;
    for (const auto& t : set.tiles) parts.push_back({predict_logits(model, t.image), t.meta.row_offset, t.meta.col_offset});
    mask = crop_mask(stitch_predictions(parts, set.padded_height, set.padded_width), rgb.height, rgb.width);
    tiles = set.tiles.size();
  } else {
    const Tensor logits = predict_logits(model, scene.image);
    mask = argmax_labels(reshape(logits, {1, logits.dim(0), logits.dim(1), logits.dim(2)})).front();
  }
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  write_mask(a.out, mask);
  if (!a.viz.empty()) {
    if (a.viz.has_parent_path()) fs::create_directories(a.viz.parent_path());
    write_rgb_image(a.viz, side_by_side({rgb, colorize(mask)}));
  }
  std::cout << "predicted " << rgb.height << "x" << rgb.width << " from " << tiles << " tile(s) -> " << a.out.string()
            << '\n';
  return 0;
}

// ---- verify ------------------------------------------------------------

int cmd_verify() {
  bool ok = true;
  for (const auto& r : run_verify_suites()) {
    std::cout << format_suite_line(r) << '\n';
    ok &= r.passed;
  }
  std::cout << (ok ? "verify: all suites passed" : "verify: FAILED") << '\n';
  return ok ? 0 : kRuntimeError;
}

// The sweep reuses the optimization flags; data, ablation and outputs are train-only.
void add_train_flags(CLI::App& cmd, TrainArgs& a, TrainOptions& o, bool sweep) {
  o.lr = cmd.add_option("--lr", a.lr, "Learning rate")->capture_default_str();
  o.epochs = cmd.add_option("--epochs", a.epochs, "Training epochs")->capture_default_str();
  o.batch_size = cmd.add_option("--batch-size", a.batch_size, "Batch size")->capture_default_str();
  o.seed = cmd.add_option("--seed", a.seed, "Seed for initialization and shuffling")->capture_default_str();
  o.optimizer = cmd.add_option("--optimizer", a.optimizer, "adam or sgd")
                    ->capture_default_str()
                    ->check(CLI::IsMember({"adam", "sgd"}));
  if (sweep) return;
  o.ablation = cmd.add_option("--ablation", a.ablation, "Ablation row: baseline, glff, glff_dgd_no_dwt or full")
                   ->capture_default_str()
                   ->check(CLI::IsMember({"baseline", "glff", "glff_dgd_no_dwt", "no_dwt", "full", "gdgt"}));
  o.data = cmd.add_option("--data", a.data, "Training manifest (default: synthetic scenes)");
  o.val_data = cmd.add_option("--val-data", a.val_data, "Validation manifest (default: the training set)");
  o.checkpoint = cmd.add_option("--checkpoint", a.checkpoint, "Best-mIoU checkpoint path")->capture_default_str();
  o.log = cmd.add_option("--log", a.log, "Also write the epoch log to this file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GDGT sea-ice segmentation: synthesize data, train, evaluate, predict, verify"};
  app.require_subcommand(1);
  app.get_formatter()->column_width(40);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Write deterministic synthetic scenes and a manifest");
  synth->add_option("--seed", synth_args.seed, "Seed of the first scene")->capture_default_str();
  synth->add_option("--count", synth_args.count, "Number of scenes")->capture_default_str();
  synth->add_option("--size", synth_args.size, "Scene side in pixels (>= 64)")->capture_default_str();
  synth->add_option("--out", synth_args.out, "Output directory")->required();

  TrainArgs train_args;
  TrainOptions train_opts{};
  auto* train_cmd = app.add_subcommand("train", "Train a model; flags override the config file");
  train_cmd->add_option("--config", train_args.config, "JSON run configuration (default: built-in defaults)");
  add_train_flags(*train_cmd, train_args, train_opts, false);

  EvalArgs eval_args;
  TrainArgs sweep_args;
  TrainOptions sweep_opts{};
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint, or train and compare all four ablation rows");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint to evaluate");
  eval_cmd->add_option("--data", eval_args.data, "Evaluation manifest (default: synthetic scenes; with --ablation-sweep the validation set)");
  eval_cmd->add_option("--synthetic-count", eval_args.synthetic_count, "Synthetic evaluation scenes")->capture_default_str();
  eval_cmd->add_option("--synthetic-size", eval_args.synthetic_size, "Synthetic scene side")->capture_default_str();
  eval_cmd->add_option("--synthetic-seed", eval_args.synthetic_seed, "Synthetic seed")->capture_default_str();
  eval_cmd->add_option("--eval-batch-size", eval_args.batch_size, "Evaluation batch size")->capture_default_str();
  eval_cmd->add_flag("--ablation-sweep", eval_args.sweep, "Train and evaluate the four ablation rows")
      ->capture_default_str();
  eval_cmd->add_option("--config", eval_args.config, "Run configuration for --ablation-sweep");
  eval_cmd->add_option("--dump", eval_args.dump, "Write key=value metrics (one file per row when sweeping)");
  add_train_flags(*eval_cmd, sweep_args, sweep_opts, true);

  PredictArgs predict_args;
  auto* predict = app.add_subcommand("predict", "Predict a whole-image mask, tiling large inputs");
  predict->add_option("--checkpoint", predict_args.checkpoint, "Trained checkpoint")->required();
  predict->add_option("--image", predict_args.image, "Input RGB PNG")->required();
  predict->add_option("--out", predict_args.out, "Output paletted mask PNG")->required();
  predict->add_option("--viz", predict_args.viz, "Optional side-by-side image | mask PNG");
  predict->add_option("--tile-size", predict_args.tile_size, "Tile side for large images")->capture_default_str();
  predict->add_option("--overlap", predict_args.overlap, "Tile overlap")->capture_default_str();

  auto* verify = app.add_subcommand("verify", "Run the fast property suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (train_cmd->parsed()) return cmd_train(resolve_run_config(train_args.config, train_args, train_opts));
    if (eval_cmd->parsed()) return cmd_eval(eval_args, sweep_args, sweep_opts);
    if (predict->parsed()) return cmd_predict(predict_args);
    if (verify->parsed()) return cmd_verify();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}
