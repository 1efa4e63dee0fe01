#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gdgt/config.hpp"

using namespace gdgt;

namespace {

const char* kFull = R"({
  "model": {"input_size": 32, "stage_channels": [8, 16], "window": 2, "heads": 4,
            "fusion": "per_channel", "dgd_form": "classical", "dgd_upsample": "nearest"},
  "train": {"lr": 0.001, "epochs": 3, "batch_size": 4, "seed": 17, "optimizer": "sgd", "schedule": "cosine",
            "ablation": {"use_glff": true, "dgd_mode": "no_dwt"}, "scale_ratios": [0.5, 1.0],
            "tile_size": 128, "overlap": 32},
  "data": {"train": {"manifest": "scenes/manifest.txt"},
           "val": {"synthetic": {"count": 5, "size": 96, "seed": 900}}},
  "output": {"checkpoint": "out/model.ckpt", "log": "out/train.log"}
})";

}  // namespace

TEST_CASE("empty config gives the documented defaults") {
  const RunConfig rc = parse_run_config("{}");
  CHECK(rc == RunConfig{});
  CHECK(rc.train.lr == 6e-4);
  CHECK(rc.train.epochs == 12);
  CHECK(rc.model.input_size == 64);
  CHECK(rc.model.stage_channels == std::vector<std::size_t>{16, 32, 64, 128});
  CHECK(rc.checkpoint == "gdgt.ckpt");
}

TEST_CASE("every field is read") {
  const RunConfig rc = parse_run_config(kFull);
  CHECK(rc.model.input_size == 32);
  CHECK(rc.model.stage_channels == std::vector<std::size_t>{8, 16});
  CHECK(rc.model.fusion == FusionWeights::per_channel);
  CHECK(rc.model.dgd_form == CoefficientForm::classical);
  CHECK(rc.model.dgd_upsample == UpsampleMode::nearest);
  CHECK(rc.train.lr == 0.001);
  CHECK(rc.train.optimizer == OptimizerKind::sgd);
  CHECK(rc.train.schedule == LrSchedule::cosine);
  CHECK(rc.train.ablation == AblationConfig::glff_dgd_no_dwt());
  CHECK(rc.model.ablation == rc.train.ablation);
  CHECK(rc.train.scale_ratios == std::vector<double>{0.5, 1.0});
  CHECK(rc.train.train_data.manifest == "scenes/manifest.txt");
  CHECK(rc.train.val_data.synthetic == SyntheticSpec{5, 96, 900});
  CHECK(rc.log == "out/train.log");
}

TEST_CASE("parse, serialize, parse is a fixed point") {
  for (const char* text : {"{}", kFull}) {
    const RunConfig a = parse_run_config(text);
    const std::string once = serialize_run_config(a);
    const RunConfig b = parse_run_config(once);
    CHECK(a == b);
    CHECK(serialize_run_config(b) == once);
  }
}

TEST_CASE("unknown keys and bad values are rejected") {
  CHECK_THROWS_AS(parse_run_config(R"({"modle": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"learning_rate": 0.1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"ablation": {"dgd": "full"}}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"data": {"train": {"synthetic": {"cnt": 3}}}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"epochs": -1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"optimizer": "rmsprop"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
  try {
    parse_run_config(R"({"output": {"checkpoint": "a", "chekpoint": "b"}})");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("chekpoint") != std::string::npos);
  }
}

TEST_CASE("missing file names the path") {
  try {
    load_run_config("/nonexistent/dir/run.json");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dir/run.json") != std::string::npos);
  }
}

TEST_CASE("relative paths resolve against the config file") {
  const auto dir = std::filesystem::temp_directory_path() / "gdgt_test_config";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "run.json");
    f << kFull;
  }
  const RunConfig rc = load_run_config(dir / "run.json");
  CHECK(rc.train.train_data.manifest == dir / "scenes/manifest.txt");
  CHECK(rc.checkpoint == dir / "out/model.ckpt");
  CHECK(rc.log == dir / "out/train.log");
  std::filesystem::remove_all(dir);
}

TEST_CASE("model configuration embedding and ablation names") {
  GdgtConfig c;
  c.ablation = AblationConfig::glff();
  c.window = 2;
  CHECK(model_config_from_json(model_config_to_json(c)) == c);
  for (const auto& a : AblationConfig::table_rows()) CHECK(parse_ablation(ablation_name(a)) == a);
  CHECK(parse_ablation("gdgt") == AblationConfig::full());
  CHECK_THROWS_AS(parse_ablation("everything"), ConfigError);
}
