#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gdgt/data.hpp"
#include "gdgt/image_io.hpp"
#include "gdgt/metrics.hpp"

using namespace gdgt;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "gdgt_test_cli";

struct Run {
  int code = -1;
  std::string output;
};

Run run_cli(const std::string& args) {
  fs::create_directories(kWork);
  const fs::path out = kWork / "last_output.txt";
  const std::string cmd = std::string("\"") + GDGT_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

// A two-stage 32 px model trained for one epoch on four scenes.
const char* kTinyConfig = R"({
  "model": {"input_size": 32, "stage_channels": [4, 8], "window": 2, "heads": 2},
  "train": {"epochs": 1, "batch_size": 2, "seed": 3, "ablation": {"use_glff": true, "dgd_mode": "no_dwt"}},
  "data": {"train": {"synthetic": {"count": 4, "size": 64, "seed": 7}},
           "val": {"synthetic": {"count": 2, "size": 64, "seed": 500}}},
  "output": {"checkpoint": "tiny.ckpt", "log": "tiny.log"}
})";

struct Workspace {
  Workspace() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
  ~Workspace() { fs::remove_all(kWork); }
};

}  // namespace

TEST_CASE("synth writes the requested scenes deterministically") {
  Workspace ws;
  const Run r = run_cli("synth --seed 4 --count 10 --size 64 --out \"" + (kWork / "a").string() + "\"");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto records = read_manifest(kWork / "a" / "manifest.txt");
  CHECK(records.size() == 10);
  for (const auto& rec : records) {
    CHECK(fs::exists(rec.image));
    CHECK(read_mask(rec.mask).height == 64);
  }
  REQUIRE(run_cli("synth --seed 4 --count 10 --size 64 --out \"" + (kWork / "b").string() + "\"").code == 0);
  for (const auto& entry : fs::directory_iterator(kWork / "a")) {
    CHECK_MESSAGE(slurp(entry.path()) == slurp(kWork / "b" / entry.path().filename()), entry.path().filename());
  }
  const Run small = run_cli("synth --size 32 --out \"" + (kWork / "c").string() + "\"");
  CHECK(small.code == 1);
}

TEST_CASE("usage errors exit with 1") {
  Workspace ws;
  CHECK(run_cli("").code == 1);
  CHECK(run_cli("frobnicate").code == 1);
  CHECK(run_cli("synth").code == 1);
  CHECK(run_cli("train --epochs 0").code == 1);
  CHECK(run_cli("eval").code == 1);
}

TEST_CASE("missing config file is reported with its path") {
  Workspace ws;
  const std::string path = (kWork / "nope.json").string();
  const Run r = run_cli("train --config \"" + path + "\"");
  CHECK(r.code != 0);
  CHECK(r.output.find(path) != std::string::npos);
}

TEST_CASE("help lists every flag with its default") {
  const Run r = run_cli("train --help");
  CHECK(r.code == 0);
  for (const char* s : {"--config", "--lr", "0.0006", "--epochs", "12", "--batch-size", "--seed", "--optimizer", "adam",
                        "--ablation", "full", "--data", "--val-data", "--checkpoint", "gdgt.ckpt", "--log"}) {
    CHECK_MESSAGE(r.output.find(s) != std::string::npos, s);
  }
  const Run p = run_cli("predict --help");
  CHECK(p.output.find("800") != std::string::npos);
  CHECK(p.output.find("200") != std::string::npos);
  const Run s = run_cli("synth --help");
  CHECK(s.output.find("64") != std::string::npos);
}

TEST_CASE("train, eval and predict") {
  Workspace ws;
  write(kWork / "tiny.json", kTinyConfig);
  const Run t = run_cli("train --config \"" + (kWork / "tiny.json").string() + "\"");
  REQUIRE_MESSAGE(t.code == 0, t.output);
  const std::string log = slurp(kWork / "tiny.log");
  CHECK(log.find("# tag=+GLFF+DGD(no-dwt)") == 0);
  CHECK(log.find("\nepoch=1 loss=") != std::string::npos);
  CHECK(t.output.find("epoch=1 loss=") != std::string::npos);
  REQUIRE(fs::exists(kWork / "tiny.ckpt"));

  SUBCASE("flags override the config") {
    const Run o = run_cli("train --config \"" + (kWork / "tiny.json").string() + "\" --ablation baseline --epochs 2 --log \"" +
                       (kWork / "o.log").string() + "\" --checkpoint \"" + (kWork / "o.ckpt").string() + "\"");
    REQUIRE_MESSAGE(o.code == 0, o.output);
    const std::string olog = slurp(kWork / "o.log");
    CHECK(olog.find("# tag=Baseline") == 0);
    CHECK(olog.find("epochs=2") != std::string::npos);
    CHECK(olog.find("\nepoch=2 loss=") != std::string::npos);
  }
  SUBCASE("eval dumps metrics that parse back") {
    const fs::path dump = kWork / "m.txt";
    const Run e = run_cli("eval --checkpoint \"" + (kWork / "tiny.ckpt").string() +
                       "\" --synthetic-count 2 --dump \"" + dump.string() + "\"");
    REQUIRE_MESSAGE(e.code == 0, e.output);
    CHECK(e.output.find(report_header()) != std::string::npos);
    std::string tag;
    const auto m = parse_metrics_dump(slurp(dump), &tag);
    CHECK(tag == "+GLFF+DGD(no-dwt)");
    CHECK(e.output.find(report_row(m, tag)) != std::string::npos);
    CHECK(metrics_dump(m, tag) == slurp(dump));
  }
  SUBCASE("predict at model size and on a large image") {
    const Scene small = synth_scene(3, 64);
    write_rgb_image(kWork / "small.png", tensor_to_image(small.image));
    const Run p1 = run_cli("predict --checkpoint \"" + (kWork / "tiny.ckpt").string() + "\" --image \"" +
                        (kWork / "small.png").string() + "\" --out \"" + (kWork / "small_mask.png").string() + "\"");
    REQUIRE_MESSAGE(p1.code == 0, p1.output);
    CHECK(p1.output.find("from 1 tile") != std::string::npos);
    CHECK(read_mask(kWork / "small_mask.png").width == 64);

    RgbImage big{1400, 1400, std::vector<std::uint8_t>(1400 * 1400 * 3)};
    for (std::size_t i = 0; i < big.pixels.size(); ++i) big.pixels[i] = static_cast<std::uint8_t>((i * 7919) % 251);
    write_rgb_image(kWork / "big.png", big);
    const Run p2 = run_cli("predict --checkpoint \"" + (kWork / "tiny.ckpt").string() + "\" --image \"" +
                        (kWork / "big.png").string() + "\" --out \"" + (kWork / "big_mask.png").string() + "\" --viz \"" +
                        (kWork / "viz.png").string() + "\"");
    REQUIRE_MESSAGE(p2.code == 0, p2.output);
    CHECK(p2.output.find("from 4 tile") != std::string::npos);
    const LabelMask m = read_mask(kWork / "big_mask.png");
    CHECK(m.height == 1400);
    CHECK(m.width == 1400);
    const RgbImage viz = read_rgb_image(kWork / "viz.png");
    CHECK(viz.width == 2800);
  }
  SUBCASE("unreadable image is a runtime error") {
    const Run p = run_cli("predict --checkpoint \"" + (kWork / "tiny.ckpt").string() + "\" --image \"" +
                       (kWork / "missing.png").string() + "\" --out \"" + (kWork / "x.png").string() + "\"");
    CHECK(p.code == 2);
  }
}

TEST_CASE("ablation sweep prints four rows and per-row dumps") {
  Workspace ws;
  write(kWork / "tiny.json", kTinyConfig);
  const Run r = run_cli("eval --ablation-sweep --config \"" + (kWork / "tiny.json").string() + "\" --dump \"" +
                     (kWork / "sweep.txt").string() + "\"");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const std::string table = slurp(kWork / "last_output.txt");
  const auto header = table.find(report_header());
  REQUIRE(header != std::string::npos);
  std::istringstream rows(table.substr(header));
  std::vector<std::string> lines;
  for (std::string l; std::getline(rows, l);)
    if (!l.empty() && l.rfind("epoch=", 0) != 0 && l.rfind("#", 0) != 0) lines.push_back(l);
  REQUIRE(lines.size() >= 5);
  CHECK(lines[1].rfind("Baseline", 0) == 0);
  CHECK(lines[2].rfind("+GLFF ", 0) == 0);
  CHECK(lines[3].rfind("+GLFF+DGD(no-dwt)", 0) == 0);
  CHECK(lines[4].rfind("GDGT", 0) == 0);
  for (const char* name : {"baseline", "glff", "glff_dgd_no_dwt", "full"}) {
    const fs::path dump = kWork / (std::string("sweep_") + name + ".txt");
    REQUIRE_MESSAGE(fs::exists(dump), dump);
    std::string tag;
    const auto m = parse_metrics_dump(slurp(dump), &tag);
    CHECK(metrics_dump(m, tag) == slurp(dump));
  }
}

TEST_CASE("verify passes every suite") {
  const Run r = run_cli("verify");
  CHECK_MESSAGE(r.code == 0, r.output);
  for (const char* s : {"PASS dwt_reconstruction", "PASS grad_check", "PASS metrics_oracle", "PASS tiling_coverage"})
    CHECK_MESSAGE(r.output.find(s) != std::string::npos, s);
}
