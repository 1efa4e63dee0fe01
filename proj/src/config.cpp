#include "gdgt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gdgt {

using nlohmann::json;

namespace {

// Reads one JSON object, rejecting keys it does not know.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail("expected an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!known_.count(key)) fail("unknown key \"" + key + "\"");
    }
  }

  const json* find(const std::string& key) {
    known_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seeds and sizes share one reader");
  void read(const std::string& key, std::uint64_t& out) {
    if (auto v = find(key)) {
      if (!v->is_number_unsigned()) fail(key + " must be a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void read(const std::string& key, double& out) {
    if (auto v = find(key)) {
      if (!v->is_number()) fail(key + " must be a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (auto v = find(key)) {
      if (!v->is_boolean()) fail(key + " must be true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::filesystem::path& out) {
    if (auto v = find(key)) out = string(key, *v);
  }
  template <class E>
  void read_enum(const std::string& key, E& out, std::initializer_list<std::pair<const char*, E>> names) {
    const json* v = find(key);
    if (!v) return;
    const std::string s = string(key, *v);
    std::string options;
    for (const auto& [name, value] : names) {
      if (s == name) {
        out = value;
        return;
      }
      options += options.empty() ? name : std::string(", ") + name;
    }
    fail(key + " must be one of " + options + ", got \"" + s + "\"");
  }

  std::string string(const std::string& key, const json& v) {
    if (!v.is_string()) fail(key + " must be a string");
    return v.get<std::string>();
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where_ + ": " + msg); }
  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> known_;
};

constexpr std::initializer_list<std::pair<const char*, FusionWeights>> kFusionNames{
    {"scalar", FusionWeights::scalar}, {"per_channel", FusionWeights::per_channel}};
constexpr std::initializer_list<std::pair<const char*, CoefficientForm>> kFormNames{
    {"printed", CoefficientForm::printed}, {"classical", CoefficientForm::classical}};
constexpr std::initializer_list<std::pair<const char*, UpsampleMode>> kUpsampleNames{
    {"bilinear", UpsampleMode::bilinear}, {"nearest", UpsampleMode::nearest}};
constexpr std::initializer_list<std::pair<const char*, DgdMode>> kDgdNames{
    {"off", DgdMode::off}, {"no_dwt", DgdMode::no_dwt}, {"full", DgdMode::full}};
constexpr std::initializer_list<std::pair<const char*, OptimizerKind>> kOptimizerNames{
    {"adam", OptimizerKind::adam}, {"sgd", OptimizerKind::sgd}};
constexpr std::initializer_list<std::pair<const char*, LrSchedule>> kScheduleNames{
    {"constant", LrSchedule::constant}, {"cosine", LrSchedule::cosine}};

template <class E>
std::string name_of(E value, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [name, v] : names)
    if (v == value) return name;
  throw std::logic_error("unnamed enum value");
}

json ablation_json(const AblationConfig& a) {
  return {{"use_glff", a.use_glff}, {"dgd_mode", name_of(a.dgd_mode, kDgdNames)}};
}

void read_ablation(const json& j, const std::string& where, AblationConfig& a) {
  Section s(j, where);
  s.read("use_glff", a.use_glff);
  s.read_enum("dgd_mode", a.dgd_mode, kDgdNames);
}

json model_json(const GdgtConfig& c) {
  return {{"input_size", c.input_size},
          {"in_channels", c.in_channels},
          {"stage_channels", c.stage_channels},
          {"num_categories", c.num_categories},
          {"window", c.window},
          {"heads", c.heads},
          {"fusion", name_of(c.fusion, kFusionNames)},
          {"dgd_form", name_of(c.dgd_form, kFormNames)},
          {"dgd_upsample", name_of(c.dgd_upsample, kUpsampleNames)}};
}

void read_model(const json& j, const std::string& where, GdgtConfig& c, bool with_ablation) {
  Section s(j, where);
  s.read("input_size", c.input_size);
  s.read("in_channels", c.in_channels);
  if (auto v = s.find("stage_channels")) {
    if (!v->is_array() || v->empty()) s.fail("stage_channels must be a non-empty array");
    c.stage_channels.clear();
    for (const auto& e : *v) {
      if (!e.is_number_unsigned()) s.fail("stage_channels entries must be non-negative integers");
      c.stage_channels.push_back(e.get<std::size_t>());
    }
  }
  s.read("num_categories", c.num_categories);
  s.read("window", c.window);
  s.read("heads", c.heads);
  s.read_enum("fusion", c.fusion, kFusionNames);
  s.read_enum("dgd_form", c.dgd_form, kFormNames);
  s.read_enum("dgd_upsample", c.dgd_upsample, kUpsampleNames);
  if (with_ablation) {
    if (auto v = s.find("ablation")) read_ablation(*v, where + ".ablation", c.ablation);
  }
}

json dataset_json(const DatasetSpec& d) {
  json j{{"synthetic", {{"count", d.synthetic.count}, {"size", d.synthetic.size}, {"seed", d.synthetic.seed}}}};
  if (d.uses_manifest()) j["manifest"] = d.manifest.string();
  return j;
}

void read_dataset(const json& j, const std::string& where, DatasetSpec& d) {
  Section s(j, where);
  s.read("manifest", d.manifest);
  if (auto v = s.find("synthetic")) {
    Section syn(*v, where + ".synthetic");
    syn.read("count", d.synthetic.count);
    syn.read("size", d.synthetic.size);
    syn.read("seed", d.synthetic.seed);
  }
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  const json j = parse_json(text);
  RunConfig rc;
  Section top(j, "config");
  if (auto v = top.find("model")) read_model(*v, "model", rc.model, false);
  if (auto v = top.find("train")) {
    Section s(*v, "train");
    TrainConfig& t = rc.train;
    s.read("lr", t.lr);
    s.read("epochs", t.epochs);
    s.read("batch_size", t.batch_size);
    s.read("seed", t.seed);
    s.read_enum("optimizer", t.optimizer, kOptimizerNames);
    s.read_enum("schedule", t.schedule, kScheduleNames);
    if (auto a = s.find("ablation")) read_ablation(*a, "train.ablation", t.ablation);
    if (auto r = s.find("scale_ratios")) {
      if (!r->is_array()) s.fail("scale_ratios must be an array");
      t.scale_ratios.clear();
      for (const auto& e : *r) {
        if (!e.is_number()) s.fail("scale_ratios entries must be numbers");
        t.scale_ratios.push_back(e.get<double>());
      }
    }
    s.read("tile_size", t.tile_size);
    s.read("overlap", t.overlap);
  }
  if (auto v = top.find("data")) {
    Section s(*v, "data");
    if (auto d = s.find("train")) read_dataset(*d, "data.train", rc.train.train_data);
    if (auto d = s.find("val")) read_dataset(*d, "data.val", rc.train.val_data);
  }
  if (auto v = top.find("output")) {
    Section s(*v, "output");
    s.read("checkpoint", rc.checkpoint);
    s.read("log", rc.log);
  }
  rc.model.ablation = rc.train.ablation;
  return rc;
}

std::string serialize_run_config(const RunConfig& rc) {
  const TrainConfig& t = rc.train;
  json j;
  j["model"] = model_json(rc.model);
  j["train"] = {{"lr", t.lr},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"seed", t.seed},
                {"optimizer", name_of(t.optimizer, kOptimizerNames)},
                {"schedule", name_of(t.schedule, kScheduleNames)},
                {"ablation", ablation_json(t.ablation)},
                {"scale_ratios", t.scale_ratios},
                {"tile_size", t.tile_size},
                {"overlap", t.overlap}};
  j["data"] = {{"train", dataset_json(t.train_data)}, {"val", dataset_json(t.val_data)}};
  j["output"] = {{"checkpoint", rc.checkpoint.string()}, {"log", rc.log.string()}};
  return j.dump(2) + "\n";
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig rc;
  try {
    rc = parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  resolve(rc.train.train_data.manifest);
  resolve(rc.train.val_data.manifest);
  resolve(rc.checkpoint);
  resolve(rc.log);
  return rc;
}

std::string model_config_to_json(const GdgtConfig& config) {
  json j = model_json(config);
  j["ablation"] = ablation_json(config.ablation);
  return j.dump();
}

GdgtConfig model_config_from_json(const std::string& text) {
  GdgtConfig c;
  read_model(parse_json(text), "model", c, true);
  return c;
}

AblationConfig parse_ablation(const std::string& name) {
  if (name == "baseline") return AblationConfig::baseline();
  if (name == "glff") return AblationConfig::glff();
  if (name == "glff_dgd_no_dwt" || name == "no_dwt") return AblationConfig::glff_dgd_no_dwt();
  if (name == "full" || name == "gdgt") return AblationConfig::full();
  throw ConfigError("unknown ablation \"" + name + "\" (expected baseline, glff, glff_dgd_no_dwt or full)");
}

std::string ablation_name(const AblationConfig& a) {
  if (a == AblationConfig::baseline()) return "baseline";
  if (a == AblationConfig::glff()) return "glff";
  if (a == AblationConfig::glff_dgd_no_dwt()) return "glff_dgd_no_dwt";
  if (a == AblationConfig::full()) return "full";
  return ablation_json(a).dump();
}

}  // namespace gdgt
