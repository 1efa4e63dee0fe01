#include "gdgt/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "gdgt/config.hpp"

namespace gdgt {

namespace {

constexpr std::array<char, 8> kMagic{'G', 'D', 'G', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint64_t kMaxString = std::uint64_t{1} << 24;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw CheckpointError("cannot write checkpoint " + path.string());
  }

  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

  template <class T>
  void uint(T v) {
    std::array<unsigned char, sizeof(T)> b;
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b.data(), b.size());
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void string(const std::string& s) {
    uint<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }

  void finish() {
    out_.flush();
    if (!out_) throw CheckpointError("failed writing checkpoint " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw CheckpointError("cannot open checkpoint " + path.string());
  }

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated file");
  }

  template <class T>
  T uint() {
    std::array<unsigned char, sizeof(T)> b;
    bytes(b.data(), b.size());
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b[i]) << (8 * i));
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string string() {
    const auto n = uint<std::uint64_t>();
    if (n > kMaxString) fail("string length " + std::to_string(n) + " is implausible");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  [[noreturn]] void fail(const std::string& msg) const {
    throw CheckpointError("checkpoint " + path_.string() + ": " + msg);
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

GdgtConfig read_header(Reader& r) {
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) r.fail("not a GDGT checkpoint (bad magic)");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  try {
    return model_config_from_json(r.string());
  } catch (const ConfigError& e) {
    r.fail(std::string("bad embedded configuration: ") + e.what());
  }
}

GdgtModel read_body(Reader& r, const GdgtConfig& config) {
  GdgtModel model(config, 0);
  const ParameterList params = model.parameters();
  const auto count = r.uint<std::uint64_t>();
  if (count != params.size()) {
    r.fail("holds " + std::to_string(count) + " parameters, the configured model has " + std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const std::string name = r.string();
    if (name != p.name) r.fail("expected parameter " + p.name + ", found " + name);
    const auto rank = r.uint<std::uint64_t>();
    if (rank > 8) r.fail(name + ": rank " + std::to_string(rank) + " is implausible");
    Shape shape(rank);
    for (auto& d : shape) d = r.uint<std::uint64_t>();
    if (shape != p.tensor.shape()) {
      r.fail(name + ": shape " + shape_str(shape) + " does not match model " + shape_str(p.tensor.shape()));
    }
    Tensor t = p.tensor;
    for (auto& v : t.mutable_data()) v = r.f64();
  }
  if (!r.at_end()) r.fail("trailing bytes after the last parameter");
  return model;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const GdgtModel& model) {
  Writer w(path);
  w.bytes(kMagic.data(), kMagic.size());
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.string(model_config_to_json(model.config()));
  const ParameterList params = model.parameters();
  w.uint<std::uint64_t>(params.size());
  for (const auto& p : params) {
    w.string(p.name);
    w.uint<std::uint64_t>(p.tensor.ndim());
    for (auto d : p.tensor.shape()) w.uint<std::uint64_t>(d);
    for (double v : p.tensor.data()) w.f64(v);
  }
  w.finish();
}

GdgtModel load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  const GdgtConfig config = read_header(r);
  return read_body(r, config);
}

GdgtModel load_checkpoint(const std::filesystem::path& path, const GdgtConfig& expected) {
  Reader r(path);
  const GdgtConfig config = read_header(r);
  if (!(config == expected)) {
    r.fail("configuration " + model_config_to_json(config) + " does not match expected " +
           model_config_to_json(expected));
  }
  return read_body(r, config);
}

GdgtConfig read_checkpoint_config(const std::filesystem::path& path) {
  Reader r(path);
  return read_header(r);
}

}  // namespace gdgt
