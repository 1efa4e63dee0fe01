#include "gdgt/model.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace gdgt {

namespace {

std::size_t norm_groups(std::size_t channels) {
  for (std::size_t g = std::min<std::size_t>(8, channels); g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

}  // namespace

std::vector<LabelMask> argmax_labels(const Tensor& logits) {
  const auto& s = logits.shape();
  if (s.size() != 4) throw ShapeError("argmax_labels: expected BxKxHxW, got " + shape_str(s));
  const std::size_t B = s[0], K = s[1], HW = s[2] * s[3];
  auto v = logits.data();
  std::vector<LabelMask> out;
  for (std::size_t b = 0; b < B; ++b) {
    LabelMask m(s[2], s[3]);
    for (std::size_t p = 0; p < HW; ++p) {
      const double* z = v.data() + b * K * HW + p;
      std::size_t best = 0;
      for (std::size_t k = 1; k < K; ++k)
        if (z[k * HW] > z[best * HW]) best = k;
      m.labels[p] = static_cast<std::uint8_t>(best);
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::string AblationConfig::tag() const {
  if (use_glff && dgd_mode == DgdMode::full) return "GDGT";
  std::string t = use_glff ? "+GLFF" : "Baseline";
  if (dgd_mode == DgdMode::no_dwt) t += "+DGD(no-dwt)";
  if (dgd_mode == DgdMode::full) t += "+DGD";
  return t;
}

void GdgtConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("GdgtConfig: " + m); };
  const std::size_t n = num_stages();
  if (n == 0) fail("at least one stage is required");
  if (n > 16) fail("too many stages");
  if (in_channels == 0) fail("in_channels must be positive");
  if (num_categories < 2 || num_categories > 255) fail("num_categories must be in [2, 255]");
  if (window == 0 || heads == 0) fail("window and heads must be positive");
  if (input_size % (std::size_t{1} << n) != 0) {
    fail("input_size " + std::to_string(input_size) + " not divisible by 2^" + std::to_string(n));
  }
  if (stage_size(n - 1) < 2) fail("deepest stage would be smaller than 2x2");
  for (std::size_t i = 0; i < n; ++i) {
    if (stage_channels[i] == 0) fail("stage channels must be positive");
    if (stage_channels[i] % heads != 0) {
      fail("stage " + std::to_string(i) + " channels " + std::to_string(stage_channels[i]) + " not divisible by " +
           std::to_string(heads) + " heads");
    }
    const std::size_t s = stage_size(i), w = std::min(window, s);
    if (s % w != 0) fail("stage " + std::to_string(i) + " size " + std::to_string(s) + " not divisible by window");
  }
}

GdgtConfig GdgtConfig::full_scale() {
  GdgtConfig c;
  c.input_size = 512;
  c.stage_channels = {64, 128, 256, 512};
  c.window = 8;
  c.heads = 8;
  return c;
}

ConvNorm ConvNorm::create(std::size_t in, std::size_t out, std::size_t kernel, Rng& rng) {
  ConvNorm c;
  c.weight = kaiming_normal({out, in, kernel, kernel}, in * kernel * kernel, rng);
  c.gamma = Tensor::full({out}, 1.0, true);
  c.beta = Tensor::zeros({out}, true);
  c.groups = norm_groups(out);
  return c;
}

Tensor ConvNorm::operator()(const Tensor& x, std::size_t stride) const {
  return group_norm(conv2d(x, weight, {}, stride, weight.dim(2) / 2), groups, gamma, beta);
}

void ConvNorm::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "conv.weight", weight});
  out.push_back({prefix + "norm.gamma", gamma});
  out.push_back({prefix + "norm.beta", beta});
}

Tensor ResidualBlock::operator()(const Tensor& x) const { return relu(x + second(relu(first(x)))); }

GdgtModel::GdgtModel(GdgtConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const auto& ch = config_.stage_channels;
  const std::size_t n = config_.num_stages();
  stem_ = ConvNorm::create(config_.in_channels, ch[0], 3, rng);
  for (std::size_t i = 0; i < n; ++i) {
    EncoderStage st;
    st.down = ConvNorm::create(i == 0 ? ch[0] : ch[i - 1], ch[i], 3, rng);
    for (auto& b : st.blocks) {
      b.first = ConvNorm::create(ch[i], ch[i], 3, rng);
      b.second = ConvNorm::create(ch[i], ch[i], 3, rng);
    }
    encoder_.push_back(std::move(st));
  }
  for (std::size_t i = 0; i < n; ++i) {
    DecoderStage d;
    GlffOptions go;
    go.heads = config_.heads;
    go.window = std::min(config_.window, config_.stage_size(i));
    go.fusion = config_.fusion;
    go.local_branch = config_.ablation.use_glff;
    d.glff = GlffParams::create(ch[i], rng, go);
    const std::size_t skip = i == 0 ? ch[0] : ch[i - 1];
    d.proj = ConvNorm::create(ch[i], skip, 1, rng);
    if (config_.ablation.dgd_mode != DgdMode::off) {
      DgdOptions o;
      o.guide = config_.ablation.dgd_mode == DgdMode::full ? GuideSource::wavelet : GuideSource::strided_conv;
      o.form = config_.dgd_form;
      o.upsample = config_.dgd_upsample;
      d.dgd = DgdParams::create(skip, rng, o);
    }
    decoder_.push_back(std::move(d));
  }
  head_weight_ = fan_in_uniform({config_.num_categories, ch[0], 1, 1}, ch[0], rng);
  head_bias_ = Tensor::zeros({config_.num_categories}, true);
}

EncoderFeatures GdgtModel::encoder_forward(const Tensor& image) const {
  const auto& s = image.shape();
  const std::size_t S = config_.input_size;
  if (s.size() != 4 || s[1] != config_.in_channels || s[2] != S || s[3] != S) {
    throw ShapeError("encoder_forward: expected Bx" + std::to_string(config_.in_channels) + "x" + std::to_string(S) +
                     "x" + std::to_string(S) + " image, got " + shape_str(s));
  }
  EncoderFeatures f;
  f.stem = relu(stem_(image));
  Tensor x = f.stem;
  for (const auto& st : encoder_) {
    x = relu(st.down(x, 2));
    for (const auto& b : st.blocks) x = b(x);
    f.stages.push_back(x);
  }
  return f;
}

Tensor GdgtModel::decoder_forward(const EncoderFeatures& features) const {
  const std::size_t n = config_.num_stages();
  if (features.stages.size() != n || !features.stem.defined()) {
    throw ShapeError("decoder_forward: expected " + std::to_string(n) + " stage features and a stem feature");
  }
  Tensor d = features.stages[n - 1];
  for (std::size_t i = n; i-- > 0;) {
    const DecoderStage& st = decoder_[i];
    d = glff_forward(d, st.glff);
    const Tensor& skip = i == 0 ? features.stem : features.stages[i - 1];
    Tensor p = st.proj(d);
    if (config_.ablation.dgd_mode == DgdMode::off) {
      if (skip.shape() != Shape{p.dim(0), p.dim(1), 2 * p.dim(2), 2 * p.dim(3)}) {
        throw ShapeError("decoder_forward: skip " + shape_str(skip.shape()) + " does not match " + shape_str(p.shape()));
      }
      d = upsample(p, 2, config_.dgd_upsample) + skip;
    } else {
      d = dgd_forward(p, skip, st.dgd);
    }
  }
  Tensor logits = conv2d(d, head_weight_, head_bias_);
  return upsample(logits, config_.input_size / logits.dim(2), UpsampleMode::bilinear);
}

std::vector<LabelMask> GdgtModel::predict(const Tensor& image) const { return argmax_labels(forward(image)); }

ParameterList GdgtModel::parameters() const {
  ParameterList out;
  stem_.collect(out, "encoder.stem.");
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const std::string p = "encoder.stage" + std::to_string(i) + ".";
    encoder_[i].down.collect(out, p + "down.");
    for (std::size_t b = 0; b < 2; ++b) {
      const std::string bp = p + "block" + std::to_string(b) + ".";
      encoder_[i].blocks[b].first.collect(out, bp + "0.");
      encoder_[i].blocks[b].second.collect(out, bp + "1.");
    }
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const std::string p = "decoder.stage" + std::to_string(i) + ".";
    decoder_[i].glff.collect(out, p + "glff.");
    decoder_[i].proj.collect(out, p + "proj.");
    if (config_.ablation.dgd_mode != DgdMode::off) decoder_[i].dgd.collect(out, p + "dgd.");
  }
  out.push_back({"head.weight", head_weight_});
  out.push_back({"head.bias", head_bias_});
  std::set<std::string> names;
  for (const auto& p : out)
    if (!names.insert(p.name).second) throw std::logic_error("duplicate parameter name " + p.name);
  return out;
}

std::size_t GdgtModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

}  // namespace gdgt
