#include <doctest.h>

#include <set>

#include "gdgt/model.hpp"
#include "gdgt/ops.hpp"
#include "gdgt/random.hpp"

using namespace gdgt;

namespace {

void fill(Tensor t, double v) {
  for (auto& e : t.mutable_data()) e = v;
}

GdgtConfig small_config() {
  GdgtConfig c;
  c.input_size = 16;
  c.stage_channels = {4, 8};
  c.window = 2;
  c.heads = 2;
  return c;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace

TEST_CASE("encoder stage shapes at desk scale") {
  const GdgtModel model(GdgtConfig{}, 1);
  Rng rng(61);
  const EncoderFeatures f = model.encoder_forward(random_normal({1, 3, 64, 64}, rng));
  REQUIRE(f.stages.size() == 4);
  CHECK(f.stem.shape() == Shape{1, 16, 64, 64});
  CHECK(f.stages[0].shape() == Shape{1, 16, 32, 32});
  CHECK(f.stages[1].shape() == Shape{1, 32, 16, 16});
  CHECK(f.stages[2].shape() == Shape{1, 64, 8, 8});
  CHECK(f.stages[3].shape() == Shape{1, 128, 4, 4});
  CHECK_THROWS_AS(model.encoder_forward(random_normal({1, 3, 32, 32}, rng)), ShapeError);
}

TEST_CASE("zeroing the last conv of a residual block leaves the shortcut") {
  GdgtModel model(small_config(), 2);
  Rng rng(62);
  const Tensor x = relu(random_normal({1, 4, 8, 8}, rng));
  const ResidualBlock& block = model.encoder_stages()[0].blocks[0];
  fill(block.second.weight, 0.0);
  CHECK(bit_equal(block(x), x));
}

TEST_CASE("logits shape and batch equivariance") {
  const GdgtModel model(small_config(), 3);
  Rng rng(63);
  const Tensor a = random_normal({1, 3, 16, 16}, rng), b = random_normal({1, 3, 16, 16}, rng);
  const Tensor ab = model.forward(concat({a, b}, 0));
  CHECK(ab.shape() == Shape{2, 5, 16, 16});
  CHECK(bit_equal(slice(ab, 0, 0, 1), model.forward(a)));
  CHECK(bit_equal(slice(ab, 0, 1, 1), model.forward(b)));
}

TEST_CASE("without DGD the decoder is upsample plus skip") {
  GdgtConfig c = small_config();
  c.ablation = AblationConfig::glff();
  const GdgtModel model(c, 4);
  Rng rng(64);
  const EncoderFeatures f = model.encoder_forward(random_normal({2, 3, 16, 16}, rng));

  Tensor d = f.stages[1];
  for (std::size_t i = 2; i-- > 0;) {
    const DecoderStage& st = model.decoder_stages()[i];
    const Tensor skip = i == 0 ? f.stem : f.stages[0];
    d = upsample(st.proj(glff_forward(d, st.glff)), 2, UpsampleMode::bilinear) + skip;
  }
  const Tensor reference = upsample(conv2d(d, model.head_weight(), model.head_bias()), 1, UpsampleMode::bilinear);
  CHECK(bit_equal(model.decoder_forward(f), reference));
}

TEST_CASE("with DGD each stage runs the guided filter on the skip") {
  const GdgtModel model(small_config(), 5);
  Rng rng(65);
  const EncoderFeatures f = model.encoder_forward(random_normal({1, 3, 16, 16}, rng));
  Tensor d = f.stages[1];
  for (std::size_t i = 2; i-- > 0;) {
    const DecoderStage& st = model.decoder_stages()[i];
    const Tensor skip = i == 0 ? f.stem : f.stages[0];
    d = dgd_forward(st.proj(glff_forward(d, st.glff)), skip, st.dgd);
  }
  CHECK(bit_equal(model.decoder_forward(f), conv2d(d, model.head_weight(), model.head_bias())));
}

TEST_CASE("predict is the argmax of the logits with low-index ties") {
  const GdgtModel model(small_config(), 6);
  Rng rng(66);
  const Tensor image = random_normal({2, 3, 16, 16}, rng);
  CHECK(model.predict(image) == argmax_labels(model.forward(image)));

  std::vector<double> v(5 * 2, 0.0);
  v[3 * 2 + 0] = v[3 * 2 + 1] = 1.0;
  CHECK(argmax_labels(Tensor::from_data({1, 5, 1, 2}, v))[0].labels == std::vector<std::uint8_t>{3, 3});

  std::vector<double> tie(5 * 1, 0.0);
  tie[1] = tie[4] = 2.0;
  CHECK(argmax_labels(Tensor::from_data({1, 5, 1, 1}, tie))[0].labels[0] == 1);
  CHECK(argmax_labels(Tensor::zeros({1, 5, 1, 1}))[0].labels[0] == 0);
}

TEST_CASE("forward is deterministic") {
  Rng rng(67);
  const Tensor image = random_normal({1, 3, 16, 16}, rng);
  const GdgtModel a(small_config(), 7), b(small_config(), 7);
  CHECK(bit_equal(a.forward(image), b.forward(image)));
  CHECK(bit_equal(a.forward(image), a.forward(image)));
}

TEST_CASE("parameter count is stable for the desk configuration") {
  const GdgtModel model(GdgtConfig{}, 0);
  CHECK(model.parameter_count() == 1121717);
  CHECK(GdgtModel(GdgtConfig{}, 99).parameter_count() == 1121717);
  std::set<std::string> names;
  for (const auto& p : model.parameters()) {
    CHECK(names.insert(p.name).second);
    CHECK(p.tensor.requires_grad());
  }
}

TEST_CASE("all four ablation rows build and backpropagate") {
  Rng rng(68);
  const Tensor image = random_normal({1, 3, 16, 16}, rng);
  std::vector<std::uint8_t> labels(256);
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(5));
  std::vector<std::string> tags;
  for (const auto& ab : AblationConfig::table_rows()) {
    GdgtConfig c = small_config();
    c.ablation = ab;
    const GdgtModel model(c, 8);
    const Tensor logits = model.forward(image);
    CHECK(logits.shape() == Shape{1, 5, 16, 16});
    backward(cross_entropy(logits, labels));
    for (const auto& p : model.parameters()) CHECK_MESSAGE(p.tensor.has_grad(), p.name);
    tags.push_back(ab.tag());
  }
  CHECK(tags == std::vector<std::string>{"Baseline", "+GLFF", "+GLFF+DGD(no-dwt)", "GDGT"});
}

TEST_CASE("configuration validation") {
  GdgtConfig c;
  c.input_size = 72;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = GdgtConfig{};
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = GdgtConfig{};
  c.stage_channels = {};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_NOTHROW(GdgtConfig{}.validate());
}

TEST_CASE("the 512 configuration is constructible") {
  const GdgtConfig c = GdgtConfig::full_scale();
  CHECK(c.input_size == 512);
  CHECK_NOTHROW(c.validate());
  const GdgtModel model(c, 0);
  CHECK(model.parameter_count() > GdgtModel(GdgtConfig{}, 0).parameter_count());
  CHECK(model.config().stage_size(3) == 32);
}
