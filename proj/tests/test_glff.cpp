#include <doctest.h>

#include <cmath>

#include "gdgt/glff.hpp"
#include "gdgt/ops.hpp"
#include "gdgt/random.hpp"

using namespace gdgt;

namespace {

void fill(Tensor t, double v) {
  for (auto& e : t.mutable_data()) e = v;
}

void set_identity(Tensor t, std::size_t n) {
  fill(t, 0.0);
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
}

// Depthwise kernels that pass each channel through unchanged.
void set_depthwise_identity(Tensor t, std::size_t channels) {
  fill(t, 0.0);
  auto d = t.mutable_data();
  for (std::size_t c = 0; c < channels; ++c) d[c * 9 + 4] = 1.0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

GlffParams make(std::size_t channels, std::size_t window, std::size_t heads, std::uint64_t seed) {
  Rng rng(seed);
  GlffOptions o;
  o.window = window;
  o.heads = heads;
  return GlffParams::create(channels, rng, o);
}

}  // namespace

TEST_CASE("patch grouping counts") {
  Rng rng(41);
  const TokenGroups one = patch_embed(random_normal({1, 3, 4, 4}, rng), 4);
  CHECK(one.groups() == 1);
  CHECK(one.group_size() == 16);

  const TokenGroups four = patch_embed(random_normal({2, 3, 8, 8}, rng), 4);
  CHECK(four.groups() == 4);
  CHECK(four.group_size() == 16);
  CHECK(four.tokens.shape() == Shape{2, 64, 3});

  CHECK_THROWS_AS(patch_embed(random_normal({1, 3, 6, 8}, rng), 4), ShapeError);
}

TEST_CASE("tokens of one window are contiguous") {
  std::vector<double> v(16);
  for (std::size_t i = 0; i < 16; ++i) v[i] = static_cast<double>(i);
  const TokenGroups g = patch_embed(Tensor::from_data({1, 1, 4, 4}, v), 2);
  // The first window holds pixels (0,0), (0,1), (1,0), (1,1).
  CHECK(g.tokens.at({0, 0, 0}) == 0);
  CHECK(g.tokens.at({0, 1, 0}) == 1);
  CHECK(g.tokens.at({0, 2, 0}) == 4);
  CHECK(g.tokens.at({0, 3, 0}) == 5);
  CHECK(g.tokens.at({0, 4, 0}) == 2);
}

TEST_CASE("embed then unembed is the identity") {
  Rng rng(42);
  const Tensor x = random_normal({2, 5, 8, 12}, rng);
  const TokenGroups g = patch_embed(x, 4);
  CHECK(max_abs_diff(patch_unembed(g.tokens, g), x) == 0.0);
}

TEST_CASE("one token per window attends only to itself") {
  GlffParams p = make(4, 1, 2, 43);
  Rng rng(44);
  const Tensor x = random_normal({1, 4, 2, 2}, rng);
  const TokenGroups g = patch_embed(x, 1);
  Tensor probs;
  const Tensor out = multi_head_attention(g, p, &probs);
  for (double v : probs.data()) CHECK(v == 1.0);
  const Tensor v = linear(g.tokens, p.v_weight, p.v_bias);
  CHECK(max_abs_diff(out, linear(v, p.out_weight, p.out_bias)) < 1e-14);
}

TEST_CASE("identical tokens give identical outputs") {
  GlffParams p = make(4, 2, 2, 45);
  const std::vector<double> pixel{0.3, -1.2, 0.7, 2.0};
  std::vector<double> v;
  for (double c : pixel)
    for (int i = 0; i < 4; ++i) v.push_back(c);
  const TokenGroups g = patch_embed(Tensor::from_data({1, 4, 2, 2}, v), 2);
  const Tensor out = multi_head_attention(g, p);
  for (std::size_t t = 1; t < 4; ++t)
    for (std::size_t c = 0; c < 4; ++c) CHECK(out.at({0, t, c}) == doctest::Approx(out.at({0, 0, c})).epsilon(1e-14));
}

TEST_CASE("two tokens, one head, d = 1, by hand") {
  GlffParams p = make(1, 1, 1, 46);
  fill(p.q_weight, 1.0);
  fill(p.k_weight, 1.0);
  fill(p.v_weight, 1.0);
  fill(p.out_weight, 1.0);
  // Windows are square, so the pair (1, 2) is presented twice in one 2x2
  // window. Duplicated keys leave the softmax over {q*k1, q*k2} unchanged.
  TokenGroups pair;
  pair.height = 2;
  pair.width = 2;
  pair.window = 2;
  pair.tokens = Tensor::from_data({1, 4, 1}, {1.0, 2.0, 1.0, 2.0});
  Tensor probs;
  const Tensor out = multi_head_attention(pair, p, &probs);
  // q = k = v = x, so token x attends with weights softmax([x * 1, x * 2]).
  const double e1 = std::exp(1.0), e2 = std::exp(2.0);
  const double f2 = std::exp(2.0), f4 = std::exp(4.0);
  CHECK(out.at({0, 0, 0}) == doctest::Approx((e1 * 1.0 + e2 * 2.0) / (e1 + e2)).epsilon(1e-14));
  CHECK(out.at({0, 1, 0}) == doctest::Approx((f2 * 1.0 + f4 * 2.0) / (f2 + f4)).epsilon(1e-14));
  CHECK(probs.at({0, 0, 0, 1}) == doctest::Approx(e2 / (2 * e1 + 2 * e2)).epsilon(1e-14));
}

TEST_CASE("attention rows sum to one") {
  GlffParams p = make(8, 4, 2, 47);
  Rng rng(48);
  Tensor probs;
  multi_head_attention(patch_embed(random_normal({2, 8, 8, 8}, rng, 5.0), 4), p, &probs);
  CHECK(probs.shape() == Shape{8, 2, 16, 16});
  const std::size_t rows = probs.numel() / 16;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 16; ++j) s += probs.data()[r * 16 + j];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("local branch examples") {
  GlffParams p = make(3, 2, 1, 49);
  Rng rng(50);
  const Tensor x = random_normal({1, 3, 6, 6}, rng);

  SUBCASE("zero weights") {
    for (Tensor t : {p.dw_weight, p.dw_bias, p.pw_weight, p.pw_bias}) fill(t, 0.0);
    const Tensor y = local_branch(x, p);
    for (double v : y.data()) CHECK(v == 0.0);
  }
  SUBCASE("identity kernels on non-negative input") {
    set_depthwise_identity(p.dw_weight, 3);
    set_identity(p.pw_weight, 3);
    fill(p.dw_bias, 0.0);
    fill(p.pw_bias, 0.0);
    const Tensor nonneg = relu(x);
    CHECK(max_abs_diff(local_branch(nonneg, p), nonneg) == 0.0);
  }
  SUBCASE("Laplacian kernel responds only at a step edge") {
    fill(p.dw_weight, 0.0);
    auto d = p.dw_weight.mutable_data();
    for (std::size_t c = 0; c < 3; ++c) {
      d[c * 9 + 1] = d[c * 9 + 3] = d[c * 9 + 5] = d[c * 9 + 7] = -1.0;
      d[c * 9 + 4] = 4.0;
    }
    fill(p.dw_bias, 0.0);
    set_identity(p.pw_weight, 3);
    fill(p.pw_bias, 0.0);
    // Columns 0..3 are 0, columns 4..7 are 1.
    std::vector<double> v(3 * 8 * 8, 0.0);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 4; j < 8; ++j) v[(c * 8 + i) * 8 + j] = 1.0;
    const Tensor y = local_branch(Tensor::from_data({1, 3, 8, 8}, v), p);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j) {
          const double got = y.at({0, c, i, j});
          if (j == 4) {
            CHECK(got == 1.0);  // 4*1 - 1 - 1 - 1 - 0, then relu
          } else {
            CHECK(got == 0.0);  // flat regions, and the relu clips column 3
          }
        }
  }
}

TEST_CASE("fusion examples") {
  GlffParams p = make(2, 2, 1, 51);
  Rng rng(52);
  const Tensor g = random_normal({1, 2, 4, 4}, rng), l = random_normal({1, 2, 4, 4}, rng);

  SUBCASE("equal logits average") {
    CHECK(max_abs_diff(fuse(g, l, p), scale(g + l, 0.5)) < 1e-15);
  }
  SUBCASE("saturated logits pick the global branch") {
    auto d = p.fusion_logits.mutable_data();
    d[0] = 20.0;
    d[1] = -20.0;
    CHECK(max_abs_diff(fuse(g, l, p), g) < 1e-8);
  }
  SUBCASE("ln 3 against ln 1 weighs 0.75 / 0.25") {
    auto d = p.fusion_logits.mutable_data();
    d[0] = std::log(3.0);
    d[1] = 0.0;
    const Tensor w = p.fusion_weights();
    CHECK(w.data()[0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(w.data()[1] == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("shape mismatch") { CHECK_THROWS_AS(fuse(g, random_normal({1, 2, 4, 2}, rng), p), ShapeError); }
}

TEST_CASE("fusion weights are a convex pair for any logits") {
  Rng rng(53);
  GlffOptions o;
  o.fusion = FusionWeights::per_channel;
  GlffParams p = GlffParams::create(4, rng, o);
  for (int t = 0; t < 20; ++t) {
    for (auto& v : p.fusion_logits.mutable_data()) v = 50.0 * rng.normal();
    const Tensor w = p.fusion_weights();
    for (std::size_t c = 0; c < 4; ++c) {
      const double a = w.at({0, c}), b = w.at({1, c});
      CHECK(a >= 0.0);
      CHECK(b >= 0.0);
      CHECK(std::abs(a + b - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("routing everything through an identity local branch doubles the input") {
  GlffParams p = make(4, 2, 2, 54);
  set_depthwise_identity(p.dw_weight, 4);
  set_identity(p.pw_weight, 4);
  auto d = p.fusion_logits.mutable_data();
  d[0] = -20.0;
  d[1] = 20.0;
  Rng rng(55);
  const Tensor x = relu(random_normal({1, 4, 4, 4}, rng));
  CHECK(max_abs_diff(glff_forward(x, p), scale(x, 2.0)) < 1e-8);
}

TEST_CASE("glff_forward keeps the shape and is batch equivariant") {
  GlffParams p = make(8, 4, 2, 56);
  Rng rng(57);
  const Tensor a = random_normal({1, 8, 8, 8}, rng), b = random_normal({1, 8, 8, 8}, rng);
  const Tensor ab = glff_forward(concat({a, b}, 0), p);
  const Tensor ba = glff_forward(concat({b, a}, 0), p);
  CHECK(ab.shape() == Shape{2, 8, 8, 8});
  const Tensor ya = glff_forward(a, p), yb = glff_forward(b, p);
  CHECK(max_abs_diff(slice(ab, 0, 0, 1), ya) == 0.0);
  CHECK(max_abs_diff(slice(ab, 0, 1, 1), yb) == 0.0);
  CHECK(max_abs_diff(slice(ba, 0, 0, 1), yb) == 0.0);
  CHECK(max_abs_diff(slice(ba, 0, 1, 1), ya) == 0.0);
}

TEST_CASE("plain attention block has no conv branch") {
  Rng rng(58);
  GlffOptions o;
  o.local_branch = false;
  o.window = 2;
  const GlffParams p = GlffParams::create(4, rng, o);
  ParameterList params;
  p.collect(params, "");
  CHECK(params.size() == 16);
  CHECK(glff_forward(random_normal({1, 4, 4, 4}, rng), p).shape() == Shape{1, 4, 4, 4});
  CHECK_THROWS(local_branch(random_normal({1, 4, 4, 4}, rng), p));
}
