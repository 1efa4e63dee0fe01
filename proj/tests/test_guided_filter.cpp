#include <doctest.h>

#include <cmath>

#include "gdgt/guided_filter.hpp"
#include "gdgt/ops.hpp"
#include "gdgt/random.hpp"

using namespace gdgt;

namespace {

void fill(Tensor t, double v) {
  for (auto& e : t.mutable_data()) e = v;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Guide conv that outputs the constant `value` on every channel.
void constant_guide(DgdParams& p, double value) {
  fill(p.guide_weight, 0.0);
  fill(p.guide_bias, value);
}

}  // namespace

TEST_CASE("default parameters") {
  Rng rng(31);
  const DgdParams p = DgdParams::create(3, rng);
  CHECK(p.guide_weight.shape() == Shape{3, 12, 1, 1});
  CHECK(p.mean_weight.shape() == Shape{3, 1, 3, 3});
  const Tensor eps = p.epsilon();
  for (double e : eps.data()) CHECK(e == doctest::Approx(1e-2).epsilon(1e-12));
  CHECK(p.alpha.item() == 1.0);
  CHECK(p.beta.item() == 1.0);
  double taps = 0.0;
  for (std::size_t i = 0; i < 9; ++i) taps += p.mean_weight.data()[i];
  CHECK(taps == 1.0);
  CHECK_THROWS(DgdParams::create(3, rng).set_epsilon(0.0));
}

TEST_CASE("build_guide examples") {
  Rng rng(32);
  DgdParams p = DgdParams::create(2, rng);
  const Tensor x_res = random_normal({1, 2, 6, 8}, rng);
  const WaveletBands bands = haar_dwt(x_res);

  SUBCASE("zero conv gives a zero guide") {
    fill(p.guide_weight, 0.0);
    const Tensor guide = build_guide(bands, p);
    for (double v : guide.data()) CHECK(v == 0.0);
  }
  SUBCASE("LL times 0.25 is the 2x2 block mean") {
    fill(p.guide_weight, 0.0);
    auto w = p.guide_weight.mutable_data();
    for (std::size_t c = 0; c < 2; ++c) w[c * 8 + c] = 0.25;
    const Tensor y = build_guide(bands, p);
    REQUIRE(y.shape() == Shape{1, 2, 3, 4});
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
          const double m = (x_res.at({0, c, 2 * i, 2 * j}) + x_res.at({0, c, 2 * i, 2 * j + 1}) +
                            x_res.at({0, c, 2 * i + 1, 2 * j}) + x_res.at({0, c, 2 * i + 1, 2 * j + 1})) /
                           4.0;
          CHECK(y.at({0, c, i, j}) == doctest::Approx(m).epsilon(1e-14));
        }
  }
  SUBCASE("identity on the first C channels selects LL") {
    fill(p.guide_weight, 0.0);
    auto w = p.guide_weight.mutable_data();
    for (std::size_t c = 0; c < 2; ++c) w[c * 8 + c] = 1.0;
    CHECK(max_abs_diff(build_guide(bands, p), bands.ll) == 0.0);
  }
  SUBCASE("channel mismatch") {
    const DgdParams other = DgdParams::create(3, rng);
    CHECK_THROWS_AS(build_guide(bands, other), ShapeError);
  }
}

TEST_CASE("learnable mean at initialization") {
  Rng rng(33);
  DgdParams p = DgdParams::create(1, rng);
  const Tensor c = learnable_mean(Tensor::full({1, 1, 5, 4}, 0.75), p);
  for (double v : c.data()) CHECK(v == doctest::Approx(0.75).epsilon(1e-15));

  std::vector<double> v(9);
  for (int i = 0; i < 9; ++i) v[i] = i + 1;
  const Tensor m = learnable_mean(Tensor::from_data({1, 1, 3, 3}, v), p);
  CHECK(m.at({0, 0, 1, 1}) == doctest::Approx(5.0).epsilon(1e-15));

  fill(p.mean_weight, 0.0);
  const Tensor zero = learnable_mean(Tensor::from_data({1, 1, 3, 3}, v), p);
  for (double e : zero.data()) CHECK(e == 0.0);
}

TEST_CASE("local statistics examples") {
  Rng rng(34);
  const DgdParams p = DgdParams::create(2, rng);
  const Tensor y = random_normal({1, 2, 5, 5}, rng);

  const auto constant_x = local_statistics(Tensor::full({1, 2, 5, 5}, 1.5), y, p);
  for (double v : constant_x.sigma_xy.data()) CHECK(std::abs(v) < 1e-12);

  const auto same = local_statistics(y, y, p);
  CHECK(max_abs_diff(same.sigma_xy, same.sigma_y) < 1e-12);

  DgdOptions o;
  o.mean_kernel = 1;
  const DgdParams k1 = DgdParams::create(2, rng, o);
  const auto single = local_statistics(random_normal({1, 2, 5, 5}, rng), y, k1);
  for (double v : single.sigma_xy.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(local_statistics(Tensor::zeros({1, 2, 4, 4}), y, p), ShapeError);
}

TEST_CASE("guided coefficient examples") {
  Rng rng(35);
  DgdParams p = DgdParams::create(2, rng);
  const Shape s{1, 2, 3, 3};
  LocalStatistics st;
  st.mu_x = random_normal(s, rng);
  st.mu_y = random_normal(s, rng);
  st.sigma_y = add_scalar(scale(random_normal(s, rng), 0.1), 1.0);

  SUBCASE("zero covariance") {
    st.sigma_xy = Tensor::zeros(s);
    const auto c = guided_coefficients(st, p);
    for (double v : c.a.data()) CHECK(v == 0.0);
    CHECK(max_abs_diff(c.b, st.mu_y) == 0.0);
  }
  SUBCASE("covariance equal to variance with a vanishing regularizer") {
    st.sigma_xy = st.sigma_y;
    p.set_epsilon(1e-14);
    const auto c = guided_coefficients(st, p);
    for (double v : c.a.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(max_abs_diff(c.b, st.mu_y - st.mu_x) < 1e-12);
  }
  SUBCASE("large regularizer") {
    st.sigma_xy = random_normal(s, rng);
    p.set_epsilon(1e6);
    const auto c = guided_coefficients(st, p);
    for (double v : c.a.data()) CHECK(std::abs(v) < 1e-5);
    CHECK(max_abs_diff(c.b, st.mu_y) < 1e-4);
  }
  SUBCASE("classical form swaps the mean roles") {
    st.sigma_xy = random_normal(s, rng);
    p.options.form = CoefficientForm::classical;
    const auto c = guided_coefficients(st, p);
    CHECK(max_abs_diff(c.b, st.mu_x - c.a * st.mu_y) == 0.0);
  }
}

TEST_CASE("dgd_forward examples") {
  Rng rng(36);
  DgdParams p = DgdParams::create(2, rng);
  const Tensor x_dec = random_normal({1, 2, 4, 4}, rng);
  const Tensor x_res = random_normal({1, 2, 8, 8}, rng);

  SUBCASE("pure skip needs alpha 0, beta 1 and a zero guide") {
    fill(p.alpha, 0.0);
    constant_guide(p, 0.0);
    CHECK(max_abs_diff(dgd_forward(x_dec, x_res, p), x_res) == 0.0);
  }
  SUBCASE("with a nonzero guide the offset survives alpha 0") {
    fill(p.alpha, 0.0);
    const auto t = dgd_trace(x_dec, x_res, p);
    CHECK(max_abs_diff(t.z, upsample(t.coeffs.b, 2, UpsampleMode::bilinear) + x_res) < 1e-12);
  }
  SUBCASE("alpha 1, beta 0, zero covariance gives up(mu_Y)") {
    fill(p.beta, 0.0);
    constant_guide(p, 0.5);
    const auto t = dgd_trace(x_dec, x_res, p);
    for (double v : t.coeffs.a.data()) CHECK(std::abs(v) < 1e-12);
    CHECK(max_abs_diff(t.z, upsample(t.stats.mu_y, 2, UpsampleMode::bilinear)) < 1e-12);
    for (double v : t.z.data()) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("shape contract") {
    CHECK(dgd_forward(x_dec, x_res, p).shape() == x_res.shape());
    CHECK_THROWS_AS(dgd_forward(x_dec, random_normal({1, 2, 8, 6}, rng), p), ShapeError);
    CHECK_THROWS_AS(dgd_forward(random_normal({1, 3, 4, 4}, rng), random_normal({1, 3, 8, 8}, rng), p), ShapeError);
  }
}

TEST_CASE("huge regularizer leaves up(mu_Y) + beta * X_res") {
  Rng rng(37);
  DgdParams p = DgdParams::create(3, rng);
  p.set_epsilon(1e9);
  fill(p.beta, 0.8);
  const Tensor x_dec = random_normal({2, 3, 4, 4}, rng);
  const Tensor x_res = random_normal({2, 3, 8, 8}, rng);
  const auto t = dgd_trace(x_dec, x_res, p);
  const Tensor expected = upsample(t.stats.mu_y, 2, UpsampleMode::bilinear) + scale(x_res, 0.8);
  CHECK(max_abs_diff(t.z, expected) < 1e-5);
}

TEST_CASE("constant guide gives A identically zero at box-filter init") {
  Rng rng(38);
  DgdParams p = DgdParams::create(2, rng);
  // Powers of two keep c * x exact, so f(XY) and mu_X * mu_Y round identically.
  for (double c : {0.25, 0.5, 1.0, 2.0, -4.0}) {
    constant_guide(p, c);
    const auto t = dgd_trace(random_normal({1, 2, 4, 4}, rng), random_normal({1, 2, 8, 8}, rng), p);
    for (double v : t.coeffs.a.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("Z is affine in alpha and beta") {
  Rng rng(39);
  DgdParams p = DgdParams::create(2, rng);
  const Tensor x_dec = random_normal({1, 2, 4, 4}, rng);
  const Tensor x_res = random_normal({1, 2, 8, 8}, rng);
  auto z = [&](double a, double b) {
    fill(p.alpha, a);
    fill(p.beta, b);
    return dgd_forward(x_dec, x_res, p);
  };
  const Tensor t2 = z(0, 0);
  const Tensor t1 = z(1, 0) - t2;
  const Tensor t3 = z(0, 1) - t2;
  const Tensor got = z(0.7, -1.3);
  const Tensor want = scale(t1, 0.7) + t2 + scale(t3, -1.3);
  CHECK(max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("guide without wavelets") {
  Rng rng(40);
  DgdOptions o;
  o.guide = GuideSource::strided_conv;
  DgdParams p = DgdParams::create(2, rng, o);
  const DgdParams w = DgdParams::create(2, rng);
  const Tensor x_res = random_normal({1, 2, 8, 6}, rng);
  CHECK(build_no_dwt_guide(x_res, p).shape() == build_guide(haar_dwt(x_res), w).shape());
  CHECK_THROWS_AS(build_guide(haar_dwt(x_res), p), ShapeError);

  // Y = 0 makes A = 0 and b = mu_Y = 0, so only beta * X_res remains.
  constant_guide(p, 0.0);
  const Tensor x_dec = random_normal({1, 2, 4, 3}, rng);
  CHECK(max_abs_diff(dgd_forward(x_dec, x_res, p), x_res) == 0.0);
}
