#include <doctest.h>

#include <cmath>

#include "gdgt/ops.hpp"
#include "gdgt/random.hpp"
#include "gdgt/wavelet.hpp"

using namespace gdgt;

namespace {

Tensor block(double a, double b, double c, double d) { return Tensor::from_data({1, 1, 2, 2}, {a, b, c, d}); }

void check_bands(const WaveletBands& w, double ll, double lh, double hl, double hh) {
  CHECK(w.ll.item() == ll);
  CHECK(w.lh.item() == lh);
  CHECK(w.hl.item() == hl);
  CHECK(w.hh.item() == hh);
}

}  // namespace

TEST_CASE("constant block keeps only the low band") { check_bands(haar_dwt(block(1, 1, 1, 1)), 4, 0, 0, 0); }

TEST_CASE("hand-substituted blocks") {
  check_bands(haar_dwt(block(1, 2, 3, 4)), 10, 4, 2, 0);
  check_bands(haar_dwt(block(0, 0, 0, 1)), 1, 1, 1, 1);
}

TEST_CASE("inverse examples") {
  const Tensor back = inverse_haar_dwt(haar_dwt(block(1, 2, 3, 4)));
  CHECK(std::vector<double>(back.data().begin(), back.data().end()) == std::vector<double>{1, 2, 3, 4});

  const Tensor z = Tensor::zeros({1, 1, 1, 1});
  const Tensor dc = inverse_haar_dwt({Tensor::full({1, 1, 1, 1}, 4.0), z, z, z});
  for (double v : dc.data()) CHECK(v == 1.0);
}

TEST_CASE("bands are laid out per 2x2 block") {
  // Two blocks side by side with different contents.
  const Tensor x = Tensor::from_data({1, 1, 2, 4}, {1, 2, 0, 0, 3, 4, 0, 1});
  const WaveletBands w = haar_dwt(x);
  CHECK(w.ll.shape() == Shape{1, 1, 1, 2});
  CHECK(w.ll.at({0, 0, 0, 0}) == 10);
  CHECK(w.lh.at({0, 0, 0, 0}) == 4);
  CHECK(w.ll.at({0, 0, 0, 1}) == 1);
  CHECK(w.hh.at({0, 0, 0, 1}) == 1);
}

TEST_CASE("odd sizes and inconsistent bands are rejected") {
  CHECK_THROWS_AS(haar_dwt(Tensor::zeros({1, 1, 3, 4})), ShapeError);
  CHECK_THROWS_AS(haar_dwt(Tensor::zeros({1, 1, 4, 5})), ShapeError);
  const Tensor a = Tensor::zeros({1, 1, 2, 2}), b = Tensor::zeros({1, 1, 2, 3});
  CHECK_THROWS_AS(inverse_haar_dwt({a, a, b, a}), ShapeError);
}

TEST_CASE("integer round trip is exact and floats are within 1e-12") {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(2 * 3 * 8 * 8);
    for (auto& e : v) e = static_cast<double>(static_cast<int>(rng.below(2001)) - 1000);
    const Tensor x = Tensor::from_data({2, 3, 8, 8}, v);
    const Tensor back = inverse_haar_dwt(haar_dwt(x));
    for (std::size_t i = 0; i < v.size(); ++i) REQUIRE(back.data()[i] == v[i]);
  }
  const Tensor x = random_normal({1, 2, 8, 8}, rng, 10.0);
  const Tensor back = inverse_haar_dwt(haar_dwt(x));
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(back.data()[i] - x.data()[i]) < 1e-12);
}

TEST_CASE("linearity") {
  Rng rng(22);
  const Tensor x = random_normal({1, 2, 6, 4}, rng), y = random_normal({1, 2, 6, 4}, rng);
  const double a = 1.7, b = -0.3;
  const WaveletBands lhs = haar_dwt(scale(x, a) + scale(y, b));
  const WaveletBands wx = haar_dwt(x), wy = haar_dwt(y);
  auto close = [&](const Tensor& got, const Tensor& bx, const Tensor& by) {
    for (std::size_t i = 0; i < got.numel(); ++i)
      CHECK(std::abs(got.data()[i] - (a * bx.data()[i] + b * by.data()[i])) < 1e-12);
  };
  close(lhs.ll, wx.ll, wy.ll);
  close(lhs.lh, wx.lh, wy.lh);
  close(lhs.hl, wx.hl, wy.hl);
  close(lhs.hh, wx.hh, wy.hh);
}

TEST_CASE("band energy is four times the input energy") {
  Rng rng(23);
  const Tensor x = random_normal({2, 2, 8, 8}, rng);
  double in = 0.0, out = 0.0;
  for (double v : x.data()) in += v * v;
  const WaveletBands w = haar_dwt(x);
  for (const Tensor* b : {&w.ll, &w.lh, &w.hl, &w.hh})
    for (double v : b->data()) out += v * v;
  CHECK(out == doctest::Approx(4.0 * in).epsilon(1e-13));
}
