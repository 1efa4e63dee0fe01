#include "gdgt/wavelet.hpp"

#include <array>
#include <string>

namespace gdgt {

using detail::make_result;
using detail::Node;

namespace {

// Block sign patterns in (a, b, c, d) order.
constexpr std::array<std::array<double, 4>, 4> kSigns{{
    {1, 1, 1, 1},     // LL
    {-1, -1, 1, 1},   // LH
    {-1, 1, -1, 1},   // HL
    {1, -1, -1, 1},   // HH
}};

Tensor band(const Tensor& x, const std::array<double, 4>& s) {
  const auto& sh = x.shape();
  const std::size_t planes = sh[0] * sh[1], H = sh[2], W = sh[3], h = H / 2, w = W / 2;
  auto xv = x.data();
  Buffer out(planes * h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* in = xv.data() + p * H * W;
    double* o = out.data() + p * h * w;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double* top = in + 2 * i * W + 2 * j;
        const double* bot = top + W;
        o[i * w + j] = s[0] * top[0] + s[1] * top[1] + s[2] * bot[0] + s[3] * bot[1];
      }
  }
  return make_result({sh[0], sh[1], h, w}, std::move(out), {x.node()}, [s, planes, H, W, h, w](Node& n) {
    auto& parent = *n.parents[0];
    auto gx = parent.grad_buffer();
    for (std::size_t p = 0; p < planes; ++p) {
      double* gin = gx.data() + p * H * W;
      const double* g = n.grad.data() + p * h * w;
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          double* top = gin + 2 * i * W + 2 * j;
          double* bot = top + W;
          const double d = g[i * w + j];
          top[0] += s[0] * d;
          top[1] += s[1] * d;
          bot[0] += s[2] * d;
          bot[1] += s[3] * d;
        }
    }
  });
}

}  // namespace

WaveletBands haar_dwt(const Tensor& x) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeError("haar_dwt: expected BxCxHxW, got " + shape_str(s));
  if (s[2] % 2 != 0 || s[3] % 2 != 0 || s[2] == 0 || s[3] == 0) {
    throw ShapeError("haar_dwt: spatial dims must be even and non-zero, got " + shape_str(s) + " (pad first)");
  }
  return {band(x, kSigns[0]), band(x, kSigns[1]), band(x, kSigns[2]), band(x, kSigns[3])};
}

Tensor inverse_haar_dwt(const WaveletBands& bands) {
  const Shape& s = bands.ll.shape();
  for (const Tensor* t : {&bands.lh, &bands.hl, &bands.hh}) {
    if (t->shape() != s) {
      throw ShapeError("inverse_haar_dwt: band shapes differ: " + shape_str(s) + " vs " + shape_str(t->shape()));
    }
  }
  if (s.size() != 4) throw ShapeError("inverse_haar_dwt: bands must be BxCxHxW, got " + shape_str(s));
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3], W = 2 * w;
  const std::array<std::span<const double>, 4> v{bands.ll.data(), bands.lh.data(), bands.hl.data(), bands.hh.data()};
  Buffer out(planes * 4 * h * w);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t k = (p * h + i) * w + j;
        double* top = out.data() + p * 4 * h * w + 2 * i * W + 2 * j;
        double* bot = top + W;
        // The transform matrix is symmetric with orthogonal rows of norm 2,
        // so its inverse is its transpose divided by 4.
        for (std::size_t pos = 0; pos < 4; ++pos) {
          double acc = 0.0;
          for (std::size_t b = 0; b < 4; ++b) acc += kSigns[b][pos] * v[b][k];
          (pos < 2 ? top : bot)[pos % 2] = acc / 4.0;
        }
      }
  return make_result({s[0], s[1], 2 * h, W}, std::move(out),
                     {bands.ll.node(), bands.lh.node(), bands.hl.node(), bands.hh.node()},
                     [planes, h, w, W](Node& n) {
                       for (std::size_t b = 0; b < 4; ++b) {
                         if (!n.parents[b]->requires_grad) continue;
                         auto g = n.parents[b]->grad_buffer();
                         for (std::size_t p = 0; p < planes; ++p)
                           for (std::size_t i = 0; i < h; ++i)
                             for (std::size_t j = 0; j < w; ++j) {
                               const double* top = n.grad.data() + p * 4 * h * w + 2 * i * W + 2 * j;
                               const double* bot = top + W;
                               const double d = kSigns[b][0] * top[0] + kSigns[b][1] * top[1] +
                                                kSigns[b][2] * bot[0] + kSigns[b][3] * bot[1];
                               g[(p * h + i) * w + j] += d / 4.0;
                             }
                       }
                     });
}

}  // namespace gdgt
