#include "gdgt/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace gdgt {

using detail::make_result;
using detail::Node;
using detail::NodePtr;

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

// Gradient buffer of parent `i`, or an empty span when it needs none.
std::span<double> pgrad(Node& out, std::size_t i) {
  auto& p = *out.parents[i];
  if (!p.requires_grad) return {};
  return p.grad_buffer();
}

const Buffer& pval(const Node& out, std::size_t i) { return out.parents[i]->value; }

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t n = 1;
  for (std::size_t i = from; i < to; ++i) n *= s[i];
  return n;
}

// ---------------------------------------------------------------------------
// Broadcasting binary ops

struct Broadcast {
  enum Kind { same, scalar, channel } kind = same;
  std::size_t inner = 1;
  std::size_t channels = 1;

  std::size_t index(std::size_t i) const {
    switch (kind) {
      case same: return i;
      case scalar: return 0;
      case channel: return (i / inner) % channels;
    }
    return 0;
  }
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast bc;
  if (a == b) return bc;
  if (shape_numel(b) == 1) {
    bc.kind = Broadcast::scalar;
    return bc;
  }
  std::size_t len = 0;
  bool as_4d_channel = false;
  if (b.size() == 1) {
    len = b[0];
  } else if (b.size() == 4 && b[0] == 1 && b[2] == 1 && b[3] == 1) {
    len = b[1];
    as_4d_channel = true;
  }
  if (len > 0) {
    if (a.size() == 4 && a[1] == len) {
      bc.kind = Broadcast::channel;
      bc.inner = a[2] * a[3];
      bc.channels = len;
      return bc;
    }
    if (!as_4d_channel && !a.empty() && a.back() == len) {
      bc.kind = Broadcast::channel;
      bc.inner = 1;
      bc.channels = len;
      return bc;
    }
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " + shape_str(a));
}

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  Broadcast bc = plan_broadcast(a.shape(), b.shape(), name);
  auto av = a.data();
  auto bv = b.data();
  Buffer out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[bc.index(i)]);
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [bc, da, db](Node& n) {
    const auto& x = pval(n, 0);
    const auto& y = pval(n, 1);
    auto gx = pgrad(n, 0);
    auto gy = pgrad(n, 1);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const std::size_t j = bc.index(i);
      if (!gx.empty()) gx[i] += n.grad[i] * da(x[i], y[j]);
      if (!gy.empty()) gy[j] += n.grad[i] * db(x[i], y[j]);
    }
  });
}

// Unary op with derivative expressed through input x and output y.
template <class F, class D>
Tensor unary(const Tensor& x, F f, D d) {
  auto xv = x.data();
  Buffer out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), {x.node()}, [d](Node& n) {
    auto gx = pgrad(n, 0);
    const auto& xs = pval(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i] * d(xs[i], n.value[i]);
  });
}

// ---------------------------------------------------------------------------
// Convolution helpers

struct ConvGeom {
  std::size_t batch, in_ch, h, w, out_ch, k, stride, pad, groups, oh, ow;
  std::size_t in_per_group() const { return in_ch / groups; }
  std::size_t out_per_group() const { return out_ch / groups; }
  std::size_t patch() const { return in_per_group() * k * k; }
  std::size_t pixels() const { return oh * ow; }
};

void im2col(const double* x, const ConvGeom& g, double* col) {
  const std::size_t P = g.pixels();
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.in_per_group(); ++c) {
    const double* xc = x + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = col + ((c * g.k + ki) * g.k + kj) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - pad;
          double* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = xc + iy * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - pad;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const double* col, const ConvGeom& g, double* x) {
  const std::size_t P = g.pixels();
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.in_per_group(); ++c) {
    double* xc = x + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = col + ((c * g.k + ki) * g.k + kj) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const double* src = row + oy * g.ow;
          double* dst = xc + iy * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeom& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

Tensor conv_general(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvGeom& g) {
  const auto xv = input.data();
  const auto wv = weight.data();
  const std::size_t P = g.pixels(), KK = g.patch(), Og = g.out_per_group(), Cg = g.in_per_group();
  Buffer out(g.batch * g.out_ch * P);
  Buffer col(is_pointwise(g) ? 0 : KK * P);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      const double* x = xv.data() + (b * g.in_ch + grp * Cg) * g.h * g.w;
      const double* cols = x;
      if (!is_pointwise(g)) {
        im2col(x, g, col.data());
        cols = col.data();
      }
      MapR y(out.data() + (b * g.out_ch + grp * Og) * P, Og, P);
      y.noalias() = CMapR(wv.data() + grp * Og * KK, Og, KK) * CMapR(cols, KK, P);
    }
  }
  if (bias.defined()) {
    const auto bv = bias.data();
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t o = 0; o < g.out_ch; ++o) {
        double* y = out.data() + (b * g.out_ch + o) * P;
        for (std::size_t i = 0; i < P; ++i) y[i] += bv[o];
      }
  }
  std::vector<NodePtr> parents{input.node(), weight.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return make_result({g.batch, g.out_ch, g.oh, g.ow}, std::move(out), std::move(parents), [g](Node& n) {
    const auto& xv = pval(n, 0);
    const auto& wv = pval(n, 1);
    auto gx = pgrad(n, 0);
    auto gw = pgrad(n, 1);
    const std::size_t P = g.pixels(), KK = g.patch(), Og = g.out_per_group(), Cg = g.in_per_group();
    Buffer col(KK * P), dcol(KK * P);
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (std::size_t grp = 0; grp < g.groups; ++grp) {
        const double* x = xv.data() + (b * g.in_ch + grp * Cg) * g.h * g.w;
        CMapR dy(n.grad.data() + (b * g.out_ch + grp * Og) * P, Og, P);
        if (!gw.empty()) {
          const double* cols = x;
          if (!is_pointwise(g)) {
            im2col(x, g, col.data());
            cols = col.data();
          }
          MapR(gw.data() + grp * Og * KK, Og, KK).noalias() += dy * CMapR(cols, KK, P).transpose();
        }
        if (!gx.empty()) {
          double* gxp = gx.data() + (b * g.in_ch + grp * Cg) * g.h * g.w;
          CMapR wg(wv.data() + grp * Og * KK, Og, KK);
          if (is_pointwise(g)) {
            MapR(gxp, KK, P).noalias() += wg.transpose() * dy;
          } else {
            MapR(dcol.data(), KK, P).noalias() = wg.transpose() * dy;
            col2im(dcol.data(), g, gxp);
          }
        }
      }
    }
    if (n.parents.size() > 2) {
      auto gb = pgrad(n, 2);
      if (!gb.empty())
        for (std::size_t b = 0; b < g.batch; ++b)
          for (std::size_t o = 0; o < g.out_ch; ++o) {
            const double* dy = n.grad.data() + (b * g.out_ch + o) * P;
            gb[o] += std::accumulate(dy, dy + P, 0.0);
          }
    }
  });
}

// One kernel per channel, computed directly.
Tensor conv_depthwise(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvGeom& g) {
  const auto xv = input.data();
  const auto wv = weight.data();
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto H = static_cast<std::ptrdiff_t>(g.h), W = static_cast<std::ptrdiff_t>(g.w);
  Buffer out(g.batch * g.out_ch * g.pixels(), 0.0);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t c = 0; c < g.in_ch; ++c) {
      const double* x = xv.data() + (b * g.in_ch + c) * g.h * g.w;
      const double* k = wv.data() + c * g.k * g.k;
      double* y = out.data() + (b * g.in_ch + c) * g.pixels();
      const double b0 = bias.defined() ? bias.data()[c] : 0.0;
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          double acc = b0;
          for (std::size_t ki = 0; ki < g.k; ++ki) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - pad;
            if (iy < 0 || iy >= H) continue;
            for (std::size_t kj = 0; kj < g.k; ++kj) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - pad;
              if (ix < 0 || ix >= W) continue;
              acc += k[ki * g.k + kj] * x[iy * W + ix];
            }
          }
          y[oy * g.ow + ox] = acc;
        }
    }
  }
  std::vector<NodePtr> parents{input.node(), weight.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return make_result({g.batch, g.out_ch, g.oh, g.ow}, std::move(out), std::move(parents), [g](Node& n) {
    const auto& xv = pval(n, 0);
    const auto& wv = pval(n, 1);
    auto gx = pgrad(n, 0);
    auto gw = pgrad(n, 1);
    std::span<double> gb = n.parents.size() > 2 ? pgrad(n, 2) : std::span<double>{};
    const auto pad = static_cast<std::ptrdiff_t>(g.pad);
    const auto H = static_cast<std::ptrdiff_t>(g.h), W = static_cast<std::ptrdiff_t>(g.w);
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (std::size_t c = 0; c < g.in_ch; ++c) {
        const std::size_t xoff = (b * g.in_ch + c) * g.h * g.w;
        const double* x = xv.data() + xoff;
        const double* k = wv.data() + c * g.k * g.k;
        const double* dy = n.grad.data() + (b * g.in_ch + c) * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy)
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const double d = dy[oy * g.ow + ox];
            if (!gb.empty()) gb[c] += d;
            for (std::size_t ki = 0; ki < g.k; ++ki) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - pad;
              if (iy < 0 || iy >= H) continue;
              for (std::size_t kj = 0; kj < g.k; ++kj) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - pad;
                if (ix < 0 || ix >= W) continue;
                if (!gw.empty()) gw[c * g.k * g.k + ki * g.k + kj] += d * x[iy * W + ix];
                if (!gx.empty()) gx[xoff + iy * W + ix] += d * k[ki * g.k + kj];
              }
            }
          }
      }
    }
  });
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (!(std::abs(v) >= 1e-30)) throw std::domain_error("div: divisor magnitude below 1e-30");
  }
  return binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
}

Tensor sum(const Tensor& x) {
  auto xv = x.data();
  double s = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_result({1}, {s}, {x.node()}, [](Node& n) {
    auto gx = pgrad(n, 0);
    for (auto& g : gx) g += n.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  require(as.size() >= 2 && bs.size() >= 2, "matmul: operands need rank >= 2, got " + shape_str(as) + " and " + shape_str(bs));
  const std::size_t M = as[as.size() - 2], K = as.back();
  const std::size_t K2 = bs[bs.size() - 2], N = bs.back();
  require(K == K2, "matmul: inner dimensions differ (" + shape_str(as) + " x " + shape_str(bs) + ")");
  const bool shared_b = bs.size() == 2;
  if (!shared_b) {
    require(as.size() == bs.size() && std::equal(as.begin(), as.end() - 2, bs.begin()),
            "matmul: leading dimensions differ (" + shape_str(as) + " x " + shape_str(bs) + ")");
  }
  const std::size_t batch = prod(as, 0, as.size() - 2);
  Shape out_shape(as.begin(), as.end() - 2);
  out_shape.push_back(M);
  out_shape.push_back(N);
  Buffer out(batch * M * N);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t s = 0; s < batch; ++s) {
    const double* bp = bv.data() + (shared_b ? 0 : s * K * N);
    MapR(out.data() + s * M * N, M, N).noalias() = CMapR(av.data() + s * M * K, M, K) * CMapR(bp, K, N);
  }
  return make_result(std::move(out_shape), std::move(out), {a.node(), b.node()},
                     [batch, M, K, N, shared_b](Node& n) {
                       const auto& av = pval(n, 0);
                       const auto& bv = pval(n, 1);
                       auto ga = pgrad(n, 0);
                       auto gb = pgrad(n, 1);
                       for (std::size_t s = 0; s < batch; ++s) {
                         CMapR dc(n.grad.data() + s * M * N, M, N);
                         const std::size_t boff = shared_b ? 0 : s * K * N;
                         if (!ga.empty())
                           MapR(ga.data() + s * M * K, M, K).noalias() += dc * CMapR(bv.data() + boff, K, N).transpose();
                         if (!gb.empty())
                           MapR(gb.data() + boff, K, N).noalias() += CMapR(av.data() + s * M * K, M, K).transpose() * dc;
                       }
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  require(!xs.empty() && ws.size() == 2 && xs.back() == ws[0],
          "linear: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
  const std::size_t D = ws[0], E = ws[1];
  if (bias.defined()) require(bias.numel() == E, "linear: bias length must be " + std::to_string(E));
  const std::size_t lead = xs.size() >= 3 ? xs[0] : 1;
  const std::size_t M = x.numel() / (lead * D);
  Shape out_shape = xs;
  out_shape.back() = E;
  Buffer out(lead * M * E);
  auto xv = x.data();
  auto wv = weight.data();
  for (std::size_t s = 0; s < lead; ++s) {
    MapR y(out.data() + s * M * E, M, E);
    y.noalias() = CMapR(xv.data() + s * M * D, M, D) * CMapR(wv.data(), D, E);
    if (bias.defined()) y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), E);
  }
  std::vector<NodePtr> parents{x.node(), weight.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return make_result(std::move(out_shape), std::move(out), std::move(parents), [lead, M, D, E](Node& n) {
    const auto& xv = pval(n, 0);
    const auto& wv = pval(n, 1);
    auto gx = pgrad(n, 0);
    auto gw = pgrad(n, 1);
    std::span<double> gb = n.parents.size() > 2 ? pgrad(n, 2) : std::span<double>{};
    for (std::size_t s = 0; s < lead; ++s) {
      CMapR dy(n.grad.data() + s * M * E, M, E);
      if (!gx.empty()) MapR(gx.data() + s * M * D, M, D).noalias() += dy * CMapR(wv.data(), D, E).transpose();
      if (!gw.empty()) MapR(gw.data(), D, E).noalias() += CMapR(xv.data() + s * M * D, M, D).transpose() * dy;
      if (!gb.empty()) Eigen::Map<Eigen::RowVectorXd>(gb.data(), E) += dy.colwise().sum();
    }
  });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding, std::size_t groups) {
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  require(is.size() == 4, "conv2d: input must be BxCxHxW, got " + shape_str(is));
  require(ws.size() == 4 && ws[2] == ws[3], "conv2d: weight must be OxIxKxK, got " + shape_str(ws));
  require(stride >= 1 && groups >= 1, "conv2d: stride and groups must be positive");
  require(is[1] == ws[1] * groups,
          "conv2d: input has " + std::to_string(is[1]) + " channels but weight expects " +
              std::to_string(ws[1] * groups) + " (" + std::to_string(ws[1]) + " x " + std::to_string(groups) + " groups)");
  require(ws[0] % groups == 0, "conv2d: output channels not divisible by groups");
  const std::size_t k = ws[2];
  require(is[2] + 2 * padding >= k && is[3] + 2 * padding >= k,
          "conv2d: padded input " + shape_str(is) + " smaller than kernel " + std::to_string(k));
  if (bias.defined()) require(bias.numel() == ws[0], "conv2d: bias length must equal output channels");
  ConvGeom g{is[0], is[1], is[2], is[3], ws[0], k, stride, padding, groups,
             (is[2] + 2 * padding - k) / stride + 1, (is[3] + 2 * padding - k) / stride + 1};
  if (groups == is[1] && ws[0] == is[1] && ws[1] == 1) return conv_depthwise(input, weight, bias, g);
  return conv_general(input, weight, bias, g);
}

Tensor pad_reflect(const Tensor& x, std::size_t pad) {
  const auto& s = x.shape();
  require(s.size() == 4, "pad_reflect: expected BxCxHxW, got " + shape_str(s));
  require(pad < s[2] && pad < s[3], "pad_reflect: pad " + std::to_string(pad) + " too large for " + shape_str(s));
  if (pad == 0) return reshape(x, s);
  const std::size_t H = s[2], W = s[3], OH = H + 2 * pad, OW = W + 2 * pad, planes = s[0] * s[1];
  std::vector<std::size_t> src(OH * OW);
  for (std::size_t y = 0; y < OH; ++y)
    for (std::size_t xx = 0; xx < OW; ++xx)
      src[y * OW + xx] = reflect_index(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(pad), H) * W +
                         reflect_index(static_cast<std::ptrdiff_t>(xx) - static_cast<std::ptrdiff_t>(pad), W);
  auto xv = x.data();
  Buffer out(planes * OH * OW);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < OH * OW; ++i) out[p * OH * OW + i] = xv[p * H * W + src[i]];
  return make_result({s[0], s[1], OH, OW}, std::move(out), {x.node()},
                     [src = std::move(src), planes, HW = H * W, OHW = OH * OW](Node& n) {
                       auto gx = pgrad(n, 0);
                       for (std::size_t p = 0; p < planes; ++p)
                         for (std::size_t i = 0; i < OHW; ++i) gx[p * HW + src[i]] += n.grad[p * OHW + i];
                     });
}

Tensor softmax(const Tensor& x, int axis) {
  const auto& s = x.shape();
  const int rank = static_cast<int>(s.size());
  if (axis < 0) axis += rank;
  require(axis >= 0 && axis < rank, "softmax: axis out of range for " + shape_str(s));
  const auto ax = static_cast<std::size_t>(axis);
  const std::size_t outer = prod(s, 0, ax), len = s[ax], inner = prod(s, ax + 1, s.size());
  auto xv = x.data();
  Buffer out(xv.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) m = std::max(m, xv[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(xv[base + j * inner] - m);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
    }
  return make_result(s, std::move(out), {x.node()}, [outer, len, inner](Node& n) {
    auto gx = pgrad(n, 0);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * len * inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) dot += n.grad[base + j * inner] * n.value[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t k = base + j * inner;
          gx[k] += n.value[k] * (n.grad[k] - dot);
        }
      }
  });
}

namespace {

struct Interp {
  std::size_t i0, i1;
  double w1;
};

std::vector<Interp> corner_aligned(std::size_t in, std::size_t out) {
  std::vector<Interp> t(out);
  for (std::size_t o = 0; o < out; ++o) {
    if (in == 1 || out == 1) {
      t[o] = {0, 0, 0.0};
      continue;
    }
    const double src = static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
    auto i0 = std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    t[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return t;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  const auto& s = x.shape();
  require(s.size() == 4, "resize: expected BxCxHxW, got " + shape_str(s));
  require(out_h >= 1 && out_w >= 1, "resize: output size must be positive");
  if (out_h == s[2] && out_w == s[3]) return reshape(x, s);
  const std::size_t H = s[2], W = s[3], planes = s[0] * s[1];
  auto ty = corner_aligned(H, out_h);
  auto tx = corner_aligned(W, out_w);
  auto xv = x.data();
  Buffer out(planes * out_h * out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* in = xv.data() + p * H * W;
    double* o = out.data() + p * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto [y0, y1, wy] = ty[y];
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        const auto [x0, x1, wx] = tx[xx];
        double top = in[y0 * W + x0];
        double bot = in[y1 * W + x0];
        if (wx != 0.0) {
          top = (1.0 - wx) * top + wx * in[y0 * W + x1];
          bot = (1.0 - wx) * bot + wx * in[y1 * W + x1];
        }
        o[y * out_w + xx] = wy != 0.0 ? (1.0 - wy) * top + wy * bot : top;
      }
    }
  }
  return make_result({s[0], s[1], out_h, out_w}, std::move(out), {x.node()},
                     [ty = std::move(ty), tx = std::move(tx), planes, H, W, out_h, out_w](Node& n) {
                       auto gx = pgrad(n, 0);
                       for (std::size_t p = 0; p < planes; ++p) {
                         double* gin = gx.data() + p * H * W;
                         const double* go = n.grad.data() + p * out_h * out_w;
                         for (std::size_t y = 0; y < out_h; ++y) {
                           const auto [y0, y1, wy] = ty[y];
                           for (std::size_t xx = 0; xx < out_w; ++xx) {
                             const auto [x0, x1, wx] = tx[xx];
                             const double g = go[y * out_w + xx];
                             gin[y0 * W + x0] += (1.0 - wy) * (1.0 - wx) * g;
                             gin[y0 * W + x1] += (1.0 - wy) * wx * g;
                             gin[y1 * W + x0] += wy * (1.0 - wx) * g;
                             gin[y1 * W + x1] += wy * wx * g;
                           }
                         }
                       }
                     });
}

Tensor upsample(const Tensor& x, std::size_t factor, UpsampleMode mode) {
  const auto& s = x.shape();
  require(s.size() == 4, "upsample: expected BxCxHxW, got " + shape_str(s));
  require(factor >= 1, "upsample: factor must be >= 1");
  if (factor == 1) return reshape(x, s);
  if (mode == UpsampleMode::bilinear) return resize_bilinear(x, s[2] * factor, s[3] * factor);
  const std::size_t H = s[2], W = s[3], OH = H * factor, OW = W * factor, planes = s[0] * s[1];
  auto xv = x.data();
  Buffer out(planes * OH * OW);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < OH; ++y)
      for (std::size_t xx = 0; xx < OW; ++xx) out[(p * OH + y) * OW + xx] = xv[(p * H + y / factor) * W + xx / factor];
  return make_result({s[0], s[1], OH, OW}, std::move(out), {x.node()}, [planes, H, W, factor](Node& n) {
    auto gx = pgrad(n, 0);
    const std::size_t OH = H * factor, OW = W * factor;
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t y = 0; y < OH; ++y)
        for (std::size_t xx = 0; xx < OW; ++xx) gx[(p * H + y / factor) * W + xx / factor] += n.grad[(p * OH + y) * OW + xx];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(), "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  auto xv = x.data();
  return make_result(std::move(shape), Buffer(xv.begin(), xv.end()), {x.node()}, [](Node& n) {
    auto gx = pgrad(n, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& s = x.shape();
  const std::size_t r = s.size();
  require(axes.size() == r, "permute: axis list rank mismatch for " + shape_str(s));
  std::vector<bool> used(r, false);
  for (auto a : axes) {
    require(a < r && !used[a], "permute: axes must be a permutation");
    used[a] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  Shape out_shape(r);
  std::vector<std::size_t> stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = s[axes[i]];
    stride[i] = in_stride[axes[i]];
  }
  // src[i] = input offset of output element i
  const std::size_t total = x.numel();
  std::vector<std::size_t> src(total);
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < total; ++i) {
    src[i] = off;
    for (std::size_t d = r; d-- > 0;) {
      off += stride[d];
      if (++idx[d] < out_shape[d]) break;
      off -= stride[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  auto xv = x.data();
  Buffer out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = xv[src[i]];
  return make_result(std::move(out_shape), std::move(out), {x.node()}, [src = std::move(src)](Node& n) {
    auto gx = pgrad(n, 0);
    for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += n.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  require(axis < s0.size(), "concat: axis out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    require(s.size() == s0.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      require(d == axis || s[d] == s0[d], "concat: " + shape_str(s) + " does not match " + shape_str(s0));
    lens.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = prod(s0, 0, axis), inner = prod(s0, axis + 1, s0.size()), total_len = out_shape[axis];
  Buffer out(outer * total_len * inner);
  std::vector<NodePtr> nodes;
  std::size_t start = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].data();
    const std::size_t chunk = lens[k] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.data() + o * chunk, chunk, out.data() + (o * total_len + start) * inner);
    start += lens[k];
    nodes.push_back(parts[k].node());
  }
  return make_result(std::move(out_shape), std::move(out), std::move(nodes),
                     [lens = std::move(lens), outer, inner, total_len](Node& n) {
                       std::size_t start = 0;
                       for (std::size_t k = 0; k < lens.size(); ++k) {
                         auto g = pgrad(n, k);
                         const std::size_t chunk = lens[k] * inner;
                         if (!g.empty())
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = n.grad.data() + (o * total_len + start) * inner;
                             for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += src[i];
                           }
                         start += lens[k];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto& s = x.shape();
  require(axis < s.size() && start + length <= s[axis] && length > 0,
          "slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) + ") invalid for " + shape_str(s));
  const std::size_t outer = prod(s, 0, axis), inner = prod(s, axis + 1, s.size()), len = s[axis];
  Shape out_shape = s;
  out_shape[axis] = length;
  auto xv = x.data();
  Buffer out(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.data() + (o * len + start) * inner, length * inner, out.data() + o * length * inner);
  return make_result(std::move(out_shape), std::move(out), {x.node()}, [outer, inner, len, start, length](Node& n) {
    auto gx = pgrad(n, 0);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < length * inner; ++i) gx[(o * len + start) * inner + i] += n.grad[o * length * inner + i];
  });
}

Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto& s = x.shape();
  require(s.size() == 4, "group_norm: expected BxCxHxW, got " + shape_str(s));
  const std::size_t B = s[0], C = s[1], HW = s[2] * s[3];
  require(groups >= 1 && C % groups == 0, "group_norm: channels not divisible by groups");
  require(gamma.numel() == C && beta.numel() == C, "group_norm: affine parameters must have length C");
  const std::size_t cg = C / groups, m = cg * HW;
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  Buffer xhat(xv.size()), inv(B * groups), out(xv.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t off = (b * C + g * cg) * HW;
      double mu = 0.0;
      for (std::size_t i = 0; i < m; ++i) mu += xv[off + i];
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t i = 0; i < m; ++i) var += (xv[off + i] - mu) * (xv[off + i] - mu);
      var /= static_cast<double>(m);
      const double is = 1.0 / std::sqrt(var + eps);
      inv[b * groups + g] = is;
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t c = g * cg + i / HW;
        xhat[off + i] = (xv[off + i] - mu) * is;
        out[off + i] = xhat[off + i] * gv[c] + bv[c];
      }
    }
  return make_result(s, std::move(out), {x.node(), gamma.node(), beta.node()},
                     [xhat = std::move(xhat), inv = std::move(inv), B, C, HW, groups, cg, m](Node& n) {
                       auto gx = pgrad(n, 0);
                       auto gg = pgrad(n, 1);
                       auto gb = pgrad(n, 2);
                       const auto& gv = pval(n, 1);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t g = 0; g < groups; ++g) {
                           const std::size_t off = (b * C + g * cg) * HW;
                           double s1 = 0.0, s2 = 0.0;
                           for (std::size_t i = 0; i < m; ++i) {
                             const std::size_t c = g * cg + i / HW;
                             const double d = n.grad[off + i];
                             if (!gg.empty()) gg[c] += d * xhat[off + i];
                             if (!gb.empty()) gb[c] += d;
                             const double dxh = d * gv[c];
                             s1 += dxh;
                             s2 += dxh * xhat[off + i];
                           }
                           if (gx.empty()) continue;
                           const double is = inv[b * groups + g], md = static_cast<double>(m);
                           for (std::size_t i = 0; i < m; ++i) {
                             const std::size_t c = g * cg + i / HW;
                             const double dxh = n.grad[off + i] * gv[c];
                             gx[off + i] += is / md * (md * dxh - s1 - xhat[off + i] * s2);
                           }
                         }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto& s = x.shape();
  require(!s.empty(), "layer_norm: scalar input");
  const std::size_t D = s.back(), rows = x.numel() / D;
  require(gamma.numel() == D && beta.numel() == D, "layer_norm: affine parameters must match the last axis");
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  Buffer xhat(xv.size()), inv(rows), out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * D;
    double mu = 0.0;
    for (std::size_t i = 0; i < D; ++i) mu += xr[i];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t i = 0; i < D; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(D);
    inv[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < D; ++i) {
      xhat[r * D + i] = (xr[i] - mu) * inv[r];
      out[r * D + i] = xhat[r * D + i] * gv[i] + bv[i];
    }
  }
  return make_result(s, std::move(out), {x.node(), gamma.node(), beta.node()},
                     [xhat = std::move(xhat), inv = std::move(inv), rows, D](Node& n) {
                       auto gx = pgrad(n, 0);
                       auto gg = pgrad(n, 1);
                       auto gb = pgrad(n, 2);
                       const auto& gv = pval(n, 1);
                       const double md = static_cast<double>(D);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double s1 = 0.0, s2 = 0.0;
                         for (std::size_t i = 0; i < D; ++i) {
                           const double d = n.grad[r * D + i];
                           if (!gg.empty()) gg[i] += d * xhat[r * D + i];
                           if (!gb.empty()) gb[i] += d;
                           s1 += d * gv[i];
                           s2 += d * gv[i] * xhat[r * D + i];
                         }
                         if (gx.empty()) continue;
                         for (std::size_t i = 0; i < D; ++i) {
                           const double dxh = n.grad[r * D + i] * gv[i];
                           gx[r * D + i] += inv[r] / md * (md * dxh - s1 - xhat[r * D + i] * s2);
                         }
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels) {
  const auto& s = logits.shape();
  require(s.size() == 4, "cross_entropy: logits must be BxKxHxW, got " + shape_str(s));
  const std::size_t B = s[0], K = s[1], HW = s[2] * s[3];
  require(labels.size() == B * HW, "cross_entropy: expected " + std::to_string(B * HW) + " labels, got " +
                                       std::to_string(labels.size()));
  for (auto l : labels) {
    if (l >= K) throw std::out_of_range("cross_entropy: label " + std::to_string(l) + " out of range for " + std::to_string(K) + " categories");
  }
  auto zv = logits.data();
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < HW; ++p) {
      const double* z = zv.data() + b * K * HW + p;
      double m = z[0];
      for (std::size_t k = 1; k < K; ++k) m = std::max(m, z[k * HW]);
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) acc += std::exp(z[k * HW] - m);
      total += m + std::log(acc) - z[labels[b * HW + p] * HW];
    }
  const double N = static_cast<double>(B * HW);
  return make_result({1}, {total / N}, {logits.node()},
                     [lab = std::vector<std::uint8_t>(labels.begin(), labels.end()), B, K, HW, N](Node& n) {
                       auto gz = pgrad(n, 0);
                       const auto& zv = pval(n, 0);
                       const double g0 = n.grad[0] / N;
                       Buffer e(K);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t p = 0; p < HW; ++p) {
                           const std::size_t base = b * K * HW + p;
                           double m = zv[base];
                           for (std::size_t k = 1; k < K; ++k) m = std::max(m, zv[base + k * HW]);
                           double acc = 0.0;
                           for (std::size_t k = 0; k < K; ++k) acc += (e[k] = std::exp(zv[base + k * HW] - m));
                           const std::size_t t = lab[b * HW + p];
                           for (std::size_t k = 0; k < K; ++k)
                             gz[base + k * HW] += g0 * (e[k] / acc - (k == t ? 1.0 : 0.0));
                         }
                     });
}

}  // namespace gdgt
