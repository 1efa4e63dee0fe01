#include "gdgt/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "gdgt/data.hpp"
#include "gdgt/glff.hpp"
#include "gdgt/grad_check.hpp"
#include "gdgt/guided_filter.hpp"
#include "gdgt/metrics.hpp"
#include "gdgt/model.hpp"
#include "gdgt/ops.hpp"
#include "gdgt/random.hpp"
#include "gdgt/training.hpp"
#include "gdgt/wavelet.hpp"

namespace gdgt {

namespace {

SuiteResult timed(const std::string& name, const std::function<std::string()>& body) {
  SuiteResult r;
  r.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    r.detail = body();
    r.passed = r.detail.rfind("ok", 0) == 0;
  } catch (const std::exception& e) {
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// Fixed random projection so that no gradient is trivially uniform.
Tensor project(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(y * random_normal(y.shape(), rng));
}

}  // namespace

SuiteResult verify_dwt_reconstruction(std::size_t trials, std::uint64_t seed) {
  return timed("dwt_reconstruction", [&] {
    Rng rng(seed);
    double worst_energy = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      std::vector<double> v(64);
      for (auto& x : v) x = static_cast<double>(static_cast<std::int64_t>(rng.below(511)) - 255);
      const Tensor x = Tensor::from_data({1, 1, 8, 8}, v);
      const WaveletBands bands = haar_dwt(x);
      const Tensor back = inverse_haar_dwt(bands);
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (back.data()[i] != v[i]) return "trial " + std::to_string(t) + ": reconstruction differs at " + std::to_string(i);
      }
      double e_in = 0.0, e_bands = 0.0;
      for (double a : v) e_in += a * a;
      for (const Tensor* b : {&bands.ll, &bands.lh, &bands.hl, &bands.hh})
        for (double a : b->data()) e_bands += a * a;
      worst_energy = std::max(worst_energy, std::abs(e_bands - 4.0 * e_in));
      if (!(worst_energy <= 1e-9)) return "trial " + std::to_string(t) + ": energy identity off by " + std::to_string(worst_energy);
    }
    return "ok " + std::to_string(trials) + " maps exact, energy error " + std::to_string(worst_energy);
  });
}

SuiteResult verify_grad_check(std::uint64_t seed) {
  return timed("grad_check", [&] {
    constexpr double tol = 1e-4;
    Rng rng(seed);
    std::ostringstream summary;
    double worst = 0.0;
    auto run = [&](const std::string& what, const ScalarFn& fn, std::vector<Tensor> inputs, std::size_t sample) {
      GradCheckOptions opts;
      opts.max_elements_per_input = sample;
      opts.seed = seed;
      opts.step = 1e-4;
      opts.max_halvings = 8;
      // Finite-difference roundoff is about 1e-8 here, so gradients far below
      // this floor (some are exactly zero) are compared in absolute terms.
      opts.floor = 1e-3;
      const auto rep = grad_check(fn, inputs, tol, opts);
      worst = std::max(worst, rep.max_rel_error);
      if (!rep.passed) {
        summary << what << " failed: rel " << rep.max_rel_error << " at " << rep.worst << "; ";
        return false;
      }
      return true;
    };
    bool ok = true;

    {
      Tensor x = random_normal({2, 3, 5, 5}, rng, 1.0, true);
      Tensor w = random_normal({4, 3, 3, 3}, rng, 0.5, true);
      Tensor b = random_normal({4}, rng, 0.5, true);
      ok &= run("conv2d", [&] { return project(conv2d(x, w, b, 2, 1), 1); }, {x, w, b}, 0);
      Tensor dw = random_normal({3, 1, 3, 3}, rng, 0.5, true);
      ok &= run("conv2d_depthwise", [&] { return project(conv2d(x, dw, {}, 1, 1, 3), 2); }, {x, dw}, 0);
    }
    {
      GlffOptions o;
      o.heads = 2;
      o.window = 2;
      GlffParams p = GlffParams::create(4, rng, o);
      Tensor x = random_normal({1, 4, 4, 4}, rng, 1.0, true);
      ok &= run("attention",
                [&] { return project(multi_head_attention(patch_embed(x, 2), p), 3); },
                {x, p.q_weight, p.k_weight, p.v_weight, p.out_weight, p.q_bias}, 0);
      ParameterList params;
      p.collect(params, "");
      std::vector<Tensor> inputs{x};
      for (const auto& q : params) inputs.push_back(q.tensor);
      ok &= run("glff_block", [&] { return project(glff_forward(x, p), 4); }, inputs, 12);
    }
    {
      DgdParams p = DgdParams::create(2, rng);
      Tensor x_dec = random_normal({1, 2, 4, 4}, rng, 1.0, true);
      Tensor x_res = random_normal({1, 2, 8, 8}, rng, 1.0, true);
      ok &= run("dgd_block", [&] { return project(dgd_forward(x_dec, x_res, p), 5); },
                {x_dec, x_res, p.guide_weight, p.guide_bias, p.mean_weight, p.epsilon_raw, p.alpha, p.beta}, 0);
    }
    {
      GdgtConfig c;
      c.input_size = 16;
      c.stage_channels = {4, 8};
      c.window = 2;
      c.heads = 2;
      GdgtModel model(c, seed);
      Tensor image = random_normal({1, 3, 16, 16}, rng, 1.0, true);
      LabelMask mask(16, 16);
      for (auto& l : mask.labels) l = static_cast<std::uint8_t>(rng.below(kNumCategories));
      std::vector<LabelMask> masks{mask};
      std::vector<Tensor> inputs{image};
      // Zero-initialized biases put relu inputs exactly on the kink where the
      // encoder output is zero; move every parameter to a generic point.
      for (const auto& q : model.parameters()) {
        Tensor t = q.tensor;
        for (auto& v : t.mutable_data()) v += 0.05 * rng.normal();
        inputs.push_back(t);
      }
      ok &= run("model_2stage", [&] { return project(model.forward(image), 6); }, inputs, 4);
      ok &= run("model_2stage_loss", [&] { return segmentation_loss(model.forward(image), masks); }, {inputs[0]}, 16);
    }
    {
      Tensor logits = random_normal({2, 5, 3, 3}, rng, 2.0, true);
      std::vector<std::uint8_t> labels(18);
      for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(5));
      ok &= run("cross_entropy", [&] { return cross_entropy(logits, labels); }, {logits}, 0);
    }
    if (!ok) return summary.str();
    char buf[96];
    std::snprintf(buf, sizeof buf, "ok 8 checks, worst relative error %.3g", worst);
    return std::string(buf);
  });
}

SuiteResult verify_metrics_oracle(std::size_t trials, std::uint64_t seed) {
  return timed("metrics_oracle", [&] {
    {
      ConfusionMatrix cm(2);
      cm.add(0, 0, 3);
      cm.add(0, 1, 1);
      cm.add(1, 0, 1);
      cm.add(1, 1, 3);
      const auto m = compute_metrics(cm);
      if (m.miou != 0.6 || m.oa != 0.75 || m.f1 != 0.75 || m.fwiou != 0.6 || m.iou[0] != 0.6 || m.iou[1] != 0.6) {
        return std::string("two-category example mismatch");
      }
    }
    Rng rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
      LabelMask gt(64, 64), pred(64, 64);
      // Skewed draws so that some categories are occasionally absent.
      const std::uint64_t kg = 1 + rng.below(kNumCategories), kp = 1 + rng.below(kNumCategories);
      for (auto& l : gt.labels) l = static_cast<std::uint8_t>(rng.below(kg));
      for (std::size_t i = 0; i < pred.size(); ++i) {
        pred.labels[i] = rng.uniform() < 0.6 ? gt.labels[i] : static_cast<std::uint8_t>(rng.below(kp));
      }
      ConfusionMatrix cm;
      cm.accumulate(pred, gt);
      const auto m = compute_metrics(cm);

      // Per-category pixel scan.
      const double total = static_cast<double>(gt.size());
      double trace = 0.0, iou_sum = 0.0, f1_sum = 0.0, fw = 0.0;
      std::size_t present = 0;
      for (std::size_t c = 0; c < kNumCategories; ++c) {
        std::uint64_t tp = 0, fp = 0, fn = 0, g = 0;
        for (std::size_t i = 0; i < gt.size(); ++i) {
          const bool is_g = gt.labels[i] == c, is_p = pred.labels[i] == c;
          tp += is_g && is_p;
          fp += !is_g && is_p;
          fn += is_g && !is_p;
          g += is_g;
        }
        trace += static_cast<double>(tp);
        if (tp + fp + fn == 0) {
          if (m.present[c] || m.iou[c] != 0.0) return "trial " + std::to_string(t) + ": absent category scored";
          continue;
        }
        const double iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
        const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
        if (m.iou[c] != iou || m.f1_per_category[c] != f1) {
          return "trial " + std::to_string(t) + ": category " + std::to_string(c) + " differs";
        }
        iou_sum += iou;
        f1_sum += f1;
        fw += static_cast<double>(g) / total * iou;
        ++present;
      }
      const double n = static_cast<double>(present);
      if (m.miou != iou_sum / n || m.f1 != f1_sum / n || m.oa != trace / total || m.fwiou != fw) {
        return "trial " + std::to_string(t) + ": headline metrics differ";
      }
    }
    return "ok example and " + std::to_string(trials) + " random pairs exact";
  });
}

SuiteResult verify_tiling_coverage(std::size_t trials, std::uint64_t seed) {
  return timed("tiling_coverage", [&] {
    constexpr std::size_t tile = kTileSize, overlap = kTileOverlap;
    Rng rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t extents[2] = {800 + rng.below(2201), 800 + rng.below(2201)};
      std::vector<std::size_t> axes[2];
      for (int a = 0; a < 2; ++a) {
        const std::size_t n = extents[a];
        axes[a] = tile_offsets(n, tile, overlap);
        const auto& o = axes[a];
        if (o.front() != 0 || o.back() + tile != n) return "size " + std::to_string(n) + ": tiles do not span the edge";
        for (std::size_t i = 1; i < o.size(); ++i) {
          const bool last = i + 1 == o.size();
          if (!last && o[i] - o[i - 1] != tile - overlap) return "size " + std::to_string(n) + ": interior stride wrong";
          if (last && (o[i] <= o[i - 1] || o[i] - o[i - 1] > tile - overlap)) {
            return "size " + std::to_string(n) + ": last tile not clamped";
          }
        }
      }
      // Count tile hits per pixel over the product of both axes.
      std::vector<std::uint8_t> row_hits(extents[0], 0), col_hits(extents[1], 0);
      for (auto r : axes[0])
        for (std::size_t y = r; y < r + tile; ++y) ++row_hits[y];
      for (auto c : axes[1])
        for (std::size_t x = c; x < c + tile; ++x) ++col_hits[x];
      for (auto h : row_hits)
        if (h == 0) return "trial " + std::to_string(t) + ": uncovered row";
      for (auto h : col_hits)
        if (h == 0) return "trial " + std::to_string(t) + ": uncovered column";
    }

    Scene s;
    s.image = Tensor::zeros({3, 1400, 1400});
    s.mask = LabelMask(1400, 1400);
    const TileSet set = tile_scene(s);
    if (set.tiles.size() != 4) return "1400x1400 gave " + std::to_string(set.tiles.size()) + " tiles";
    std::size_t i = 0;
    for (std::size_t r : {0, 600})
      for (std::size_t c : {0, 600}) {
        const auto& m = set.tiles[i++].meta;
        if (m.row_offset != r || m.col_offset != c) return std::string("1400x1400 tile offsets wrong");
      }
    return "ok " + std::to_string(trials) + " sizes covered, 1400x1400 gives 4 tiles";
  });
}

std::vector<SuiteResult> run_verify_suites() {
  return {verify_dwt_reconstruction(), verify_grad_check(), verify_metrics_oracle(), verify_tiling_coverage()};
}

std::string format_suite_line(const SuiteResult& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, " (%.2f s): ", r.seconds);
  return std::string(r.passed ? "PASS " : "FAIL ") + r.name + buf + r.detail;
}

}  // namespace gdgt
