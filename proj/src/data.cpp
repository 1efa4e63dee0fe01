#include "gdgt/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gdgt/image_io.hpp"
#include "gdgt/ops.hpp"
#include "gdgt/random.hpp"

namespace gdgt {

namespace {

Tensor resize_image(const Tensor& chw, std::size_t h, std::size_t w) {
  Tensor x = reshape(chw.detach(), {1, chw.dim(0), chw.dim(1), chw.dim(2)});
  Tensor y = resize_bilinear(x, h, w);
  return Tensor::from_data({chw.dim(0), h, w}, std::vector<double>(y.data().begin(), y.data().end()));
}

std::size_t mirror(std::size_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::size_t period = 2 * (n - 1);
  i %= period;
  return i < n ? i : period - i;
}

// Reflect-pads image and mask at the bottom/right to at least h x w.
Scene pad_scene(const Scene& s, std::size_t h, std::size_t w) {
  const std::size_t H = s.height(), W = s.width();
  if (h <= H && w <= W) return s;
  h = std::max(h, H);
  w = std::max(w, W);
  Scene out;
  out.meta = s.meta;
  out.mask = LabelMask(h, w);
  std::vector<double> img(3 * h * w);
  auto src = s.image.data();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sy = mirror(y, H), sx = mirror(x, W);
      out.mask.at(y, x) = s.mask.at(sy, sx);
      for (std::size_t c = 0; c < 3; ++c) img[(c * h + y) * w + x] = src[(c * H + sy) * W + sx];
    }
  out.image = Tensor::from_data({3, h, w}, std::move(img));
  return out;
}

Scene crop_scene(const Scene& s, std::size_t row, std::size_t col, std::size_t h, std::size_t w) {
  Scene out;
  out.meta = s.meta;
  out.meta.row_offset = row;
  out.meta.col_offset = col;
  out.mask = LabelMask(h, w);
  std::vector<double> img(3 * h * w);
  auto src = s.image.data();
  const std::size_t H = s.height(), W = s.width();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      out.mask.at(y, x) = s.mask.at(row + y, col + x);
      for (std::size_t c = 0; c < 3; ++c) img[(c * h + y) * w + x] = src[(c * H + row + y) * W + col + x];
    }
  out.image = Tensor::from_data({3, h, w}, std::move(img));
  return out;
}

// ---------------------------------------------------------------------------
// Procedural fields for the synthetic generator

using Field = std::vector<double>;

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise on a lattice with spacing `cell`, smoothly interpolated.
Field value_noise(Rng& rng, std::size_t n, double cell) {
  const std::size_t g = static_cast<std::size_t>(std::ceil(static_cast<double>(n) / cell)) + 2;
  std::vector<double> lattice(g * g);
  for (auto& v : lattice) v = rng.uniform();
  Field f(n * n);
  for (std::size_t y = 0; y < n; ++y) {
    const double fy = static_cast<double>(y) / cell;
    const auto y0 = static_cast<std::size_t>(fy);
    const double ty = smoothstep(fy - static_cast<double>(y0));
    for (std::size_t x = 0; x < n; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const auto x0 = static_cast<std::size_t>(fx);
      const double tx = smoothstep(fx - static_cast<double>(x0));
      const double a = lattice[y0 * g + x0], b = lattice[y0 * g + x0 + 1];
      const double c = lattice[(y0 + 1) * g + x0], d = lattice[(y0 + 1) * g + x0 + 1];
      f[y * n + x] = (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d);
    }
  }
  return f;
}

// Fractal sum of value-noise octaves, rescaled to [0,1].
Field fbm(Rng& rng, std::size_t n, double cell, int octaves) {
  Field acc(n * n, 0.0);
  double amp = 1.0;
  for (int o = 0; o < octaves; ++o) {
    Field f = value_noise(rng, n, std::max(cell, 1.0));
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += amp * f[i];
    amp *= 0.5;
    cell *= 0.5;
  }
  const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
  const double lo_v = *lo, span = std::max(*hi - *lo, 1e-12);
  for (auto& v : acc) v = (v - lo_v) / span;
  return acc;
}

// Value below which `q` of the selected samples fall.
double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 1.0;
  const auto k = std::min(v.size() - 1, static_cast<std::size_t>(q * static_cast<double>(v.size())));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

constexpr std::uint8_t kSea = 0, kThin = 1, kThick = 2, kLand = 3, kPool = 4;

LabelMask draw_layout(Rng& rng, std::size_t n) {
  const double N = static_cast<double>(n);
  LabelMask m(n, n, kSea);

  // Land strip along one border with a noisy coastline.
  const auto side = rng.below(4);
  const double depth = N * rng.uniform(0.10, 0.20);
  const Field coast = fbm(rng, n, N / 4.0, 3);
  std::vector<bool> land(n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double d = side == 0 ? y : side == 1 ? N - 1 - y : side == 2 ? x : N - 1 - x;
      land[y * n + x] = d < depth + (coast[y * n + x] - 0.5) * N * 0.16;
    }

  // Ice concentration field: thresholds placed by quantile on the water area.
  const Field ice = fbm(rng, n, N / rng.uniform(3.0, 5.0), 5);
  std::vector<double> water;
  for (std::size_t i = 0; i < n * n; ++i)
    if (!land[i]) water.push_back(ice[i]);
  const double thick_frac = rng.uniform(0.25, 0.38);
  const double thin_frac = rng.uniform(0.12, 0.20);
  const double t_thick = quantile(water, 1.0 - thick_frac);
  const double t_thin = quantile(water, 1.0 - thick_frac - thin_frac);
  const double t_deep = quantile(water, 1.0 - thick_frac * 0.5);

  // Pores only in the interior of floes.
  const Field pores = fbm(rng, n, N / 10.0, 2);
  std::vector<double> deep;
  for (std::size_t i = 0; i < n * n; ++i)
    if (!land[i] && ice[i] > t_deep) deep.push_back(pores[i]);
  const double t_pool = quantile(deep, rng.uniform(0.65, 0.8));

  for (std::size_t i = 0; i < n * n; ++i) {
    std::uint8_t c = kSea;
    if (land[i]) {
      c = kLand;
    } else if (ice[i] > t_thick) {
      c = (ice[i] > t_deep && pores[i] > t_pool) ? kPool : kThick;
    } else if (ice[i] > t_thin) {
      c = kThin;
    }
    m.labels[i] = c;
  }
  return m;
}

bool all_present(const LabelMask& m) {
  std::array<bool, kNumCategories> seen{};
  for (auto l : m.labels) seen[l] = true;
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

// Stamps a disk of each missing category; pool-ice lands on a thick-ice disk.
void force_presence(Rng& rng, LabelMask& m) {
  std::array<bool, kNumCategories> seen{};
  for (auto l : m.labels) seen[l] = true;
  const std::size_t n = m.height;
  const double r = std::max(3.0, static_cast<double>(n) / 16.0);
  auto disk = [&](double cy, double cx, double rad, std::uint8_t label) {
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        if (dy * dy + dx * dx <= rad * rad) m.at(y, x) = label;
      }
  };
  for (std::uint8_t k = 0; k < kNumCategories; ++k) {
    if (seen[k]) continue;
    const double cy = rng.uniform(2 * r, static_cast<double>(n) - 2 * r);
    const double cx = rng.uniform(2 * r, static_cast<double>(n) - 2 * r);
    if (k == kPool) {
      disk(cy, cx, 2 * r, kThick);
      disk(cy, cx, r, kPool);
    } else if (k == kThick) {
      disk(cy, cx, 1.5 * r, kThin);
      disk(cy, cx, r, kThick);
    } else {
      disk(cy, cx, r, k);
    }
  }
}

Tensor render(Rng& rng, const LabelMask& m) {
  const std::size_t n = m.height, hw = n * n;
  const double N = static_cast<double>(n);
  // Base colors per category (RGB).
  constexpr std::array<std::array<double, 3>, kNumCategories> base{{
      {0.06, 0.13, 0.28},  // sea
      {0.52, 0.62, 0.70},  // thin ice
      {0.90, 0.93, 0.95},  // thick ice
      {0.45, 0.35, 0.24},  // land
      {0.22, 0.45, 0.66},  // pool ice
  }};
  constexpr std::array<double, kNumCategories> grain{0.025, 0.035, 0.03, 0.07, 0.03};
  const Field swell = fbm(rng, n, N / 3.0, 3);
  const Field rock = fbm(rng, n, N / 12.0, 3);
  const double light = rng.uniform(0.92, 1.04);
  std::vector<double> img(3 * hw);
  for (std::size_t p = 0; p < hw; ++p) {
    const auto k = m.labels[p];
    const double shade = 1.0 + 0.12 * (swell[p] - 0.5) + (k == kLand ? 0.35 * (rock[p] - 0.5) : 0.0);
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = light * base[k][c] * shade + grain[k] * rng.normal();
      img[c * hw + p] = std::clamp(v, 0.0, 1.0);
    }
  }
  return Tensor::from_data({3, n, n}, std::move(img));
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

LabelMask resize_nearest(const LabelMask& mask, std::size_t height, std::size_t width) {
  LabelMask out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * mask.height / height;
    for (std::size_t x = 0; x < width; ++x) out.at(y, x) = mask.at(sy, x * mask.width / width);
  }
  return out;
}

Scene rescale_scene(const Scene& scene, double ratio) {
  if (!(ratio > 0.0)) throw std::invalid_argument("rescale: ratio must be positive");
  const auto h = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(scene.height())));
  const auto w = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(scene.width())));
  if (h < 2 || w < 2) {
    throw std::invalid_argument("rescale: ratio " + std::to_string(ratio) + " gives a " + std::to_string(h) + "x" +
                                std::to_string(w) + " scene (minimum 2x2)");
  }
  Scene out;
  out.meta = scene.meta;
  out.meta.scale = scene.meta.scale * ratio;
  out.image = resize_image(scene.image, h, w);
  out.mask = resize_nearest(scene.mask, h, w);
  return out;
}

std::vector<Scene> multiscale_rescale(const Scene& scene, std::span<const double> ratios) {
  std::vector<Scene> out;
  for (double r : ratios) out.push_back(rescale_scene(scene, r));
  return out;
}

Scene resize_to_input(const Scene& tile, std::size_t side) {
  if (side == 0) throw std::invalid_argument("resize_to_input: side must be positive");
  Scene out;
  out.meta = tile.meta;
  out.image = resize_image(tile.image, side, side);
  out.mask = resize_nearest(tile.mask, side, side);
  return out;
}

std::vector<std::size_t> tile_offsets(std::size_t extent, std::size_t tile, std::size_t overlap) {
  if (tile == 0 || overlap >= tile) {
    throw std::invalid_argument("tiling: overlap " + std::to_string(overlap) + " must be smaller than tile size " +
                                std::to_string(tile));
  }
  if (extent <= tile) return {0};
  const std::size_t stride = tile - overlap;
  std::vector<std::size_t> out;
  std::size_t off = 0;
  while (true) {
    out.push_back(off);
    if (off + tile >= extent) break;
    off += stride;
    if (off + tile > extent) off = extent - tile;
  }
  return out;
}

TileSet tile_scene(const Scene& scene, std::size_t tile_size, std::size_t overlap) {
  const auto rows = tile_offsets(std::max(scene.height(), tile_size), tile_size, overlap);
  const auto cols = tile_offsets(std::max(scene.width(), tile_size), tile_size, overlap);
  TileSet set;
  set.tile_size = tile_size;
  set.overlap = overlap;
  set.height = scene.height();
  set.width = scene.width();
  const Scene padded = pad_scene(scene, tile_size, tile_size);
  set.padded_height = padded.height();
  set.padded_width = padded.width();
  for (auto r : rows)
    for (auto c : cols) set.tiles.push_back(crop_scene(padded, r, c, tile_size, tile_size));
  return set;
}

Scene synth_scene(std::uint64_t seed, std::size_t size) {
  if (size < 64) throw std::invalid_argument("synth_scene: size must be at least 64, got " + std::to_string(size));
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + 0x5EA1CE);
  LabelMask mask;
  constexpr int kAttempts = 16;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    mask = draw_layout(rng, size);
    if (all_present(mask)) break;
  }
  if (!all_present(mask)) force_presence(rng, mask);
  Scene s;
  s.image = render(rng, mask);
  s.mask = std::move(mask);
  s.meta.source_id = "synth-" + std::to_string(seed);
  return s;
}

LabelMask stitch_predictions(std::span<const TileLogits> tiles, std::size_t height, std::size_t width) {
  if (tiles.empty()) throw std::invalid_argument("stitch: no tiles");
  const std::size_t K = tiles[0].logits.dim(0);
  std::vector<double> acc(K * height * width, 0.0);
  std::vector<std::uint32_t> count(height * width, 0);
  for (const auto& t : tiles) {
    const auto& s = t.logits.shape();
    if (s.size() != 3 || s[0] != K) throw ShapeError("stitch: tile logits must be KxHxW, got " + shape_str(s));
    if (t.row + s[1] > height || t.col + s[2] > width) throw ShapeError("stitch: tile extends past the image");
    auto v = t.logits.data();
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t y = 0; y < s[1]; ++y)
        for (std::size_t x = 0; x < s[2]; ++x) acc[(k * height + t.row + y) * width + t.col + x] += v[(k * s[1] + y) * s[2] + x];
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t x = 0; x < s[2]; ++x) ++count[(t.row + y) * width + t.col + x];
  }
  LabelMask out(height, width);
  const std::size_t hw = height * width;
  for (std::size_t p = 0; p < hw; ++p) {
    if (count[p] == 0) {
      throw std::invalid_argument("stitch: pixel (" + std::to_string(p / width) + ", " + std::to_string(p % width) +
                                  ") is not covered by any tile");
    }
    const double n = count[p];
    std::size_t best = 0;
    double best_v = acc[p] / n;
    for (std::size_t k = 1; k < K; ++k) {
      const double v = acc[k * hw + p] / n;
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    out.labels[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

LabelMask crop_mask(const LabelMask& mask, std::size_t height, std::size_t width) {
  if (height > mask.height || width > mask.width) throw ShapeError("crop_mask: crop larger than mask");
  LabelMask out(height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) out.at(y, x) = mask.at(y, x);
  return out;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string img, mask;
    if (!(ss >> img)) continue;
    ManifestRecord r;
    if (!(ss >> mask)) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": missing mask path");
    if (!(ss >> r.scale)) r.scale = 1.0;
    if (!(r.scale > 0.0)) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": scale must be positive");
    r.image = resolve(base, img);
    r.mask = resolve(base, mask);
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << "# image mask scale\n";
  for (const auto& r : records) {
    std::ostringstream scale;
    scale.precision(17);
    scale << r.scale;
    out << r.image.string() << ' ' << r.mask.string() << ' ' << scale.str() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

Scene read_scene(const std::filesystem::path& image, const std::filesystem::path& mask) {
  Scene s;
  RgbImage rgb = read_rgb_image(image);
  s.image = image_to_tensor(rgb);
  s.mask = read_mask(mask);
  if (s.mask.height != rgb.height || s.mask.width != rgb.width) {
    throw ImageError("scene " + image.string() + " is " + std::to_string(rgb.height) + "x" + std::to_string(rgb.width) +
                     " but its mask is " + std::to_string(s.mask.height) + "x" + std::to_string(s.mask.width));
  }
  s.meta.source_id = image.stem().string();
  return s;
}

void write_scene(const Scene& scene, const std::filesystem::path& image, const std::filesystem::path& mask) {
  write_rgb_image(image, tensor_to_image(scene.image));
  write_mask(mask, scene.mask);
}

}  // namespace gdgt
