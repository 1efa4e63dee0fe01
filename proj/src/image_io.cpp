#include "gdgt/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace gdgt {

namespace {

struct PngImage {
  png_image img;
  PngImage() {
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&img); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

std::string describe(const std::filesystem::path& path, const png_image& img) {
  return path.string() + ": " + img.message;
}

}  // namespace

RgbImage read_rgb_image(const std::filesystem::path& path) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.img, path.c_str())) throw ImageError(describe(path, png.img));
  png.img.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.height = png.img.height;
  out.width = png.img.width;
  out.pixels.resize(PNG_IMAGE_SIZE(png.img));
  if (!png_image_finish_read(&png.img, nullptr, out.pixels.data(), 0, nullptr)) {
    throw ImageError(describe(path, png.img));
  }
  return out;
}

void write_rgb_image(const std::filesystem::path& path, const RgbImage& image) {
  if (image.pixels.size() != image.height * image.width * 3) throw ImageError("write_rgb_image: buffer size mismatch");
  PngImage png;
  png.img.width = static_cast<png_uint_32>(image.width);
  png.img.height = static_cast<png_uint_32>(image.height);
  png.img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png.img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw ImageError(describe(path, png.img));
  }
}

Tensor image_to_tensor(const RgbImage& image) {
  const std::size_t hw = image.height * image.width;
  std::vector<double> v(3 * hw);
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) v[c * hw + p] = image.pixels[3 * p + c] / 255.0;
  return Tensor::from_data({3, image.height, image.width}, std::move(v));
}

RgbImage tensor_to_image(const Tensor& chw) {
  const auto& s = chw.shape();
  if (s.size() != 3 || s[0] != 3) throw ShapeError("tensor_to_image: expected 3xHxW, got " + shape_str(s));
  RgbImage out{s[1], s[2], std::vector<std::uint8_t>(3 * s[1] * s[2])};
  const std::size_t hw = s[1] * s[2];
  auto v = chw.data();
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c)
      out.pixels[3 * p + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v[c * hw + p], 0.0, 1.0) * 255.0));
  return out;
}

LabelMask read_mask(const std::filesystem::path& path) {
  RgbImage rgb = read_rgb_image(path);
  LabelMask mask(rgb.height, rgb.width);
  for (std::size_t y = 0; y < rgb.height; ++y)
    for (std::size_t x = 0; x < rgb.width; ++x) {
      const std::uint8_t* px = rgb.pixels.data() + 3 * (y * rgb.width + x);
      const Rgb color{px[0], px[1], px[2]};
      auto it = std::find(kPalette.begin(), kPalette.end(), color);
      if (it == kPalette.end()) {
        throw ImageError(path.string() + ": off-palette color (" + std::to_string(px[0]) + "," + std::to_string(px[1]) +
                         "," + std::to_string(px[2]) + ") at row " + std::to_string(y) + ", col " + std::to_string(x));
      }
      mask.at(y, x) = static_cast<std::uint8_t>(it - kPalette.begin());
    }
  return mask;
}

void write_mask(const std::filesystem::path& path, const LabelMask& mask) {
  if (mask.labels.size() != mask.height * mask.width) throw ImageError("write_mask: buffer size mismatch");
  for (auto l : mask.labels)
    if (l >= kNumCategories) throw ImageError("write_mask: label " + std::to_string(l) + " has no palette entry");
  std::array<std::uint8_t, 3 * kNumCategories> colormap{};
  for (std::size_t k = 0; k < kNumCategories; ++k) std::copy(kPalette[k].begin(), kPalette[k].end(), colormap.begin() + 3 * k);
  PngImage png;
  png.img.width = static_cast<png_uint_32>(mask.width);
  png.img.height = static_cast<png_uint_32>(mask.height);
  png.img.format = PNG_FORMAT_RGB_COLORMAP;
  png.img.colormap_entries = kNumCategories;
  if (!png_image_write_to_file(&png.img, path.c_str(), 0, mask.labels.data(), 0, colormap.data())) {
    throw ImageError(describe(path, png.img));
  }
}

RgbImage colorize(const LabelMask& mask) {
  RgbImage out{mask.height, mask.width, std::vector<std::uint8_t>(3 * mask.size())};
  for (std::size_t p = 0; p < mask.size(); ++p) {
    const Rgb& c = kPalette.at(mask.labels[p]);
    std::copy(c.begin(), c.end(), out.pixels.begin() + 3 * p);
  }
  return out;
}

RgbImage side_by_side(const std::vector<RgbImage>& images) {
  RgbImage out;
  for (const auto& im : images) {
    out.height = std::max(out.height, im.height);
    out.width += im.width;
  }
  out.pixels.assign(3 * out.height * out.width, 0);
  std::size_t x0 = 0;
  for (const auto& im : images) {
    for (std::size_t y = 0; y < im.height; ++y)
      std::copy_n(im.pixels.data() + 3 * y * im.width, 3 * im.width, out.pixels.data() + 3 * (y * out.width + x0));
    x0 += im.width;
  }
  return out;
}

}  // namespace gdgt
