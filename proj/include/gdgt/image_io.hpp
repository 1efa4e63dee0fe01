#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "gdgt/label_mask.hpp"
#include "gdgt/tensor.hpp"

namespace gdgt {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rgb = std::array<std::uint8_t, 3>;

/// Mask file colors, indexed by category.
inline constexpr std::array<Rgb, kNumCategories> kPalette{{
    {0, 0, 128},      // Sea
    {135, 206, 235},  // Thin-Ice
    {255, 255, 255},  // Thick-Ice
    {139, 69, 19},    // Land
    {70, 130, 180},   // Pool-Ice
}};

/// 8-bit interleaved RGB raster.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

/// Reads any PNG and converts it to 8-bit RGB.
RgbImage read_rgb_image(const std::filesystem::path& path);
void write_rgb_image(const std::filesystem::path& path, const RgbImage& image);

/// 3 x H x W tensor with value v/255.
Tensor image_to_tensor(const RgbImage& image);
/// Inverse of image_to_tensor; values are clamped to [0,1] and rounded.
RgbImage tensor_to_image(const Tensor& chw);

/// Reads a mask PNG (paletted or RGB). Any color outside kPalette is an
/// error naming the first offending pixel.
LabelMask read_mask(const std::filesystem::path& path);
/// Writes an 8-bit paletted PNG carrying exactly the kPalette entries.
void write_mask(const std::filesystem::path& path, const LabelMask& mask);

RgbImage colorize(const LabelMask& mask);
/// Places images left to right on a black canvas.
RgbImage side_by_side(const std::vector<RgbImage>& images);

}  // namespace gdgt
