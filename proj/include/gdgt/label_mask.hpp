#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "gdgt/tensor.hpp"

namespace gdgt {

inline constexpr std::size_t kNumCategories = 5;

enum class Category : std::uint8_t { sea = 0, thin_ice = 1, thick_ice = 2, land = 3, pool_ice = 4 };

inline constexpr std::array<std::string_view, kNumCategories> kCategoryNames{"Sea", "Thin-Ice", "Thick-Ice", "Land",
                                                                             "Pool-Ice"};

/// Per-pixel category map, row-major.
struct LabelMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  LabelMask() = default;
  LabelMask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), labels(h * w, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
  std::size_t size() const { return labels.size(); }

  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

/// Per-pixel argmax of B x K x H x W logits; ties go to the lower index.
std::vector<LabelMask> argmax_labels(const Tensor& logits);

}  // namespace gdgt
