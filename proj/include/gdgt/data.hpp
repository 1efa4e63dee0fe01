#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gdgt/label_mask.hpp"
#include "gdgt/tensor.hpp"

namespace gdgt {

struct SceneMeta {
  std::string source_id;
  double scale = 1.0;
  std::size_t row_offset = 0;
  std::size_t col_offset = 0;
};

/// An image (3 x H x W, values in [0,1]) with its ground-truth mask.
struct Scene {
  Tensor image;
  LabelMask mask;
  SceneMeta meta;

  std::size_t height() const { return mask.height; }
  std::size_t width() const { return mask.width; }
};

inline constexpr std::array<double, 4> kScaleRatios{0.25, 0.50, 1.00, 1.50};
inline constexpr std::size_t kTileSize = 800;
inline constexpr std::size_t kTileOverlap = 200;
inline constexpr std::size_t kFullInputSize = 512;

/// Bilinear image / nearest mask rescale to round(ratio * size).
Scene rescale_scene(const Scene& scene, double ratio);
std::vector<Scene> multiscale_rescale(const Scene& scene, std::span<const double> ratios = kScaleRatios);

/// Bilinear image / nearest mask resize to side x side.
Scene resize_to_input(const Scene& tile, std::size_t side = kFullInputSize);

/// Nearest-neighbour mask resize: source index floor(o * in / out).
LabelMask resize_nearest(const LabelMask& mask, std::size_t height, std::size_t width);

/// Tile origins along one axis: stride tile - overlap, last origin clamped
/// so the final tile ends at the edge. Extents below `tile` give {0}.
std::vector<std::size_t> tile_offsets(std::size_t extent, std::size_t tile, std::size_t overlap);

struct TileSet {
  std::vector<Scene> tiles;  // meta.row_offset / col_offset hold the origin
  std::size_t tile_size = 0;
  std::size_t overlap = 0;
  std::size_t height = 0, width = 0;                // source size
  std::size_t padded_height = 0, padded_width = 0;  // after reflect padding
};

/// Cuts a scene into overlapping square tiles. Scenes smaller than the tile
/// are first reflect-padded at the bottom/right up to tile_size.
TileSet tile_scene(const Scene& scene, std::size_t tile_size = kTileSize, std::size_t overlap = kTileOverlap);

/// Deterministic synthetic sea-ice scene (size >= 64): dark sea, bright
/// jagged thick-ice floes with thin-ice margins, pool-ice pores inside the
/// larger floes, and a textured land strip along one border. Every category
/// is present.
Scene synth_scene(std::uint64_t seed, std::size_t size);

struct TileLogits {
  Tensor logits;  // K x h x w
  std::size_t row = 0, col = 0;
};

/// Averages logits where tiles overlap, then takes the per-pixel argmax
/// (ties to the lower category). Throws if any pixel is uncovered.
LabelMask stitch_predictions(std::span<const TileLogits> tiles, std::size_t height, std::size_t width);

LabelMask crop_mask(const LabelMask& mask, std::size_t height, std::size_t width);

/// One line per scene: `<image> <mask> <scale>`; '#' starts a comment.
/// Relative paths resolve against the manifest's directory.
struct ManifestRecord {
  std::filesystem::path image;
  std::filesystem::path mask;
  double scale = 1.0;
};

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records);

Scene read_scene(const std::filesystem::path& image, const std::filesystem::path& mask);
void write_scene(const Scene& scene, const std::filesystem::path& image, const std::filesystem::path& mask);

}  // namespace gdgt
