#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "scasnet/maps.hpp"
#include "scasnet/model.hpp"

namespace scasnet {

struct InferConfig {
  std::vector<Real> scales{0.5, 1, 1.5};
  std::size_t patch = 64;  // tile side; a multiple of the model stride

  friend bool operator==(const InferConfig&, const InferConfig&) = default;
};

void validate(const InferConfig& cfg);
nlohmann::json to_json(const InferConfig& cfg);
InferConfig infer_config_from_json(const nlohmann::json& j, const InferConfig& base);

/// Valid region of one tile on the canvas.
struct TileRect {
  std::size_t y = 0, x = 0, h = 0, w = 0;

  friend bool operator==(const TileRect&, const TileRect&) = default;
};

/// Non-overlapping tiles of at most tile_h x tile_w covering an h x w canvas, row-major.
/// Edge tiles are ragged.
std::vector<TileRect> plan_tiles(std::size_t h, std::size_t w, std::size_t tile_h, std::size_t tile_w);

struct PlacedTile {
  ProbMap probs;  // exactly the valid region
  std::size_t y = 0, x = 0;
};

/// Assembles tiles into an h x w canvas. Throws ShapeError when a tile leaves the canvas,
/// tiles overlap, or a pixel stays unwritten. `write_count`, when given, receives the
/// number of writes per pixel.
ProbMap stitch(const std::vector<PlacedTile>& tiles, std::size_t h, std::size_t w,
               std::vector<std::uint32_t>* write_count = nullptr);

/// Mirror padding of a [N,C,H,W] tensor on the bottom and right edges (edge pixel not repeated).
Tensor reflect_pad(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Divides each pixel's channel vector by its sum.
void renormalize(ProbMap& p);

struct InferResult {
  ProbMap probs;
  LabelMap labels;
};

/// Multi-scale tiled inference: for each scale, resize, tile without overlap (edge tiles
/// reflect-padded to the tile size, predictions cropped back), softmax per tile, stitch,
/// resize back, average over scales. Labels are the argmax of the averaged map.
/// image: [1, C, H, W] network input.
InferResult infer_image(ScasNet& model, const Tensor& image, const InferConfig& cfg);

/// Writes <stem>.tnsr (probabilities) plus <stem>.json with K, H, W and class names.
void save_probmap(const std::filesystem::path& stem, const ProbMap& p, const std::vector<std::string>& class_names);
ProbMap load_probmap(const std::filesystem::path& stem);

}  // namespace scasnet
