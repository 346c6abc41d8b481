#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "scasnet/maps.hpp"
#include "scasnet/train.hpp"

namespace scasnet {

/// 8-bit interleaved RGB.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }

  friend bool operator==(const Image&, const Image&) = default;
};

enum SceneClass : std::uint8_t { Background = 0, Building = 1, Road = 2, Car = 3, Vegetation = 4 };
inline constexpr std::size_t kSceneClasses = 5;
const std::vector<std::string>& scene_class_names();

struct CountRange {
  std::size_t min = 0;
  std::size_t max = 0;

  friend bool operator==(const CountRange&, const CountRange&) = default;
};

struct SceneSpec {
  std::size_t height = 128;
  std::size_t width = 128;
  CountRange buildings{2, 5};
  CountRange roads{1, 2};
  CountRange cars{2, 6};
  CountRange vegetation{1, 3};  // tree clusters
  CountRange lots{0, 2};        // paved areas, labelled road
  CountRange lawns{0, 2};       // smooth grass, labelled background
  Real noise = 10;              // per-channel Gaussian stddev, 8-bit units
  std::uint64_t seed = 0;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct Scene {
  Image image;
  LabelMap labels;
};

/// Shapes are drawn as lawns, vegetation, roads, lots, buildings, cars; later shapes
/// overwrite earlier ones. Buildings and cars cast shadows that darken the image only. Edges are anti-aliased in the image; labels follow pixel centers.
Scene generate_scene(const SceneSpec& spec);

struct Patch {
  Image image;
  LabelMap labels;
  std::string source;  // scene id
  std::size_t y = 0, x = 0;
  std::string augmentation = "id";
};

/// Crop origins along one axis: stride patch - overlap, last origin moved inward to end flush.
std::vector<std::size_t> crop_offsets(std::size_t extent, std::size_t patch, std::size_t overlap);
std::vector<Patch> crop_patches(const Image& image, const LabelMap& labels, std::size_t patch, std::size_t overlap,
                                const std::string& source = "");

enum class Augmentation { Identity, HFlip, VFlip, Rot90, Rot180, Rot270 };
inline constexpr std::array<Augmentation, 6> kAugmentations = {Augmentation::Identity, Augmentation::HFlip,
                                                                Augmentation::VFlip,    Augmentation::Rot90,
                                                                Augmentation::Rot180,   Augmentation::Rot270};
std::string augmentation_name(Augmentation a);

/// Rotations are counterclockwise. Rotations require square input.
Image transform(const Image& image, Augmentation a);
LabelMap transform(const LabelMap& labels, Augmentation a);

/// Six variants per patch: original, horizontal flip, vertical flip, rotations by 90/180/270.
std::vector<Patch> augment(const std::vector<Patch>& patches);

/// [1, 3, H, W] tensor with values (v / 255 - 0.5) * 2.
Tensor to_network_input(const Image& image);

// Binary PPM (P6) images and PGM (P5) label maps holding class indices.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_pgm(const std::filesystem::path& path);

struct DataConfig {
  std::size_t scene_height = 128;
  std::size_t scene_width = 128;
  std::size_t train_scenes = 64;
  std::size_t val_scenes = 16;
  std::size_t test_scenes = 16;
  std::size_t patch = 64;
  std::size_t overlap = 16;
  bool augment = true;
  CountRange buildings{2, 5};
  CountRange roads{1, 2};
  CountRange cars{2, 6};
  CountRange vegetation{1, 3};
  CountRange lots{0, 2};
  CountRange lawns{0, 2};
  Real noise = 10;
  std::uint64_t seed = 0;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

void validate(const DataConfig& cfg);
nlohmann::json to_json(const DataConfig& cfg);
DataConfig data_config_from_json(const nlohmann::json& j, const DataConfig& base);

/// Scene spec for scene `index` of a split (0 train, 1 val, 2 test); seeds are derived per scene.
SceneSpec scene_spec(const DataConfig& cfg, std::size_t split, std::size_t index);

struct DatasetEntry {
  std::string image;   // relative to the dataset root
  std::string labels;
  std::string source;
  std::size_t y = 0, x = 0;
  std::string augmentation = "id";
};

struct DatasetManifest {
  std::filesystem::path root;
  DataConfig config;
  std::vector<std::string> class_names;
  std::vector<DatasetEntry> train_patches;
  std::vector<DatasetEntry> train_scenes, val_scenes, test_scenes;
};

/// Writes scenes/, patches/ and manifest.json under `root`. Patches (augmented when
/// configured) are produced for the train split only; val/test keep whole scenes.
DatasetManifest generate_dataset(const DataConfig& cfg, const std::filesystem::path& root);
void write_manifest(const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& root);

std::vector<Sample> load_samples(const DatasetManifest& m, const std::vector<DatasetEntry>& entries);

}  // namespace scasnet
