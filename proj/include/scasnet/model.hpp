#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scasnet/blocks.hpp"
#include "scasnet/maps.hpp"

namespace scasnet {

struct StageConfig {
  std::size_t convs = 2;
  std::size_t width = 16;
  bool pool = true;

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

enum class ContextMode { None, ParallelStack, Cascaded };

struct ModelConfig {
  std::size_t in_channels = 3;
  std::vector<StageConfig> stages;
  ContextMode context = ContextMode::Cascaded;
  std::vector<std::size_t> dilation_rates;
  std::size_t context_width = 64;
  bool context_correction = true;
  /// 1-based encoder stage numbers whose last conv (pre-pool) feeds a refinement step,
  /// ordered deep to shallow.
  std::vector<std::size_t> refinement_taps;
  std::size_t refinement_width = 32;
  bool refinement_correction = true;
  std::size_t classes = 5;
  Real dropout = 0.5;
  bool use_batchnorm = false;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Four 3x3 stages of widths 16/32/64/64, pooling after the first three (stride 8),
/// rates 4/3/2/1, taps at stages 3 then 2.
ModelConfig desk_model_config();
/// The reference configuration: VGG-16 layout, rates 24/18/12/6, three refinement taps.
ModelConfig paper_model_config();

/// Throws ConfigError describing the first violated invariant.
void validate(const ModelConfig& cfg);
std::size_t output_stride(const ModelConfig& cfg);

nlohmann::json to_json(const ModelConfig& cfg);
/// Rejects unknown keys; missing keys keep the values of `base`.
ModelConfig model_config_from_json(const nlohmann::json& j, const ModelConfig& base);

/// VGG-style encoder -> context aggregation -> dropout -> successive refinement ->
/// 1x1 classifier -> bilinear resize to input resolution. Outputs logits.
class ScasNet {
 public:
  ScasNet() = default;
  explicit ScasNet(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  std::size_t stride() const { return output_stride(cfg_); }

  /// batch: [N, in_channels, H, W] with H, W multiples of stride(). Returns [N, K, H, W].
  Tensor forward(const Tensor& batch, Mode mode, std::uint64_t seed = 0);
  /// Accumulates parameter gradients; returns the gradient wrt the input batch.
  Tensor backward(const Tensor& grad_logits);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  Param* find_param(const std::string& name);
  void zero_grad();
  std::vector<ResidualCorrection*> corrections();

 private:
  struct Stage {
    std::vector<Conv2d> convs;
    std::vector<BatchNorm> norms;
    std::vector<ReLU> relus;
    std::optional<MaxPool2x2> pool;
  };

  ModelConfig cfg_;
  std::vector<Stage> stages_;
  std::optional<ContextAggregator> context_;
  Dropout dropout_{0};
  std::vector<RefinementStep> refinements_;
  Conv2d classifier_;
  Resize upsample_;

  std::vector<Shape> tap_shapes_;  // per stage, pre-pool output shape of the last forward
  bool ready_ = false;
};

/// He-initialized model (zero-mean Gaussian, variance 2/fan_in); biases zero, the final
/// 1x1 conv of every residual correction zero. Each parameter draws from a stream keyed
/// by (seed, parameter name), so variants that share a layer share its initial weights.
ScasNet build_model(const ModelConfig& cfg, std::uint64_t seed);

/// Eval-mode per-pixel argmax of softmax(forward(image)). image: [1, C, H, W].
LabelMap predict(ScasNet& model, const Tensor& image);

struct CheckpointMeta {
  std::size_t epoch = 0;  // number of completed epochs
  std::uint64_t seed = 0;
  nlohmann::json history = nlohmann::json::array();
  nlohmann::json extra = nlohmann::json::object();
};

/// Directory with manifest.json and one SCASTNSR blob per parameter in declaration
/// order. `aux` tensors (e.g. optimizer velocity) are stored after the parameters.
void save_checkpoint(const std::filesystem::path& dir, const ScasNet& model, const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& aux = {});

struct LoadedCheckpoint {
  ScasNet model;
  CheckpointMeta meta;
  std::vector<std::pair<std::string, Tensor>> aux;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace scasnet
