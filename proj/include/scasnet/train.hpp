#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "scasnet/maps.hpp"
#include "scasnet/model.hpp"

namespace scasnet {

struct TrainConfig {
  Real lr0 = 0.01;
  Real lr_drop_factor = 0.1;
  std::size_t lr_drop_every = 20;  // epochs
  Real momentum = 0.9;
  Real weight_decay = 0.0005;
  std::size_t batch_size = 4;
  std::size_t epochs = 80;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t save_every = 0;  // epochs between checkpoints; 0 = final only
  /// Samples drawn per epoch (a prefix of that epoch's shuffle); 0 = the whole set.
  std::size_t samples_per_epoch = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base);

/// lr0 * drop_factor^floor(epoch / drop_every)
Real learning_rate(const TrainConfig& cfg, std::size_t epoch);

struct LossOutput {
  Real loss = 0;        // nats per counted pixel
  Tensor grad;          // d loss / d logits, same shape as logits
  std::size_t counted = 0;
};

/// Normalized softmax cross-entropy over every non-ignored pixel of the batch.
/// gradient(j,k) = (p_k - [y_j == k]) / counted, zero at ignored pixels.
LossOutput cross_entropy_loss(const Tensor& logits, std::span<const LabelMap> labels,
                              std::span<const IgnoreMask> ignore = {});

struct SgdState {
  std::map<std::string, Tensor> velocity;
};

/// v <- momentum*v + grad + decay*param (decay only for params flagged for it);
/// param <- param - lr(epoch)*v.
void sgd_step(std::span<Param* const> params, SgdState& state, const TrainConfig& cfg, std::size_t epoch);

struct Sample {
  Tensor image;  // [1, C, H, W], network-normalized
  LabelMap labels;
};

struct EpochRecord {
  std::size_t epoch = 0;
  Real mean_loss = 0;
  Real lr = 0;
};

struct TrainState {
  std::size_t next_epoch = 0;
  std::vector<EpochRecord> history;
  SgdState sgd;
};

nlohmann::json history_to_json(const std::vector<EpochRecord>& history);
std::vector<EpochRecord> history_from_json(const nlohmann::json& j);
/// CSV with header epoch,mean_loss,lr.
void write_loss_csv(std::ostream& out, const std::vector<EpochRecord>& history);

using EpochCallback = std::function<void(const TrainState&, ScasNet&)>;

/// Seeded shuffle -> mini-batches -> forward -> loss -> backward -> SGD, for epochs
/// [state.next_epoch, cfg.epochs). Throws DivergenceError on a non-finite loss.
TrainState train_loop(ScasNet& model, std::span<const Sample> dataset, const TrainConfig& cfg,
                      TrainState state = {}, const EpochCallback& on_epoch = {});

/// Checkpoint with optimizer velocity as auxiliary tensors, so training can resume.
void save_training_checkpoint(const std::filesystem::path& dir, const ScasNet& model, const TrainState& state,
                              const TrainConfig& cfg);
struct ResumedTraining {
  ScasNet model;
  TrainState state;
};
ResumedTraining load_training_checkpoint(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

struct GradProbe {
  std::string name;
  Tensor* value;       // perturbed in place
  const Tensor* grad;  // analytic gradient, filled by the backward callback
};

struct GradcheckOptions {
  std::size_t samples = 200;  // coordinates per call; all of them if fewer exist
  Real tolerance = 1e-4;
  std::uint64_t seed = 0;
  Real step = 1e-5;           // h = step * max(1, |x|)
  Real floor = 1e-6;          // denominator floor for near-zero gradients
  bool flip_sign = false;     // corrupt the analytic gradient (harness sensitivity control)
};

struct GradcheckReport {
  std::string label;
  std::size_t checked = 0;
  Real max_rel_error = 0;
  Real mean_rel_error = 0;
  std::string worst;  // probe[index] with the largest error
  bool passed = false;
};

/// `loss` evaluates the scalar objective at the current values. `compute_grads` zeroes and
/// fills every probe's analytic gradient at the current values. Relative error per
/// coordinate is |a - n| / max(|a|, |n|, floor).
GradcheckReport gradcheck(const std::function<Real()>& loss, const std::function<void()>& compute_grads,
                          std::span<const GradProbe> probes, const GradcheckOptions& opts);

/// Checks every layer type (dilated conv, BN train/eval, ReLU, max-pool, bilinear resize,
/// elementwise sum, softmax + cross-entropy, residual correction, both aggregation modes,
/// refinement) on small random tensors.
std::vector<GradcheckReport> gradcheck_layers(const GradcheckOptions& opts);

/// End-to-end check of a model in eval mode with dropout off: CE loss on random labels.
GradcheckReport gradcheck_model(ScasNet& model, const Tensor& input, const GradcheckOptions& opts);

}  // namespace scasnet
