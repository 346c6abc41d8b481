#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scasnet/data.hpp"
#include "scasnet/eval.hpp"
#include "scasnet/infer.hpp"
#include "scasnet/model.hpp"
#include "scasnet/train.hpp"

namespace scasnet {

/// Every setting a command reads, one section per module.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  InferConfig infer;
  DataConfig data;
  EvalConfig eval;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// "desk" (the runnable default) or "paper" (reference scale, documentary).
RunConfig profile_config(const std::string& name);
const std::vector<std::string>& profile_names();

void validate(const RunConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);
/// Sections and keys absent from `j` keep the values of `base`; unknown ones are rejected.
RunConfig run_config_from_json(const nlohmann::json& j, const RunConfig& base);

struct CommonOptions {
  std::string profile = "desk";
  std::optional<std::filesystem::path> config_file;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;     // overrides train.seed and data.seed
  std::optional<std::size_t> threads;    // overrides train.threads
};

/// Profile, then config file, then flag overrides; validated.
RunConfig resolve_config(const CommonOptions& opts);

/// One row of the variant ladder.
struct AblationVariant {
  std::string name;
  ModelConfig model;
};
/// Baseline encoder, +parallel-stack contexts, +self-cascaded contexts, +context residual
/// correction, +refinement, +refinement residual correction.
std::vector<AblationVariant> ablation_ladder(const ModelConfig& full);

struct AblationRow {
  std::string name;
  EvalReport report;
  Real final_loss = 0;
};

// Commands. Each writes config.json (the resolved config), run.json (command, inputs,
// format version) and log.txt into the run directory. Errors surface as ConfigError,
// DataError or DivergenceError.
DatasetManifest cmd_gen_data(const CommonOptions& opts);
TrainState cmd_train(const CommonOptions& opts, const std::filesystem::path& dataset,
                     const std::optional<std::filesystem::path>& resume = std::nullopt);
void cmd_infer(const CommonOptions& opts, const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
               const std::string& split);
EvalReport cmd_eval(const CommonOptions& opts, const std::filesystem::path& dataset, const std::filesystem::path& predictions,
                    const std::string& split);
/// Returns true when every check passes.
bool cmd_gradcheck(const CommonOptions& opts, bool inject_fault);
std::vector<AblationRow> cmd_ablate(const CommonOptions& opts, const std::filesystem::path& dataset);

/// Scene entries of "train", "val" or "test".
const std::vector<DatasetEntry>& split_entries(const DatasetManifest& m, const std::string& split);

/// Trains `model_cfg` on the manifest's train patches with `cfg.train`, writing loss.csv,
/// checkpoints and log lines under `dir`.
TrainState train_on_dataset(ScasNet& model, const RunConfig& cfg, const DatasetManifest& m,
                            const std::filesystem::path& dir, TrainState state = {});

/// Multi-scale inference + scoring over one split with the eroded-boundary protocol.
struct SplitResult {
  EvalReport report;
  PrAccumulator pr;
};
SplitResult evaluate_split(ScasNet& model, const RunConfig& cfg, const DatasetManifest& m, const std::string& split,
                           const std::optional<std::filesystem::path>& dump_dir = std::nullopt);

void write_ablation_table(std::ostream& out, const std::vector<AblationRow>& rows,
                          const std::vector<std::string>& class_names);

}  // namespace scasnet
