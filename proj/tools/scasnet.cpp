// Command-line front end. Exit codes: 0 success, 1 failed check, 2 config error,
// 3 data error, 4 numerical divergence.

#include <iostream>

#include <CLI11.hpp>

#include "scasnet/app.hpp"

namespace {

enum Exit { kOk = 0, kFailed = 1, kConfig = 2, kData = 3, kDivergence = 4 };

void add_common(CLI::App* cmd, scasnet::CommonOptions& o, bool needs_out = true) {
  cmd->add_option("--profile", o.profile, "named preset: desk or paper")->capture_default_str();
  cmd->add_option_function<std::string>("--config", [&o](const std::string& p) { o.config_file = p; },
                                        "JSON config with sections model, train, infer, data, eval");
  auto* out = cmd->add_option("--out", o.out, "run directory");
  if (needs_out) out->required();
  cmd->add_option_function<std::uint64_t>("--seed", [&o](std::uint64_t s) { o.seed = s; },
                                          "overrides train.seed and data.seed");
  cmd->add_option_function<std::size_t>("--threads", [&o](std::size_t t) { o.threads = t; },
                                        "data-parallel shards per batch (1 = bit-reproducible)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ScasNet semantic labeling on synthetic aerial scenes"};
  app.require_subcommand(1);
  scasnet::CommonOptions opts;
  std::string dataset, checkpoint, predictions, split = "test", resume;
  bool inject_fault = false, print_config = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset into --out");
  add_common(gen, opts);

  auto* train = app.add_subcommand("train", "train a model on a dataset's training patches");
  add_common(train, opts);
  train->add_option("--dataset", dataset, "dataset directory")->required();
  train->add_option("--resume", resume, "training checkpoint directory to continue from");

  auto* infer = app.add_subcommand("infer", "multi-scale tiled inference over a split");
  add_common(infer, opts);
  infer->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  infer->add_option("--dataset", dataset, "dataset directory")->required();
  infer->add_option("--split", split, "train, val or test")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  add_common(eval, opts);
  eval->add_option("--dataset", dataset, "dataset directory")->required();
  eval->add_option("--pred", predictions, "directory written by infer")->required();
  eval->add_option("--split", split, "train, val or test")->capture_default_str();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks of every layer and the model");
  add_common(grad, opts);
  grad->add_flag("--inject-fault", inject_fault, "negate analytic gradients (the check must fail)");

  auto* ablate = app.add_subcommand("ablate", "train and score the six-variant ladder");
  add_common(ablate, opts);
  ablate->add_option("--dataset", dataset, "dataset directory")->required();

  auto* show = app.add_subcommand("config", "print the resolved configuration");
  add_common(show, opts, false);
  show->callback([&] { print_config = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (print_config) {
      std::cout << scasnet::to_json(scasnet::resolve_config(opts)).dump(2) << '\n';
    } else if (*gen) {
      scasnet::cmd_gen_data(opts);
    } else if (*train) {
      std::optional<std::filesystem::path> r;
      if (!resume.empty()) r = resume;
      scasnet::cmd_train(opts, dataset, r);
    } else if (*infer) {
      scasnet::cmd_infer(opts, checkpoint, dataset, split);
    } else if (*eval) {
      scasnet::cmd_eval(opts, dataset, predictions, split);
    } else if (*grad) {
      if (!scasnet::cmd_gradcheck(opts, inject_fault)) return kFailed;
    } else if (*ablate) {
      scasnet::cmd_ablate(opts, dataset);
    }
  } catch (const scasnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const scasnet::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const scasnet::ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const scasnet::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kOk;
}
