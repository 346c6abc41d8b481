#include "scasnet/app.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "scasnet/json_util.hpp"

namespace scasnet {

namespace fs = std::filesystem;

RunConfig profile_config(const std::string& name) {
  RunConfig c;
  if (name == "desk") {
    c.model = desk_model_config();
    c.model.classes = kSceneClasses;
    c.train.lr0 = 0.01;
    c.train.epochs = 300;
    c.train.batch_size = 4;
    c.train.samples_per_epoch = 32;
    c.train.lr_drop_every = 100;
    c.infer.patch = 64;
    return c;
  }
  if (name == "paper") {
    c.model = paper_model_config();
    c.model.classes = 6;
    c.train.lr0 = 0.01;
    c.train.epochs = 80;
    c.train.batch_size = 4;
    c.train.lr_drop_every = 20;
    c.infer.patch = 400;
    c.data.scene_height = c.data.scene_width = 1500;
    c.data.patch = 400;
    c.data.overlap = 100;
    c.data.buildings = {20, 40};
    c.data.roads = {2, 5};
    c.data.cars = {20, 60};
    c.data.vegetation = {10, 25};
    c.data.lots = {5, 15};
    c.data.lawns = {5, 15};
    return c;
  }
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

const std::vector<std::string>& profile_names() {
  static const std::vector<std::string> names = {"desk", "paper"};
  return names;
}

void validate(const RunConfig& cfg) {
  validate(cfg.model);
  validate(cfg.train);
  validate(cfg.infer);
  validate(cfg.data);
  validate(cfg.eval);
}

nlohmann::json to_json(const RunConfig& cfg) {
  return {{"model", to_json(cfg.model)},
          {"train", to_json(cfg.train)},
          {"infer", to_json(cfg.infer)},
          {"data", to_json(cfg.data)},
          {"eval", to_json(cfg.eval)}};
}

RunConfig run_config_from_json(const nlohmann::json& j, const RunConfig& base) {
  reject_unknown_keys(j, {"model", "train", "infer", "data", "eval"}, "config");
  RunConfig c = base;
  if (j.contains("model")) c.model = model_config_from_json(j["model"], c.model);
  if (j.contains("train")) c.train = train_config_from_json(j["train"], c.train);
  if (j.contains("infer")) c.infer = infer_config_from_json(j["infer"], c.infer);
  if (j.contains("data")) c.data = data_config_from_json(j["data"], c.data);
  if (j.contains("eval")) c.eval = eval_config_from_json(j["eval"], c.eval);
  return c;
}

RunConfig resolve_config(const CommonOptions& opts) {
  RunConfig c = profile_config(opts.profile);
  if (opts.config_file) {
    std::ifstream f(*opts.config_file);
    if (!f) throw ConfigError("cannot read config file " + opts.config_file->string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(opts.config_file->string() + ": " + e.what());
    }
    c = run_config_from_json(j, c);
  }
  if (opts.seed) c.train.seed = c.data.seed = *opts.seed;
  if (opts.threads) c.train.threads = *opts.threads;
  validate(c);
  return c;
}

std::vector<AblationVariant> ablation_ladder(const ModelConfig& full) {
  ModelConfig base = full;
  base.context = ContextMode::None;
  base.context_correction = false;
  base.refinement_taps.clear();
  base.refinement_correction = false;

  ModelConfig parallel = base;
  parallel.context = ContextMode::ParallelStack;
  ModelConfig cascade = parallel;
  cascade.context = ContextMode::Cascaded;
  ModelConfig crec = cascade;
  crec.context_correction = true;
  ModelConfig ref = crec;
  ref.refinement_taps = full.refinement_taps;
  ModelConfig rrec = ref;
  rrec.refinement_correction = true;
  return {{"baseline", base}, {"msc", parallel}, {"msc+sc", cascade},
          {"msc+sc+crec", crec}, {"+ref", ref},  {"+ref+rrec", rrec}};
}

namespace {

/// Run directory with echoed config, run manifest and a log.
class RunDir {
 public:
  RunDir(const fs::path& root, const std::string& command, const RunConfig& cfg, const CommonOptions& opts,
         nlohmann::json inputs)
      : root_(root), start_(std::chrono::steady_clock::now()) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw DataError("cannot create output directory " + root.string() + ": " + ec.message());
    write_text(root / "config.json", to_json(cfg).dump(2) + "\n");
    nlohmann::json run = {{"format", "scasnet-run"}, {"version", 1},     {"command", command},
                          {"profile", opts.profile}, {"inputs", inputs}, {"config_file", "config.json"}};
    write_text(root / "run.json", run.dump(2) + "\n");
    log_.open(root / "log.txt");
    if (!log_) throw DataError("cannot write " + (root / "log.txt").string());
  }

  const fs::path& root() const { return root_; }

  void log(const std::string& line) {
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "[%8.1fs] ", t);
    log_ << stamp << line << '\n';
    log_.flush();
    std::cerr << line << '\n';
  }

  static void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
    if (!f) throw DataError("write failed: " + path.string());
  }

 private:
  fs::path root_;
  std::ofstream log_;
  std::chrono::steady_clock::time_point start_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_loss(const fs::path& path, const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  write_loss_csv(os, history);
  RunDir::write_text(path, os.str());
}

void check_classes(const ModelConfig& model, const DatasetManifest& m) {
  if (model.classes != m.class_names.size())
    throw ConfigError("model.classes is " + std::to_string(model.classes) + " but the dataset has " +
                      std::to_string(m.class_names.size()) + " classes");
}

TrainState train_logged(ScasNet& model, const RunConfig& cfg, const DatasetManifest& m, const fs::path& dir,
                        TrainState state, RunDir* run) {
  check_classes(model.config(), m);
  if (m.train_patches.empty()) throw DataError("dataset has no training patches");
  const auto samples = load_samples(m, m.train_patches);
  if (run) run->log("loaded " + std::to_string(samples.size()) + " training patches");
  auto on_epoch = [&](const TrainState& st, ScasNet& net) {
    const auto& rec = st.history.back();
    if (run)
      run->log("epoch " + std::to_string(rec.epoch) + " loss " + fmt("%.6f", rec.mean_loss) + " lr " +
               fmt("%g", rec.lr));
    if (cfg.train.save_every > 0 && st.next_epoch % cfg.train.save_every == 0 && st.next_epoch < cfg.train.epochs) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04zu", st.next_epoch);
      save_training_checkpoint(dir / "checkpoints" / name, net, st, cfg.train);
      write_loss(dir / "loss.csv", st.history);
    }
  };
  state = train_loop(model, samples, cfg.train, std::move(state), on_epoch);
  save_training_checkpoint(dir / "checkpoint", model, state, cfg.train);
  write_loss(dir / "loss.csv", state.history);
  return state;
}

void write_report(const fs::path& dir, const SplitResult& r, const std::vector<std::string>& names) {
  RunDir::write_text(dir / "report.json", report_to_json(r.report, names).dump(2) + "\n");
  std::ostringstream table, pr;
  write_report_table(table, r.report, names);
  RunDir::write_text(dir / "report.txt", table.str());
  write_pr_csv(pr, r.pr, names);
  RunDir::write_text(dir / "pr.csv", pr.str());
}

}  // namespace

const std::vector<DatasetEntry>& split_entries(const DatasetManifest& m, const std::string& split) {
  if (split == "train") return m.train_scenes;
  if (split == "val") return m.val_scenes;
  if (split == "test") return m.test_scenes;
  throw ConfigError("unknown split '" + split + "' (expected train, val or test)");
}

TrainState train_on_dataset(ScasNet& model, const RunConfig& cfg, const DatasetManifest& m, const fs::path& dir,
                            TrainState state) {
  return train_logged(model, cfg, m, dir, std::move(state), nullptr);
}

SplitResult evaluate_split(ScasNet& model, const RunConfig& cfg, const DatasetManifest& m, const std::string& split,
                           const std::optional<fs::path>& dump_dir) {
  check_classes(model.config(), m);
  const std::size_t K = m.class_names.size();
  SplitResult out{{}, PrAccumulator(K, even_thresholds(cfg.eval.pr_thresholds))};
  Confusion conf(K);
  if (dump_dir) {
    fs::create_directories(*dump_dir / "pred");
    fs::create_directories(*dump_dir / "prob");
  }
  for (const auto& e : split_entries(m, split)) {
    const Image img = read_ppm(m.root / e.image);
    const LabelMap gt = read_pgm(m.root / e.labels);
    const InferResult res = infer_image(model, to_network_input(img), cfg.infer);
    const IgnoreMask mask = erode_boundaries(gt, cfg.eval.erosion_radius);
    conf.add(res.labels, gt, mask);
    out.pr.add(res.probs, gt, mask);
    if (dump_dir) {
      write_pgm(*dump_dir / "pred" / (e.source + ".pgm"), res.labels);
      save_probmap(*dump_dir / "prob" / e.source, res.probs, m.class_names);
    }
  }
  out.report = from_confusion(conf);
  return out;
}

DatasetManifest cmd_gen_data(const CommonOptions& opts) {
  const RunConfig cfg = resolve_config(opts);
  RunDir run(opts.out, "gen-data", cfg, opts, nlohmann::json::object());
  DatasetManifest m = generate_dataset(cfg.data, opts.out);
  run.log("wrote " + std::to_string(m.train_scenes.size()) + " train / " + std::to_string(m.val_scenes.size()) +
          " val / " + std::to_string(m.test_scenes.size()) + " test scenes and " +
          std::to_string(m.train_patches.size()) + " training patches");
  return m;
}

TrainState cmd_train(const CommonOptions& opts, const fs::path& dataset, const std::optional<fs::path>& resume) {
  const RunConfig cfg = resolve_config(opts);
  const DatasetManifest m = load_manifest(dataset);
  nlohmann::json inputs = {{"dataset", fs::absolute(dataset).string()}};
  if (resume) inputs["resume"] = fs::absolute(*resume).string();
  RunDir run(opts.out, "train", cfg, opts, inputs);
  if (resume) {
    auto r = load_training_checkpoint(*resume);
    if (!(r.model.config() == cfg.model)) run.log("note: model config taken from the resumed checkpoint");
    run.log("resuming at epoch " + std::to_string(r.state.next_epoch));
    return train_logged(r.model, cfg, m, opts.out, std::move(r.state), &run);
  }
  ScasNet model = build_model(cfg.model, cfg.train.seed);
  TrainState st = train_logged(model, cfg, m, opts.out, {}, &run);
  run.log("final loss " + fmt("%.6f", st.history.empty() ? 0.0 : st.history.back().mean_loss));
  return st;
}

void cmd_infer(const CommonOptions& opts, const fs::path& checkpoint, const fs::path& dataset,
               const std::string& split) {
  RunConfig cfg = resolve_config(opts);
  const DatasetManifest m = load_manifest(dataset);
  auto ck = load_checkpoint(checkpoint);
  cfg.model = ck.model.config();
  RunDir run(opts.out, "infer", cfg, opts,
             {{"checkpoint", fs::absolute(checkpoint).string()},
              {"dataset", fs::absolute(dataset).string()},
              {"split", split}});
  SplitResult r = evaluate_split(ck.model, cfg, m, split, opts.out);
  run.log("wrote predictions for " + std::to_string(split_entries(m, split).size()) + " scenes; mean IoU " +
          fmt("%.4f", r.report.mean_iou));
}

EvalReport cmd_eval(const CommonOptions& opts, const fs::path& dataset, const fs::path& predictions,
                    const std::string& split) {
  const RunConfig cfg = resolve_config(opts);
  const DatasetManifest m = load_manifest(dataset);
  RunDir run(opts.out, "eval", cfg, opts,
             {{"dataset", fs::absolute(dataset).string()},
              {"predictions", fs::absolute(predictions).string()},
              {"split", split}});
  const std::size_t K = m.class_names.size();
  SplitResult r{{}, PrAccumulator(K, even_thresholds(cfg.eval.pr_thresholds))};
  Confusion conf(K);
  std::size_t with_probs = 0;
  for (const auto& e : split_entries(m, split)) {
    const LabelMap gt = read_pgm(m.root / e.labels);
    const LabelMap pred = read_pgm(predictions / "pred" / (e.source + ".pgm"));
    if (pred.height != gt.height || pred.width != gt.width)
      throw DataError("prediction for " + e.source + " has the wrong size");
    const IgnoreMask mask = erode_boundaries(gt, cfg.eval.erosion_radius);
    conf.add(pred, gt, mask);
    auto prob_stem = predictions / "prob" / e.source;
    if (fs::exists(fs::path(prob_stem).concat(".tnsr"))) {
      r.pr.add(load_probmap(prob_stem), gt, mask);
      ++with_probs;
    }
  }
  r.report = from_confusion(conf);
  write_report(opts.out, r, m.class_names);
  run.log("scored " + std::to_string(split_entries(m, split).size()) + " scenes (" + std::to_string(with_probs) +
          " with probability maps); mean IoU " + fmt("%.4f", r.report.mean_iou) + ", mean F1 " +
          fmt("%.4f", r.report.mean_f1) + ", overall accuracy " + fmt("%.4f", r.report.overall_accuracy));
  return r.report;
}

bool cmd_gradcheck(const CommonOptions& opts, bool inject_fault) {
  const RunConfig cfg = resolve_config(opts);
  RunDir run(opts.out, "gradcheck", cfg, opts, {{"inject_fault", inject_fault}});
  GradcheckOptions layer_opts;
  layer_opts.seed = cfg.train.seed;
  layer_opts.flip_sign = inject_fault;
  auto reports = gradcheck_layers(layer_opts);

  ScasNet model = build_model(cfg.model, cfg.train.seed);
  std::mt19937_64 rng(cfg.train.seed);
  auto uniform = [&] { return static_cast<Real>(rng() >> 11) * 0x1.0p-53 * 0.4 - 0.2; };
  // Non-zero correction outputs so the residual branches carry gradient, and non-zero
  // biases: with zero biases a projection of an all-zero ReLU map sits exactly on the kink.
  for (auto* rc : model.corrections())
    for (auto& v : rc->conv_c().weight().value.values()) v = uniform();
  for (auto* p : model.params())
    if (p->name.ends_with(".b"))
      for (auto& v : p->value.values()) v = uniform();
  const std::size_t side = 2 * model.stride();
  Tensor input({1, cfg.model.in_channels, side, side});
  for (auto& v : input.values()) v = uniform() * 5;
  GradcheckOptions model_opts = layer_opts;
  model_opts.samples = 200;
  model_opts.tolerance = 1e-3;
  auto rep = gradcheck_model(model, input, model_opts);
  rep.label = "model";
  reports.push_back(rep);

  bool ok = true;
  nlohmann::json j = nlohmann::json::array();
  std::ostringstream table;
  for (const auto& r : reports) {
    ok = ok && r.passed;
    j.push_back({{"label", r.label},
                 {"checked", r.checked},
                 {"max_rel_error", r.max_rel_error},
                 {"mean_rel_error", r.mean_rel_error},
                 {"worst", r.worst},
                 {"passed", r.passed}});
    char line[200];
    std::snprintf(line, sizeof line, "%-28s %5zu %12.3e %s\n", r.label.c_str(), r.checked, r.max_rel_error,
                  r.passed ? "PASS" : "FAIL");
    table << line;
  }
  RunDir::write_text(opts.out / "gradcheck.json", j.dump(2) + "\n");
  RunDir::write_text(opts.out / "gradcheck.txt", table.str());
  run.log(table.str() + (ok ? "all gradient checks passed" : "gradient check FAILED"));
  return ok;
}

void write_ablation_table(std::ostream& out, const std::vector<AblationRow>& rows,
                          const std::vector<std::string>& class_names) {
  char line[256];
  std::string header = "variant      ";
  for (const auto& n : class_names) {
    char cell[16];
    std::snprintf(cell, sizeof cell, " %10.10s", n.c_str());
    header += cell;
  }
  std::snprintf(line, sizeof line, "%s %9s %9s %9s\n", header.c_str(), "mean F1", "mean IoU", "OA");
  out << line;
  for (const auto& r : rows) {
    std::string s = r.name;
    s.resize(13, ' ');
    for (const auto& m : r.report.per_class) {
      char cell[16];
      std::snprintf(cell, sizeof cell, " %10.4f", m.iou);
      s += cell;
    }
    std::snprintf(line, sizeof line, "%s %9.4f %9.4f %9.4f\n", s.c_str(), r.report.mean_f1, r.report.mean_iou,
                  r.report.overall_accuracy);
    out << line;
  }
  out << "per-class columns are IoU\n";
}

std::vector<AblationRow> cmd_ablate(const CommonOptions& opts, const fs::path& dataset) {
  const RunConfig cfg = resolve_config(opts);
  const DatasetManifest m = load_manifest(dataset);
  RunDir run(opts.out, "ablate", cfg, opts, {{"dataset", fs::absolute(dataset).string()}});
  std::vector<AblationRow> rows;
  nlohmann::json j = nlohmann::json::array();
  const auto ladder = ablation_ladder(cfg.model);
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    const auto& v = ladder[i];
    const fs::path dir = opts.out / "variants" / (std::to_string(i + 1) + "_" + v.name);
    fs::create_directories(dir);
    RunConfig vc = cfg;
    vc.model = v.model;
    RunDir::write_text(dir / "config.json", to_json(vc).dump(2) + "\n");
    run.log("variant " + v.name + ": training");
    ScasNet model = build_model(v.model, cfg.train.seed);
    TrainState st = train_logged(model, vc, m, dir, {}, nullptr);
    SplitResult r = evaluate_split(model, vc, m, "test");
    write_report(dir, r, m.class_names);
    AblationRow row{v.name, r.report, st.history.empty() ? 0 : st.history.back().mean_loss};
    run.log("variant " + v.name + ": final loss " + fmt("%.4f", row.final_loss) + ", test mean IoU " +
            fmt("%.4f", r.report.mean_iou));
    j.push_back({{"variant", v.name},
                 {"final_loss", row.final_loss},
                 {"mean_f1", r.report.mean_f1},
                 {"mean_iou", r.report.mean_iou},
                 {"overall_accuracy", r.report.overall_accuracy}});
    rows.push_back(std::move(row));
  }
  RunDir::write_text(opts.out / "ablation.json", j.dump(2) + "\n");
  std::ostringstream table;
  write_ablation_table(table, rows, m.class_names);
  RunDir::write_text(opts.out / "ablation.txt", table.str());
  run.log(table.str());
  return rows;
}

}  // namespace scasnet
