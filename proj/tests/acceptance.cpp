// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [--only N[,N...]] [--work DIR]

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "scasnet/app.hpp"
#include "test_util.hpp"

using namespace scasnet;
using namespace scasnet::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

fs::path g_work = fs::temp_directory_path() / "scasnet_acceptance";

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// 1. Finite-difference checks of every layer, then the desk model.
void gradient_fidelity(Outcome& o) {
  const auto t0 = Clock::now();
  GradcheckOptions opts;
  opts.seed = 11;
  Real worst_layer = 0;
  for (const auto& r : gradcheck_layers(opts)) {
    worst_layer = std::max(worst_layer, r.max_rel_error);
    o.expect(r.passed && r.max_rel_error <= 1e-4 && r.checked > 0, r.label);
  }
  ScasNet model = build_model(desk_model_config(), 11);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<Real> small(-0.2, 0.2);
  // Away from ReLU kinks: live correction outputs and non-zero biases.
  for (auto* rc : model.corrections())
    for (auto& v : rc->conv_c().weight().value.values()) v = small(rng);
  for (auto* p : model.params())
    if (p->name.ends_with(".b"))
      for (auto& v : p->value.values()) v = small(rng);
  Tensor input = random_tensor({1, 3, 2 * model.stride(), 2 * model.stride()}, rng);
  opts.samples = 200;
  opts.tolerance = 1e-3;
  auto rep = gradcheck_model(model, input, opts);
  const double secs = seconds_since(t0);
  o.expect(rep.passed && rep.checked >= 200 && rep.max_rel_error <= 1e-3, "desk model");
  o.expect(secs < 120, "runtime");
  o.detail << "layers max rel " << worst_layer << ", desk model max rel " << rep.max_rel_error << " over "
           << rep.checked << " coords, " << secs << " s";
}

// 2. conv2d against direct tap enumeration.
void dilated_conv_oracle(Outcome& o) {
  std::mt19937_64 rng(2);
  Real worst = 0;
  for (std::size_t d : {1u, 2u, 3u})
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t k = 1 + 2 * (rng() % 2);
      const std::size_t reach = (k - 1) * d + 1;
      const std::size_t h = std::max<std::size_t>(reach, 3 + rng() % 7), w = std::max<std::size_t>(reach, 3 + rng() % 7);
      const std::size_t pad = rng() % (d + 1);
      const std::size_t c = 1 + rng() % 3, out = 1 + rng() % 3;
      Tensor x = random_tensor({2, c, std::min<std::size_t>(h, 9), std::min<std::size_t>(w, 9)}, rng);
      Tensor wt = random_tensor({out, c, k, k}, rng), b = random_tensor({out}, rng);
      const ConvGeometry g{1, d, pad};
      worst = std::max(worst, max_abs_diff(conv2d(x, wt, b, g), naive_conv(x, wt, b, 1, d, pad)));
    }
  // 9x9 map, 3x3 kernel, dilation and padding 3, zero padding value.
  Tensor x = random_tensor({1, 2, 9, 9}, rng), wt = random_tensor({4, 2, 3, 3}, rng), b = random_tensor({4}, rng);
  const Tensor y = conv2d(x, wt, b, {1, 3, 3});
  o.expect(y.shape() == Shape{1, 4, 9, 9}, "9x9 d=3 shape");
  worst = std::max(worst, max_abs_diff(y, naive_conv(x, wt, b, 1, 3, 3)));
  o.expect(worst <= 1e-12, "max abs diff");
  o.detail << "max abs diff " << worst << " over 61 cases";
}

// 3. Uniform logits give ln K; gradient rows sum to zero.
void loss_anchors(Outcome& o) {
  std::mt19937_64 rng(3);
  Real loss_err = 0, row_err = 0;
  for (std::size_t K : {2u, 5u, 6u}) {
    std::vector<LabelMap> labels;
    for (int n = 0; n < 2; ++n) {
      LabelMap lm(5, 4);
      for (auto& v : lm.labels) v = std::uint8_t(rng() % K);
      labels.push_back(lm);
    }
    auto uniform = cross_entropy_loss(tensor_new({2, K, 5, 4}, -1.3), labels);
    loss_err = std::max(loss_err, std::abs(uniform.loss - std::log(Real(K))));
    auto random = cross_entropy_loss(random_tensor({2, K, 5, 4}, rng, -6, 6), labels);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t y = 0; y < 5; ++y)
        for (std::size_t x = 0; x < 4; ++x) {
          Real s = 0;
          for (std::size_t k = 0; k < K; ++k) s += random.grad.at(n, k, y, x);
          row_err = std::max(row_err, std::abs(s));
        }
  }
  o.expect(loss_err <= 1e-9, "ln K");
  o.expect(row_err <= 1e-12, "row sums");
  o.detail << "|loss - ln K| " << loss_err << ", max |row sum| " << row_err;
}

// 4. A fresh correction block is the identity, alone and inside the model.
void correction_identity(Outcome& o) {
  std::mt19937_64 rng(4);
  ResidualCorrection rc("acc.rc", 6);
  Tensor f = random_tensor({2, 6, 7, 5}, rng, -3, 3);
  o.expect(residual_correct(f, rc) == f, "block");
  ModelConfig full = desk_model_config(), bare = full;
  bare.context_correction = false;
  bare.refinement_correction = false;
  ScasNet a = build_model(full, 4), b = build_model(bare, 4);
  Tensor x = random_tensor({2, 3, 32, 40}, rng);
  o.expect(a.forward(x, Mode::Eval) == b.forward(x, Mode::Eval), "model forward");
  o.detail << a.corrections().size() << " blocks inserted, outputs bit-identical";
}

Real pixel_accuracy(ScasNet& m, const std::vector<Sample>& data) {
  std::size_t hit = 0, total = 0;
  for (const auto& s : data) {
    const LabelMap p = predict(m, s.image);
    for (std::size_t i = 0; i < p.labels.size(); ++i) hit += p.labels[i] == s.labels.labels[i];
    total += p.labels.size();
  }
  return Real(hit) / Real(total);
}

// 5. Desk model memorizes eight desk-scale patches.
void overfit(Outcome& o) {
  const auto t0 = Clock::now();
  DataConfig dc = profile_config("desk").data;
  std::vector<Sample> data;
  for (std::size_t i = 0; i < 8; ++i) {
    Scene s = generate_scene(scene_spec(dc, 0, i));
    Patch p = crop_patches(s.image, s.labels, dc.patch, dc.overlap, "s").front();
    data.push_back({to_network_input(p.image), p.labels});
  }
  ModelConfig mc = desk_model_config();
  mc.dropout = 0;  // memorization capacity, not regularized training
  ScasNet m = build_model(mc, 5);
  TrainConfig cfg = profile_config("desk").train;
  cfg.samples_per_epoch = 0;
  cfg.lr_drop_every = 1000;  // constant rate: memorization, not generalization
  cfg.seed = 5;
  TrainState st;
  Real acc = 0;
  for (cfg.epochs = 10; cfg.epochs <= 300; cfg.epochs += 10) {
    st = train_loop(m, data, cfg, std::move(st));
    acc = pixel_accuracy(m, data);
    if (acc >= 0.99) break;
  }
  const double secs = seconds_since(t0);
  o.expect(acc >= 0.99, "accuracy");
  o.expect(secs <= 600, "runtime");
  o.detail << "train pixel accuracy " << acc << " after " << st.history.size() << " epochs, " << secs << " s";
}

// 6. Desk dataset, full ladder.
void ablation(Outcome& o) {
  const auto t0 = Clock::now();
  CommonOptions opts;
  opts.out = g_work / "c6_data";
  fs::remove_all(opts.out);
  cmd_gen_data(opts);
  const fs::path data = opts.out;
  opts.out = g_work / "c6_ablate";
  fs::remove_all(opts.out);
  auto rows = cmd_ablate(opts, data);
  const double secs = seconds_since(t0);
  o.expect(rows.size() == 6, "six rows");
  if (rows.size() != 6) return;
  const Real base = rows.front().report.mean_iou, full = rows.back().report.mean_iou;
  o.expect(full >= 0.70, "full mean IoU >= 0.70");
  o.expect(full >= base + 0.02, "full >= baseline + 0.02");
  o.expect(secs <= 1800, "runtime");
  o.detail << "mean IoU";
  for (const auto& r : rows) o.detail << " " << r.name << "=" << r.report.mean_iou;
  o.detail << ", " << secs << " s";
}

// 7. Multi-scale inference properties.
void inference(Outcome& o) {
  ModelConfig mc = desk_model_config();
  ScasNet m = build_model(mc, 7);
  std::mt19937_64 rng(7);
  Tensor img = random_tensor({1, 3, 40, 56}, rng);
  auto res = infer_image(m, img, {.scales = {1}, .patch = 64});
  o.expect(res.probs.probs == softmax_channels(m.forward(img, Mode::Eval)), "probabilities");
  o.expect(res.labels == predict(m, img), "labels");

  std::size_t plans = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t h = 1 + rng() % 70, w = 1 + rng() % 70, th = 1 + rng() % 20, tw = 1 + rng() % 20;
    std::vector<PlacedTile> tiles;
    for (const auto& r : plan_tiles(h, w, th, tw)) tiles.push_back({ProbMap{Tensor({1, 2, r.h, r.w})}, r.y, r.x});
    std::vector<std::uint32_t> count;
    stitch(tiles, h, w, &count);
    bool once = count.size() == h * w;
    for (auto c : count) once = once && c == 1;
    o.expect(once, "write count");
    plans += once;
  }

  Real drift = 0;
  Tensor big = random_tensor({1, 3, 45, 70}, rng);
  auto ms = infer_image(m, big, {.scales = {0.5, 1, 1.5}, .patch = 32});
  for (std::size_t y = 0; y < 45; ++y)
    for (std::size_t x = 0; x < 70; ++x) {
      Real s = 0;
      for (std::size_t k = 0; k < mc.classes; ++k) {
        const Real p = ms.probs.at(k, y, x);
        o.expect(p >= 0, "non-negative");
        s += p;
      }
      drift = std::max(drift, std::abs(s - 1));
    }
  o.expect(drift <= 1e-6, "simplex");
  o.detail << "scale 1 equals predict, " << plans << "/50 plans write each pixel once, max |sum - 1| " << drift;
}

// 8. Metric oracles.
void metrics(Outcome& o) {
  LabelMap gt(1, 140), pred(1, 140);
  for (std::size_t i = 0; i < 50; ++i) gt.labels[i] = pred.labels[i] = 1;
  for (std::size_t i = 50; i < 75; ++i) pred.labels[i] = 1;
  for (std::size_t i = 75; i < 100; ++i) gt.labels[i] = 1;
  const auto c1 = score(pred, gt, {}, 2).per_class[1];
  o.expect(c1.tp == 50 && c1.fp == 25 && c1.fn == 25, "counts");
  o.expect(std::abs(c1.f1 - 2.0 / 3) <= 1e-15 && c1.iou == 0.5, "50/25/25");

  std::mt19937_64 rng(8);
  Real identity = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t K = 2 + rng() % 5;
    LabelMap a(31, 29), b(31, 29);
    for (auto& v : a.labels) v = std::uint8_t(rng() % K);
    for (auto& v : b.labels) v = std::uint8_t(rng() % K);
    for (const auto& c : score(a, b, {}, K).per_class)
      if (c.present) identity = std::max(identity, std::abs(c.f1 - 2 * c.iou / (1 + c.iou)));
  }
  o.expect(identity <= 1e-14, "F1/IoU identity");

  // Distance-transform oracle: a pixel is ignored iff some boundary pixel lies within the radius.
  std::size_t agree = 0;
  for (int t = 0; t < 10; ++t) {
    const long H = 20 + long(rng() % 15), W = 20 + long(rng() % 15);
    LabelMap gt(H, W);
    // Blocky maps so that interiors survive the erosion.
    const std::size_t K = 2 + rng() % 4;
    for (int r = 0; r < 6; ++r) {
      const long y0 = long(rng() % H), x0 = long(rng() % W), h = 3 + long(rng() % 12), w = 3 + long(rng() % 12);
      const auto k = std::uint8_t(rng() % K);
      for (long y = y0; y < std::min(H, y0 + h); ++y)
        for (long x = x0; x < std::min(W, x0 + w); ++x) gt.at(y, x) = k;
    }
    std::vector<std::pair<long, long>> boundary;
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        bool edge = false;
        if (y > 0) edge |= gt.at(y - 1, x) != gt.at(y, x);
        if (y + 1 < H) edge |= gt.at(y + 1, x) != gt.at(y, x);
        if (x > 0) edge |= gt.at(y, x - 1) != gt.at(y, x);
        if (x + 1 < W) edge |= gt.at(y, x + 1) != gt.at(y, x);
        if (edge) boundary.emplace_back(y, x);
      }
    const IgnoreMask got = erode_boundaries(gt, 3);
    bool same = true;
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        bool near = false;
        for (auto [by, bx] : boundary) near |= (by - y) * (by - y) + (bx - x) * (bx - x) <= 9;
        same = same && got.at(y, x) == near;
      }
    agree += same;
  }
  o.expect(agree == 10, "erosion oracle");
  o.detail << "F1 " << c1.f1 << ", IoU " << c1.iou << ", identity err " << identity << ", erosion " << agree << "/10";
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "log.txt")
      out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

// 9. Every command, run twice through the binary, writes byte-identical files.
void determinism(Outcome& o) {
  const fs::path root = g_work / "c9";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path cfg = root / "small.json";
  std::ofstream(cfg) << R"({
 "model": {"stages": [{"convs": 1, "width": 4, "pool": true}, {"convs": 1, "width": 8, "pool": false}],
           "dilation_rates": [2, 1], "context_width": 8, "refinement_taps": [1], "refinement_width": 4},
 "train": {"epochs": 2, "samples_per_epoch": 4, "batch_size": 2, "save_every": 1},
 "infer": {"scales": [0.5, 1], "patch": 32},
 "data": {"scene_height": 48, "scene_width": 48, "patch": 32, "overlap": 8,
          "train_scenes": 2, "val_scenes": 1, "test_scenes": 2},
 "eval": {"pr_thresholds": 11}
})";
  const std::string common = " --config " + cfg.string() + " --threads 1 --seed 9";
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"gen-data", "gen-data" + common},
      {"desk-data", "gen-data --threads 1"},
      {"train", "train --dataset {gen-data}" + common},
      {"infer", "infer --checkpoint {train}/checkpoint --dataset {gen-data}" + common},
      {"eval", "eval --dataset {gen-data} --pred {infer}" + common},
      {"gradcheck", "gradcheck" + common},
      {"ablate", "ablate --dataset {gen-data}" + common},
  };
  std::size_t same = 0;
  for (const auto& [name, args] : steps) {
    bool equal = true;
    for (const char* run : {"a", "b"}) {
      std::string line = args;
      for (const auto& [prev, _] : steps) {
        const std::string key = "{" + prev + "}";
        for (auto pos = line.find(key); pos != std::string::npos; pos = line.find(key))
          line.replace(pos, key.size(), (root / (prev + "_a")).string());
      }
      const fs::path out = root / (name + "_" + run);
      const std::string cmd = std::string(SCASNET_CLI) + " " + line + " --out " + out.string() + " > /dev/null 2>&1";
      const int status = std::system(cmd.c_str());
      equal = equal && WIFEXITED(status) && WEXITSTATUS(status) == 0;
    }
    equal = equal && tree(root / (name + "_a")) == tree(root / (name + "_b"));
    o.expect(equal, name);
    same += equal;
  }
  o.detail << same << "/" << steps.size() << " commands byte-identical on rerun";
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--only") {
      std::stringstream ss(argv[i + 1]);
      for (std::string n; std::getline(ss, n, ',');) only.insert(std::stoi(n));
    } else if (flag == "--work") {
      g_work = argv[i + 1];
    }
  }
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"dilated convolution oracle", dilated_conv_oracle},
      {"loss anchors", loss_anchors},
      {"residual correction identity", correction_identity},
      {"overfit eight desk patches", overfit},
      {"desk generalization and ablation direction", ablation},
      {"inference equivalence", inference},
      {"metric oracles", metrics},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = int(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << n << ". " << criteria[i].first << ": " << o.detail.str()
              << std::endl;
  }
  return failed ? 1 : 0;
}
