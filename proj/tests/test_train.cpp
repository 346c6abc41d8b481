#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "scasnet/train.hpp"
#include "test_util.hpp"

using namespace scasnet;
using testing::random_tensor;

namespace {

LabelMap random_labels(std::size_t h, std::size_t w, std::size_t k, std::mt19937_64& rng) {
  LabelMap lm(h, w);
  for (auto& v : lm.labels) v = std::uint8_t(rng() % k);
  return lm;
}

/// Independent loss oracle: direct log-sum-exp per pixel, averaged over counted pixels.
Real reference_loss(const Tensor& logits, const std::vector<LabelMap>& labels, const std::vector<IgnoreMask>& ignore) {
  const auto N = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  Real total = 0;
  std::size_t counted = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        if (!ignore.empty() && ignore[n].at(y, x)) continue;
        Real m = -INFINITY;
        for (std::size_t k = 0; k < K; ++k) m = std::max(m, logits.at(n, k, y, x));
        Real s = 0;
        for (std::size_t k = 0; k < K; ++k) s += std::exp(logits.at(n, k, y, x) - m);
        total += -(logits.at(n, labels[n].at(y, x), y, x) - m - std::log(s));
        ++counted;
      }
  return total / Real(counted);
}

/// Two-class scenes of axis-aligned blocks: class 1 pixels are bright, class 0 dark.
std::vector<Sample> toy_dataset(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < count; ++i) {
    Sample s{Tensor({1, 3, size, size}), LabelMap(size, size)};
    const std::size_t y0 = rng() % (size / 2), x0 = rng() % (size / 2);
    const std::size_t h = size / 4 + rng() % (size / 4), w = size / 4 + rng() % (size / 4);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const bool in = y >= y0 && y < y0 + h && x >= x0 && x < x0 + w;
        s.labels.labels[y * size + x] = in ? 1 : 0;
        for (std::size_t c = 0; c < 3; ++c) s.image.at(0, c, y, x) = (in ? 0.6 : -0.6) + 0.1 * Real(c);
      }
    out.push_back(std::move(s));
  }
  return out;
}

/// Four classes of overlapping blocks; classes 1 and 2 share a mean colour and differ in
/// texture, and every pixel carries Gaussian noise.
std::vector<Sample> textured_dataset(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<Real> noise(0, 0.25);
  const Real colour[4][3] = {{-0.5, -0.5, -0.5}, {0.4, 0.1, -0.2}, {0.4, 0.1, -0.2}, {-0.2, 0.5, 0.3}};
  std::vector<Sample> out;
  for (std::size_t i = 0; i < count; ++i) {
    Sample s{Tensor({1, 3, size, size}), LabelMap(size, size)};
    for (int b = 0; b < 5; ++b) {
      const std::uint8_t k = std::uint8_t(1 + rng() % 3);
      const std::size_t y0 = rng() % size, x0 = rng() % size;
      const std::size_t h = 3 + rng() % (size / 3), w = 3 + rng() % (size / 3);
      for (std::size_t y = y0; y < std::min(size, y0 + h); ++y)
        for (std::size_t x = x0; x < std::min(size, x0 + w); ++x) s.labels.at(y, x) = k;
    }
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const auto k = s.labels.at(y, x);
        const Real stripe = k == 2 ? ((x + y) % 4 < 2 ? 0.3 : -0.3) : 0;
        for (std::size_t c = 0; c < 3; ++c) s.image.at(0, c, y, x) = colour[k][c] + stripe + noise(rng);
      }
    out.push_back(std::move(s));
  }
  return out;
}

ModelConfig small_model() {
  ModelConfig c;
  c.stages = {{1, 4, true}, {1, 8, false}};
  c.dilation_rates = {2, 1};
  c.context_width = 8;
  c.refinement_taps = {1};
  c.refinement_width = 4;
  c.classes = 2;
  c.dropout = 0.5;
  return c;
}

}  // namespace

TEST_CASE("uniform logits give ln K") {
  for (std::size_t K : {2u, 4u, 6u}) {
    Tensor logits = tensor_new({2, K, 3, 3}, 0.7);
    std::mt19937_64 rng(K);
    std::vector<LabelMap> labels{random_labels(3, 3, K, rng), random_labels(3, 3, K, rng)};
    auto out = cross_entropy_loss(logits, labels);
    CHECK(out.loss == doctest::Approx(std::log(Real(K))).epsilon(1e-14));
    CHECK(out.counted == 18);
  }
  CHECK(std::log(6.0) == doctest::Approx(1.7918).epsilon(1e-4));
}

TEST_CASE("confident correct prediction drives loss to zero") {
  Tensor logits({1, 3, 1, 2}, {40, -40, -40, 40, -40, -40});
  LabelMap lm(1, 2);
  lm.labels = {0, 1};
  auto out = cross_entropy_loss(logits, std::span<const LabelMap>(&lm, 1));
  CHECK(out.loss >= 0);
  CHECK(out.loss < 1e-15);
}

TEST_CASE("loss against log-sum-exp oracle, gradient rows sum to zero, ignore mask") {
  std::mt19937_64 rng(1);
  Tensor logits = random_tensor({2, 5, 4, 3}, rng, -4, 4);
  std::vector<LabelMap> labels{random_labels(4, 3, 5, rng), random_labels(4, 3, 5, rng)};
  std::vector<IgnoreMask> ignore(2, IgnoreMask(4, 3));
  ignore[0].ignored[0] = ignore[0].ignored[5] = ignore[1].ignored[11] = 1;

  auto out = cross_entropy_loss(logits, labels, ignore);
  CHECK(out.counted == 21);
  CHECK(out.loss == doctest::Approx(reference_loss(logits, labels, ignore)).epsilon(1e-13));

  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 3; ++x) {
        Real s = 0;
        for (std::size_t k = 0; k < 5; ++k) s += out.grad.at(n, k, y, x);
        CHECK(std::abs(s) <= 1e-15);
        if (ignore[n].at(y, x))
          for (std::size_t k = 0; k < 5; ++k) CHECK(out.grad.at(n, k, y, x) == 0);
      }

  auto f = [&] { return reference_loss(logits, labels, ignore); };
  CHECK(testing::max_rel_err(out.grad, testing::numeric_grad(f, logits)) <= 1e-6);

  labels[1].labels[3] = 5;
  CHECK_THROWS_AS(cross_entropy_loss(logits, labels), ShapeError);
}

TEST_CASE("loss is permutation-equivariant in classes") {
  std::mt19937_64 rng(2);
  Tensor logits = random_tensor({1, 4, 3, 3}, rng, -3, 3);
  LabelMap lm = random_labels(3, 3, 4, rng);
  const std::size_t perm[] = {2, 0, 3, 1};
  Tensor pl(logits.shape());
  LabelMap pm = lm;
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < 9; ++i) pl.at(0, perm[k], i / 3, i % 3) = logits.at(0, k, i / 3, i % 3);
  for (auto& v : pm.labels) v = std::uint8_t(perm[v]);
  const Real a = cross_entropy_loss(logits, std::span<const LabelMap>(&lm, 1)).loss;
  const Real b = cross_entropy_loss(pl, std::span<const LabelMap>(&pm, 1)).loss;
  CHECK(a == doctest::Approx(b).epsilon(1e-14));
}

TEST_CASE("sgd: plain step, schedule, momentum recursion, decay exemptions") {
  TrainConfig cfg;
  cfg.lr0 = 0.1;
  cfg.momentum = 0;
  cfg.weight_decay = 0;
  Param p("w", Tensor({1}, {0}), true);
  p.grad = Tensor({1}, {1});
  Param* ps[] = {&p};
  SgdState st;
  sgd_step(ps, st, cfg, 0);
  CHECK(p.value[0] == doctest::Approx(-0.1).epsilon(1e-15));

  TrainConfig sched;
  CHECK(learning_rate(sched, 0) == doctest::Approx(0.01));
  CHECK(learning_rate(sched, 19) == doctest::Approx(0.01));
  CHECK(learning_rate(sched, 20) == doctest::Approx(0.001));
  CHECK(learning_rate(sched, 40) == doctest::Approx(1e-4));

  TrainConfig mom;
  mom.lr0 = 0.05;
  mom.momentum = 0.9;
  mom.weight_decay = 0;
  Param q("w", Tensor({2}, {1, -2}), true);
  Param* qs[] = {&q};
  SgdState sq;
  const Tensor start = q.value;
  // v1 = g, v2 = 0.9 g + g: the second step moves 1.9 lr g, 2.9 lr g in total.
  Tensor after_one;
  for (int i = 0; i < 2; ++i) {
    if (i == 1) after_one = q.value;
    q.grad = Tensor({2}, {0.3, -1.1});
    sgd_step(qs, sq, mom, 0);
  }
  CHECK(q.value[0] - after_one[0] == doctest::Approx(-1.9 * 0.05 * 0.3).epsilon(1e-13));
  CHECK(q.value[1] - after_one[1] == doctest::Approx(-1.9 * 0.05 * -1.1).epsilon(1e-13));
  CHECK(q.value[0] - start[0] == doctest::Approx(-2.9 * 0.05 * 0.3).epsilon(1e-13));

  TrainConfig wd;
  wd.lr0 = 0.1;
  wd.momentum = 0;
  wd.weight_decay = 0.5;
  Param w("w", Tensor({1}, {2}), true), b("b", Tensor({1}, {2}), false);
  w.grad = Tensor({1}, {0});
  b.grad = Tensor({1}, {0});
  Param* wb[] = {&w, &b};
  SgdState swb;
  sgd_step(wb, swb, wd, 0);
  CHECK(w.value[0] == doctest::Approx(2 - 0.1 * 0.5 * 2));
  CHECK(b.value[0] == 2);

  Param frozen("rm", Tensor({1}, {3}), false, false);
  frozen.grad = Tensor({1}, {100});
  Param* fs[] = {&frozen};
  sgd_step(fs, swb, wd, 0);
  CHECK(frozen.value[0] == 3);
}

TEST_CASE("train config validation and json") {
  TrainConfig c;
  CHECK_NOTHROW(validate(c));
  auto bad = c;
  bad.lr0 = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.lr_drop_factor = 1.5;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  c.epochs = 7;
  c.seed = 123;
  CHECK(train_config_from_json(to_json(c), TrainConfig{}) == c);
  CHECK_THROWS_AS(train_config_from_json({{"lr", 0.1}}, c), ConfigError);
}

TEST_CASE("loss csv format") {
  std::ostringstream os;
  write_loss_csv(os, {{0, 0.5, 0.01}, {1, 0.25, 0.01}});
  const std::string s = os.str();
  CHECK(s.rfind("epoch,mean_loss,lr\n", 0) == 0);
  CHECK(s.find("\n1,0.25,0.01") != std::string::npos);
  auto h = history_from_json(history_to_json({{3, 0.125, 0.001}}));
  REQUIRE(h.size() == 1);
  CHECK(h[0].epoch == 3);
  CHECK(h[0].mean_loss == 0.125);
}

TEST_CASE("zero epochs leave parameters unchanged; empty set errors") {
  ScasNet m = build_model(small_model(), 1);
  std::vector<Tensor> before;
  for (auto* p : m.params()) before.push_back(p->value);
  auto data = toy_dataset(4, 16, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  auto st = train_loop(m, data, cfg);
  CHECK(st.history.empty());
  auto ps = m.params();
  for (std::size_t i = 0; i < ps.size(); ++i) CHECK(ps[i]->value == before[i]);
  CHECK_THROWS_AS(train_loop(m, std::span<const Sample>{}, cfg), DataError);
}

TEST_CASE("training is deterministic and resumable") {
  auto data = toy_dataset(6, 16, 2);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 4;
  cfg.seed = 9;
  ScasNet a = build_model(small_model(), 3), b = build_model(small_model(), 3);
  auto sa = train_loop(a, data, cfg);
  auto sb = train_loop(b, data, cfg);
  REQUIRE(sa.history.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(sa.history[i].mean_loss == sb.history[i].mean_loss);
  auto pa = a.params(), pb = b.params();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    INFO(pa[i]->name);
    CHECK(pa[i]->value == pb[i]->value);
  }

  // Two epochs, checkpoint, reload, two more: identical to the uninterrupted run.
  auto dir = std::filesystem::temp_directory_path() / "scasnet_test_resume";
  std::filesystem::remove_all(dir);
  ScasNet c = build_model(small_model(), 3);
  auto half = cfg;
  half.epochs = 2;
  auto sc = train_loop(c, data, half);
  save_training_checkpoint(dir, c, sc, cfg);
  auto resumed = load_training_checkpoint(dir);
  CHECK(resumed.state.next_epoch == 2);
  auto sr = train_loop(resumed.model, data, cfg, resumed.state);
  REQUIRE(sr.history.size() == 4);
  CHECK(sr.history[3].mean_loss == sa.history[3].mean_loss);
  auto pr = resumed.model.params();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pr[i]->value == pa[i]->value);
  std::filesystem::remove_all(dir);
}

TEST_CASE("sharded batches match the single-thread gradient") {
  auto data = toy_dataset(5, 16, 4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 5;
  cfg.seed = 1;
  auto mc = small_model();
  mc.dropout = 0;
  ScasNet a = build_model(mc, 5), b = build_model(mc, 5);
  auto sa = train_loop(a, data, cfg);
  cfg.threads = 3;
  auto sb = train_loop(b, data, cfg);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(sa.history[i].mean_loss == doctest::Approx(sb.history[i].mean_loss).epsilon(1e-12));
  auto pa = a.params(), pb = b.params();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(max_abs_diff(pa[i]->value, pb[i]->value) <= 1e-12);
}

TEST_CASE("divergence aborts with a diagnostic") {
  auto data = toy_dataset(2, 16, 5);
  ScasNet m = build_model(small_model(), 1);
  m.find_param("cls.w")->value.fill(std::numeric_limits<Real>::quiet_NaN());
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train_loop(m, data, cfg), DivergenceError);
}

TEST_CASE("every layer type passes the gradient check; a sign flip is caught") {
  GradcheckOptions opts;
  opts.seed = 3;
  auto reports = gradcheck_layers(opts);
  CHECK(reports.size() >= 14);
  for (const auto& r : reports) {
    INFO(r.label << " max " << r.max_rel_error << " at " << r.worst);
    CHECK(r.checked > 0);
    CHECK(r.passed);
    CHECK(r.max_rel_error <= 1e-4);
  }
  opts.flip_sign = true;
  for (const auto& r : gradcheck_layers(opts)) {
    INFO(r.label);
    CHECK_FALSE(r.passed);
  }
}

TEST_CASE("overfit run on eight samples") {
  auto data = textured_dataset(8, 32, 6);
  ModelConfig mc = desk_model_config();
  mc.classes = 4;
  mc.dropout = 0;
  ScasNet m = build_model(mc, 1);
  TrainConfig cfg;
  cfg.lr_drop_every = 1000;
  cfg.seed = 1;
  // One epoch at a time until the target is met; resuming from the returned state is
  // identical to a single longer call.
  TrainState st;
  for (cfg.epochs = 1; cfg.epochs <= 300; ++cfg.epochs) {
    st = train_loop(m, data, cfg, std::move(st));
    if (st.history.back().mean_loss < 0.05) break;
  }
  INFO("epochs " << st.history.size() << ", final loss " << st.history.back().mean_loss);
  CHECK(st.history.back().mean_loss < 0.05);
  std::vector<Real> avg;
  for (std::size_t i = 10; i <= st.history.size(); ++i) {
    Real s = 0;
    for (std::size_t j = i - 10; j < i; ++j) s += st.history[j].mean_loss;
    avg.push_back(s / 10);
  }
  for (std::size_t i = 1; i < avg.size(); ++i) {
    INFO("window ending at epoch " << i + 10);
    CHECK(avg[i] <= avg[i - 1]);
  }
}
