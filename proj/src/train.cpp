#include "scasnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include "scasnet/json_util.hpp"

namespace scasnet {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, Real lo = -1, Real hi = 1) {
  Tensor t(shape);
  for (auto& v : t.values()) v = lo + (hi - lo) * static_cast<Real>(rng() >> 11) * 0x1.0p-53;
  return t;
}

Real dot(const Tensor& a, const Tensor& b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr0 > 0)) throw ConfigError("train.lr0 must be positive");
  if (!(cfg.lr_drop_factor > 0 && cfg.lr_drop_factor <= 1)) throw ConfigError("train.lr_drop_factor must lie in (0, 1]");
  if (cfg.lr_drop_every == 0) throw ConfigError("train.lr_drop_every must be positive");
  if (!(cfg.momentum >= 0 && cfg.momentum < 1)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(cfg.weight_decay >= 0)) throw ConfigError("train.weight_decay must be non-negative");
  if (cfg.batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
  if (cfg.threads == 0) throw ConfigError("train.threads must be at least 1");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"lr0", cfg.lr0},           {"lr_drop_factor", cfg.lr_drop_factor}, {"lr_drop_every", cfg.lr_drop_every},
          {"momentum", cfg.momentum}, {"weight_decay", cfg.weight_decay},     {"batch_size", cfg.batch_size},
          {"epochs", cfg.epochs},     {"seed", cfg.seed},                     {"threads", cfg.threads},
          {"save_every", cfg.save_every}, {"samples_per_epoch", cfg.samples_per_epoch}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base) {
  const std::string sec = "train";
  reject_unknown_keys(j,
                      {"lr0", "lr_drop_factor", "lr_drop_every", "momentum", "weight_decay", "batch_size", "epochs",
                       "seed", "threads", "save_every", "samples_per_epoch"},
                      sec);
  TrainConfig c = base;
  read_opt(j, "lr0", c.lr0, sec);
  read_opt(j, "lr_drop_factor", c.lr_drop_factor, sec);
  read_opt(j, "lr_drop_every", c.lr_drop_every, sec);
  read_opt(j, "momentum", c.momentum, sec);
  read_opt(j, "weight_decay", c.weight_decay, sec);
  read_opt(j, "batch_size", c.batch_size, sec);
  read_opt(j, "epochs", c.epochs, sec);
  read_opt(j, "seed", c.seed, sec);
  read_opt(j, "threads", c.threads, sec);
  read_opt(j, "save_every", c.save_every, sec);
  read_opt(j, "samples_per_epoch", c.samples_per_epoch, sec);
  return c;
}

Real learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr0 * std::pow(cfg.lr_drop_factor, static_cast<Real>(epoch / cfg.lr_drop_every));
}

LossOutput cross_entropy_loss(const Tensor& logits, std::span<const LabelMap> labels,
                              std::span<const IgnoreMask> ignore) {
  if (logits.rank() != 4) throw ShapeError("cross_entropy_loss: logits must be NCHW");
  const std::size_t N = logits.n(), K = logits.c(), H = logits.h(), W = logits.w(), P = H * W;
  if (labels.size() != N) throw ShapeError("cross_entropy_loss: label count does not match batch");
  if (!ignore.empty() && ignore.size() != N) throw ShapeError("cross_entropy_loss: mask count does not match batch");
  for (std::size_t n = 0; n < N; ++n) {
    if (labels[n].height != H || labels[n].width != W) throw ShapeError("cross_entropy_loss: label size mismatch");
    if (!ignore.empty() && (ignore[n].height != H || ignore[n].width != W)) {
      throw ShapeError("cross_entropy_loss: mask size mismatch");
    }
    for (auto y : labels[n].labels) {
      if (y >= K) throw ShapeError("cross_entropy_loss: label " + std::to_string(y) + " out of range for K=" + std::to_string(K));
    }
  }
  LossOutput out{0, softmax_channels(logits), 0};
  Tensor& g = out.grad;
  Real total = 0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t j = 0; j < P; ++j) {
      if (!ignore.empty() && ignore[n].ignored[j]) {
        for (std::size_t k = 0; k < K; ++k) g[(n * K + k) * P + j] = 0;
        continue;
      }
      const std::size_t y = labels[n].labels[j];
      // log p_y computed from logits directly to stay finite when p_y underflows.
      const Real* f = logits.data() + n * K * P + j;
      Real m = f[0];
      for (std::size_t k = 1; k < K; ++k) m = std::max(m, f[k * P]);
      Real z = 0;
      for (std::size_t k = 0; k < K; ++k) z += std::exp(f[k * P] - m);
      total += std::log(z) - (f[y * P] - m);
      g[(n * K + y) * P + j] -= 1;
      ++out.counted;
    }
  }
  if (out.counted == 0) {
    g.fill(0);
    return out;
  }
  const Real inv = Real{1} / static_cast<Real>(out.counted);
  out.loss = total * inv;
  g *= inv;
  return out;
}

void sgd_step(std::span<Param* const> params, SgdState& state, const TrainConfig& cfg, std::size_t epoch) {
  const Real lr = learning_rate(cfg, epoch);
  for (Param* p : params) {
    if (!p->trainable) continue;
    require_same_shape(p->value, p->grad, p->name.c_str());
    auto [it, inserted] = state.velocity.try_emplace(p->name, p->value.shape());
    Tensor& v = it->second;
    require_same_shape(v, p->value, p->name.c_str());
    const Real decay = p->decay ? cfg.weight_decay : Real{0};
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = cfg.momentum * v[i] + p->grad[i] + decay * p->value[i];
      p->value[i] -= lr * v[i];
    }
  }
}

nlohmann::json history_to_json(const std::vector<EpochRecord>& history) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : history) j.push_back({{"epoch", r.epoch}, {"mean_loss", r.mean_loss}, {"lr", r.lr}});
  return j;
}

std::vector<EpochRecord> history_from_json(const nlohmann::json& j) {
  std::vector<EpochRecord> h;
  for (const auto& r : j) h.push_back({r.at("epoch").get<std::size_t>(), r.at("mean_loss").get<Real>(), r.at("lr").get<Real>()});
  return h;
}

void write_loss_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,mean_loss,lr\n";
  out << std::setprecision(17);
  for (const auto& r : history) out << r.epoch << ',' << r.mean_loss << ',' << r.lr << '\n';
}

TrainState train_loop(ScasNet& model, std::span<const Sample> dataset, const TrainConfig& cfg, TrainState state,
                      const EpochCallback& on_epoch) {
  validate(cfg);
  if (dataset.empty()) throw DataError("training set is empty");
  // Batch-norm statistics are per batch, so sharding a batch would change the math.
  const std::size_t threads = model.config().use_batchnorm ? 1 : std::min(cfg.threads, cfg.batch_size);
  std::vector<ScasNet> replicas(threads > 1 ? threads : 0, model);
  auto params = model.params();

  for (std::size_t epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    auto order = seeded_permutation(dataset.size(), mix(cfg.seed, epoch));
    if (cfg.samples_per_epoch > 0 && cfg.samples_per_epoch < order.size()) order.resize(cfg.samples_per_epoch);
    Real loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batches) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      const std::uint64_t step_seed = mix(mix(cfg.seed, epoch), start);
      model.zero_grad();
      Real batch_loss = 0;
      if (threads <= 1) {
        std::vector<Tensor> images;
        std::vector<LabelMap> labels;
        for (std::size_t i = 0; i < count; ++i) {
          images.push_back(dataset[order[start + i]].image);
          labels.push_back(dataset[order[start + i]].labels);
        }
        Tensor logits = model.forward(batch_concat(images), Mode::Train, step_seed);
        LossOutput lo = cross_entropy_loss(logits, labels);
        batch_loss = lo.loss;
        if (!std::isfinite(batch_loss)) {
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batches));
        }
        model.backward(lo.grad);
      } else {
        // Shard the batch over replicas; per-shard gradients are reweighted to the
        // batch-level normalizer and reduced in shard order.
        const std::size_t shards = std::min(threads, count);
        std::vector<LossOutput> outs(shards);
        std::vector<std::thread> pool;
        auto run_shard = [&](std::size_t t) {
          ScasNet& r = replicas[t];
          auto rp = r.params();
          for (std::size_t i = 0; i < rp.size(); ++i) rp[i]->value = params[i]->value;
          r.zero_grad();
          std::vector<Tensor> images;
          std::vector<LabelMap> labels;
          for (std::size_t i = t; i < count; i += shards) {
            images.push_back(dataset[order[start + i]].image);
            labels.push_back(dataset[order[start + i]].labels);
          }
          Tensor logits = r.forward(batch_concat(images), Mode::Train, mix(step_seed, t));
          outs[t] = cross_entropy_loss(logits, labels);
        };
        for (std::size_t t = 0; t < shards; ++t) pool.emplace_back(run_shard, t);
        for (auto& th : pool) th.join();
        pool.clear();
        std::size_t counted = 0;
        for (const auto& o : outs) counted += o.counted;
        for (std::size_t t = 0; t < shards; ++t) {
          batch_loss += outs[t].loss * static_cast<Real>(outs[t].counted) / static_cast<Real>(counted);
        }
        if (!std::isfinite(batch_loss)) {
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batches));
        }
        for (std::size_t t = 0; t < shards; ++t) {
          pool.emplace_back([&, t] {
            outs[t].grad *= static_cast<Real>(outs[t].counted) / static_cast<Real>(counted);
            replicas[t].backward(outs[t].grad);
          });
        }
        for (auto& th : pool) th.join();
        for (std::size_t t = 0; t < shards; ++t) {
          auto rp = replicas[t].params();
          for (std::size_t i = 0; i < rp.size(); ++i) params[i]->grad += rp[i]->grad;
        }
      }
      sgd_step(params, state.sgd, cfg, epoch);
      loss_sum += batch_loss;
    }
    state.history.push_back({epoch, loss_sum / static_cast<Real>(batches), learning_rate(cfg, epoch)});
    state.next_epoch = epoch + 1;
    if (on_epoch) on_epoch(state, model);
  }
  return state;
}

void save_training_checkpoint(const std::filesystem::path& dir, const ScasNet& model, const TrainState& state,
                              const TrainConfig& cfg) {
  CheckpointMeta meta;
  meta.epoch = state.next_epoch;
  meta.seed = cfg.seed;
  meta.history = history_to_json(state.history);
  meta.extra = {{"train", to_json(cfg)}};
  std::vector<std::pair<std::string, const Tensor*>> aux;
  for (const auto& [name, v] : state.sgd.velocity) aux.emplace_back("velocity:" + name, &v);
  save_checkpoint(dir, model, meta, aux);
}

ResumedTraining load_training_checkpoint(const std::filesystem::path& dir) {
  LoadedCheckpoint lc = load_checkpoint(dir);
  ResumedTraining r{std::move(lc.model), {}};
  r.state.next_epoch = lc.meta.epoch;
  r.state.history = history_from_json(lc.meta.history);
  for (auto& [name, t] : lc.aux) {
    const std::string prefix = "velocity:";
    if (name.rfind(prefix, 0) == 0) r.state.sgd.velocity.emplace(name.substr(prefix.size()), std::move(t));
  }
  return r;
}

// ---------------------------------------------------------------------------

GradcheckReport gradcheck(const std::function<Real()>& loss, const std::function<void()>& compute_grads,
                          std::span<const GradProbe> probes, const GradcheckOptions& opts) {
  compute_grads();
  std::vector<Tensor> analytic;
  std::size_t total = 0;
  for (const auto& p : probes) {
    require_same_shape(*p.value, *p.grad, p.name.c_str());
    analytic.push_back(*p.grad);
    if (opts.flip_sign) analytic.back() *= -1;
    total += p.value->size();
  }

  std::vector<std::size_t> coords;
  if (opts.samples >= total) {
    for (std::size_t i = 0; i < total; ++i) coords.push_back(i);
  } else {
    std::mt19937_64 rng(opts.seed);
    std::set<std::size_t> picked;
    while (picked.size() < opts.samples) picked.insert(rng() % total);
    coords.assign(picked.begin(), picked.end());
  }

  GradcheckReport rep;
  Real sum = 0;
  for (std::size_t flat : coords) {
    std::size_t pi = 0;
    while (flat >= probes[pi].value->size()) flat -= probes[pi++].value->size();
    Tensor& v = *probes[pi].value;
    const Real x = v[flat];
    const Real h = opts.step * std::max(Real{1}, std::abs(x));
    v[flat] = x + h;
    const Real up = loss();
    v[flat] = x - h;
    const Real down = loss();
    v[flat] = x;
    const Real numeric = (up - down) / (2 * h);
    const Real a = analytic[pi][flat];
    const Real err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
    sum += err;
    if (err >= rep.max_rel_error) {
      rep.max_rel_error = err;
      rep.worst = probes[pi].name + "[" + std::to_string(flat) + "]";
    }
  }
  rep.checked = coords.size();
  rep.mean_rel_error = coords.empty() ? 0 : sum / static_cast<Real>(coords.size());
  rep.passed = rep.max_rel_error <= opts.tolerance;
  return rep;
}

namespace {

// Scalar objective <r, layer(x)> with a fixed random projection r.
struct ProjectedCheck {
  Tensor projection;
  Real operator()(const Tensor& y) const { return dot(projection, y); }
};

}  // namespace

std::vector<GradcheckReport> gradcheck_layers(const GradcheckOptions& opts) {
  std::vector<GradcheckReport> reports;
  std::mt19937_64 rng(opts.seed ^ 0x5CA5);

  auto run = [&](const std::string& label, auto forward, auto backward, std::vector<GradProbe> probes) {
    const Tensor y0 = forward();
    ProjectedCheck obj{random_tensor(y0.shape(), rng)};
    auto loss = [&] { return obj(forward()); };
    auto grads = [&] {
      forward();
      backward(obj.projection);
    };
    GradcheckReport r = gradcheck(loss, grads, probes, opts);
    r.label = label;
    reports.push_back(r);
  };

  // Dilated convolution, padding == dilation, plus a strided variant.
  for (auto [stride, dil, pad] : {std::tuple{1, 2, 2}, std::tuple{2, 1, 1}, std::tuple{1, 3, 3}}) {
    Conv2d conv("conv", 3, 4, 3, ConvGeometry{std::size_t(stride), std::size_t(dil), std::size_t(pad)});
    conv.weight().value = random_tensor(conv.weight().value.shape(), rng);
    conv.bias().value = random_tensor(conv.bias().value.shape(), rng);
    Tensor x = random_tensor({2, 3, 7, 7}, rng);
    Tensor gx;
    run("conv2d(s=" + std::to_string(stride) + ",d=" + std::to_string(dil) + ")", [&] { return conv.forward(x); },
        [&](const Tensor& g) {
          conv.weight().zero_grad();
          conv.bias().zero_grad();
          gx = conv.backward(g);
        },
        {{"x", &x, &gx}, {"w", &conv.weight().value, &conv.weight().grad}, {"b", &conv.bias().value, &conv.bias().grad}});
  }

  for (Mode mode : {Mode::Train, Mode::Eval}) {
    BatchNorm bn("bn", 3);
    std::vector<Param*> ps;
    bn.collect(ps);
    ps[0]->value = random_tensor({3}, rng, 0.5, 2);
    ps[1]->value = random_tensor({3}, rng);
    ps[2]->value = random_tensor({3}, rng);
    ps[3]->value = random_tensor({3}, rng, 0.5, 2);
    Tensor x = random_tensor({2, 3, 3, 3}, rng);
    Tensor gx;
    run(mode == Mode::Train ? "batchnorm(train)" : "batchnorm(eval)", [&] { return bn.forward(x, mode); },
        [&](const Tensor& g) {
          ps[0]->zero_grad();
          ps[1]->zero_grad();
          gx = bn.backward(g);
        },
        {{"x", &x, &gx}, {"gamma", &ps[0]->value, &ps[0]->grad}, {"beta", &ps[1]->value, &ps[1]->grad}});
  }

  {
    ReLU r;
    Tensor x = random_tensor({1, 2, 4, 4}, rng);
    for (auto& v : x.values()) v = v >= 0 ? v + 0.05 : v - 0.05;  // stay off the kink
    Tensor gx;
    run("relu", [&] { return r.forward(x); }, [&](const Tensor& g) { gx = r.backward(g); }, {{"x", &x, &gx}});
  }

  {
    MaxPool2x2 pool;
    // Distinct values spaced far beyond the finite-difference step keep argmax stable.
    Tensor x({1, 2, 5, 5});
    const auto order = seeded_permutation(x.size(), rng());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<Real>(order[i]) * 0.01 - 0.25;
    Tensor gx;
    run("maxpool2x2(odd)", [&] { return pool.forward(x); }, [&](const Tensor& g) { gx = pool.backward(g); },
        {{"x", &x, &gx}});
  }

  {
    Dropout drop(0.5);
    Tensor x = random_tensor({1, 2, 4, 4}, rng);
    Tensor gx;
    run("dropout(fixed mask)", [&] { return drop.forward(x, Mode::Train, 17); },
        [&](const Tensor& g) { gx = drop.backward(g); }, {{"x", &x, &gx}});
  }

  for (auto [ih, iw, oh, ow] : {std::tuple{3, 4, 7, 5}, std::tuple{8, 8, 3, 5}}) {
    Resize rs;
    Tensor x = random_tensor({1, 2, std::size_t(ih), std::size_t(iw)}, rng);
    Tensor gx;
    run("bilinear(" + std::to_string(ih) + "x" + std::to_string(iw) + "->" + std::to_string(oh) + "x" +
            std::to_string(ow) + ")",
        [&, oh = oh, ow = ow] { return rs.forward(x, std::size_t(oh), std::size_t(ow)); },
        [&](const Tensor& g) { gx = rs.backward(g); }, {{"x", &x, &gx}});
  }

  {
    Sum s;
    Tensor a = random_tensor({1, 2, 3, 3}, rng), b = random_tensor({1, 2, 3, 3}, rng);
    Tensor ga, gb;
    run("elementwise_sum", [&] { return s.forward(a, b); },
        [&](const Tensor& g) { std::tie(ga, gb) = s.backward(g); }, {{"a", &a, &ga}, {"b", &b, &gb}});
  }

  {
    Tensor logits = random_tensor({2, 4, 3, 3}, rng, -3, 3);
    std::vector<LabelMap> labels(2, LabelMap(3, 3));
    std::vector<IgnoreMask> masks(2, IgnoreMask(3, 3));
    for (auto& l : labels) {
      for (auto& v : l.labels) v = static_cast<std::uint8_t>(rng() % 4);
    }
    masks[1].ignored[4] = 1;
    Tensor g;
    auto loss = [&] { return cross_entropy_loss(logits, labels, masks).loss; };
    auto grads = [&] { g = cross_entropy_loss(logits, labels, masks).grad; };
    std::vector<GradProbe> probes{{"logits", &logits, &g}};
    GradcheckReport r = gradcheck(loss, grads, probes, opts);
    r.label = "softmax+cross_entropy";
    reports.push_back(r);
  }

  {
    ResidualCorrection rc("rc", 3);
    std::vector<Param*> ps;
    rc.collect(ps);
    for (Param* p : ps) p->value = random_tensor(p->value.shape(), rng, -0.5, 0.5);
    Tensor x = random_tensor({1, 3, 5, 5}, rng);
    Tensor gx;
    std::vector<GradProbe> probes{{"x", &x, &gx}};
    for (Param* p : ps) probes.push_back({p->name, &p->value, &p->grad});
    run("residual_correction", [&] { return rc.forward(x); },
        [&](const Tensor& g) {
          for (Param* p : ps) p->zero_grad();
          gx = rc.backward(g);
        },
        probes);
  }

  for (AggregationMode mode : {AggregationMode::Cascaded, AggregationMode::ParallelStack}) {
    ContextAggregator agg("ctx", 3, ContextSpec{{3, 2, 1}, 4, mode, true});
    std::vector<Param*> ps;
    agg.collect(ps);
    for (Param* p : ps) p->value = random_tensor(p->value.shape(), rng, -0.5, 0.5);
    Tensor x = random_tensor({1, 3, 6, 6}, rng);
    Tensor gx;
    std::vector<GradProbe> probes{{"x", &x, &gx}};
    for (Param* p : ps) probes.push_back({p->name, &p->value, &p->grad});
    run(mode == AggregationMode::Cascaded ? "context(cascaded)" : "context(parallel)", [&] { return agg.forward(x); },
        [&](const Tensor& g) {
          for (Param* p : ps) p->zero_grad();
          gx = agg.backward(g);
        },
        probes);
  }

  {
    RefinementStep step("ref", RefinementSpec{4, 3, 5, 5, true});
    std::vector<Param*> ps;
    step.collect(ps);
    for (Param* p : ps) p->value = random_tensor(p->value.shape(), rng, -0.5, 0.5);
    Tensor m = random_tensor({1, 4, 3, 3}, rng), f = random_tensor({1, 3, 6, 6}, rng);
    Tensor gm, gf;
    std::vector<GradProbe> probes{{"m", &m, &gm}, {"f", &f, &gf}};
    for (Param* p : ps) probes.push_back({p->name, &p->value, &p->grad});
    run("refinement", [&] { return step.forward(m, f, 12, 12); },
        [&](const Tensor& g) {
          for (Param* p : ps) p->zero_grad();
          std::tie(gm, gf) = step.backward(g);
        },
        probes);
  }
  return reports;
}

GradcheckReport gradcheck_model(ScasNet& model, const Tensor& input, const GradcheckOptions& opts) {
  std::mt19937_64 rng(opts.seed ^ 0xABCD);
  std::vector<LabelMap> labels(input.n(), LabelMap(input.h(), input.w()));
  for (auto& l : labels) {
    for (auto& v : l.labels) v = static_cast<std::uint8_t>(rng() % model.config().classes);
  }
  Tensor x = input;
  Tensor gx;
  auto loss = [&] { return cross_entropy_loss(model.forward(x, Mode::Eval), labels).loss; };
  auto grads = [&] {
    model.zero_grad();
    LossOutput lo = cross_entropy_loss(model.forward(x, Mode::Eval), labels);
    gx = model.backward(lo.grad);
  };
  std::vector<GradProbe> probes{{"input", &x, &gx}};
  for (Param* p : model.params()) {
    if (p->trainable) probes.push_back({p->name, &p->value, &p->grad});
  }
  GradcheckReport r = gradcheck(loss, grads, probes, opts);
  r.label = "model";
  return r;
}

}  // namespace scasnet
