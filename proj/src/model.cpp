#include "scasnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "scasnet/json_util.hpp"

namespace scasnet {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Box-Muller on the top 53 bits; keeps initialization independent of the standard
// library's distribution implementation.
void fill_gaussian(Tensor& t, Real stddev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng] { return (static_cast<Real>(rng() >> 11) + 0.5) * 0x1.0p-53; };
  for (std::size_t i = 0; i < t.size(); i += 2) {
    const Real r = std::sqrt(-2 * std::log(uniform()));
    const Real theta = 2 * std::numbers::pi_v<Real> * uniform();
    t[i] = stddev * r * std::cos(theta);
    if (i + 1 < t.size()) t[i + 1] = stddev * r * std::sin(theta);
  }
}

const char* context_name(ContextMode m) {
  switch (m) {
    case ContextMode::None: return "none";
    case ContextMode::ParallelStack: return "parallel";
    case ContextMode::Cascaded: return "cascaded";
  }
  return "cascaded";
}

ContextMode parse_context(const std::string& s) {
  if (s == "none") return ContextMode::None;
  if (s == "parallel") return ContextMode::ParallelStack;
  if (s == "cascaded") return ContextMode::Cascaded;
  throw ConfigError("model.context must be one of none|parallel|cascaded, got '" + s + "'");
}

// Spatial extent of each stage's pre-pool output relative to the input (divisor).
std::vector<std::size_t> stage_divisors(const ModelConfig& cfg) {
  std::vector<std::size_t> div;
  std::size_t d = 1;
  for (const auto& s : cfg.stages) {
    div.push_back(d);
    if (s.pool) d *= 2;
  }
  return div;
}

}  // namespace

ModelConfig desk_model_config() {
  ModelConfig c;
  c.stages = {{2, 16, true}, {2, 32, true}, {2, 64, true}, {2, 64, false}};
  c.context = ContextMode::Cascaded;
  c.dilation_rates = {4, 3, 2, 1};
  c.context_width = 64;
  c.refinement_taps = {3, 2};
  c.refinement_width = 32;
  c.classes = 5;
  c.dropout = 0.5;
  return c;
}

ModelConfig paper_model_config() {
  ModelConfig c;
  c.stages = {{2, 64, true}, {2, 128, true}, {3, 256, true}, {3, 512, false}, {3, 512, false}};
  c.context = ContextMode::Cascaded;
  c.dilation_rates = {24, 18, 12, 6};
  c.context_width = 512;
  c.refinement_taps = {3, 2, 1};
  c.refinement_width = 256;
  c.classes = 6;
  c.dropout = 0.5;
  return c;
}

std::size_t output_stride(const ModelConfig& cfg) {
  std::size_t s = 1;
  for (const auto& st : cfg.stages) s *= st.pool ? 2 : 1;
  return s;
}

void validate(const ModelConfig& cfg) {
  if (cfg.in_channels == 0) throw ConfigError("model.in_channels must be positive");
  if (cfg.stages.empty()) throw ConfigError("model.stages must not be empty");
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    if (cfg.stages[i].convs == 0 || cfg.stages[i].width == 0) {
      throw ConfigError("model.stages[" + std::to_string(i) + "] needs convs >= 1 and width >= 1");
    }
  }
  if (cfg.classes < 2) throw ConfigError("model.classes must be at least 2");
  if (!(cfg.dropout >= 0 && cfg.dropout < 1)) throw ConfigError("model.dropout must lie in [0, 1)");
  if (cfg.context != ContextMode::None) {
    validate_dilation_rates(cfg.dilation_rates);
    if (cfg.context_width == 0) throw ConfigError("model.context_width must be positive");
  }
  const auto div = stage_divisors(cfg);
  const std::size_t deepest = output_stride(cfg);
  std::size_t prev_div = deepest;
  for (std::size_t i = 0; i < cfg.refinement_taps.size(); ++i) {
    const std::size_t tap = cfg.refinement_taps[i];
    if (tap == 0 || tap > cfg.stages.size()) {
      throw ConfigError("model.refinement_taps entry " + std::to_string(tap) + " is not a stage number");
    }
    if (div[tap - 1] >= prev_div) {
      throw ConfigError("model.refinement_taps must be strictly finer than the preceding stream (stage " +
                        std::to_string(tap) + ")");
    }
    prev_div = div[tap - 1];
  }
  if (!cfg.refinement_taps.empty() && cfg.refinement_width == 0) {
    throw ConfigError("model.refinement_width must be positive");
  }
}

nlohmann::json to_json(const ModelConfig& cfg) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : cfg.stages) stages.push_back({{"convs", s.convs}, {"width", s.width}, {"pool", s.pool}});
  return {{"in_channels", cfg.in_channels},
          {"stages", stages},
          {"context", context_name(cfg.context)},
          {"dilation_rates", cfg.dilation_rates},
          {"context_width", cfg.context_width},
          {"context_correction", cfg.context_correction},
          {"refinement_taps", cfg.refinement_taps},
          {"refinement_width", cfg.refinement_width},
          {"refinement_correction", cfg.refinement_correction},
          {"classes", cfg.classes},
          {"dropout", cfg.dropout},
          {"use_batchnorm", cfg.use_batchnorm}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, const ModelConfig& base) {
  const std::string sec = "model";
  reject_unknown_keys(j,
                      {"in_channels", "stages", "context", "dilation_rates", "context_width", "context_correction",
                       "refinement_taps", "refinement_width", "refinement_correction", "classes", "dropout",
                       "use_batchnorm"},
                      sec);
  ModelConfig c = base;
  read_opt(j, "in_channels", c.in_channels, sec);
  if (auto it = j.find("stages"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("model.stages must be an array");
    c.stages.clear();
    for (const auto& s : *it) {
      reject_unknown_keys(s, {"convs", "width", "pool"}, "model.stages[]");
      StageConfig st;
      read_opt(s, "convs", st.convs, sec);
      read_opt(s, "width", st.width, sec);
      read_opt(s, "pool", st.pool, sec);
      c.stages.push_back(st);
    }
  }
  if (auto it = j.find("context"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("model.context must be a string");
    c.context = parse_context(it->get<std::string>());
  }
  read_opt(j, "dilation_rates", c.dilation_rates, sec);
  read_opt(j, "context_width", c.context_width, sec);
  read_opt(j, "context_correction", c.context_correction, sec);
  read_opt(j, "refinement_taps", c.refinement_taps, sec);
  read_opt(j, "refinement_width", c.refinement_width, sec);
  read_opt(j, "refinement_correction", c.refinement_correction, sec);
  read_opt(j, "classes", c.classes, sec);
  read_opt(j, "dropout", c.dropout, sec);
  read_opt(j, "use_batchnorm", c.use_batchnorm, sec);
  return c;
}

ScasNet::ScasNet(ModelConfig cfg) : cfg_(std::move(cfg)), dropout_(cfg_.dropout) {
  validate(cfg_);
  std::size_t ch = cfg_.in_channels;
  std::vector<std::size_t> stage_width;
  for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
    const StageConfig& sc = cfg_.stages[s];
    Stage st;
    for (std::size_t i = 0; i < sc.convs; ++i) {
      const std::string base = "enc.s" + std::to_string(s + 1);
      st.convs.emplace_back(base + ".conv" + std::to_string(i + 1), ch, sc.width, 3, ConvGeometry{1, 1, 1});
      if (cfg_.use_batchnorm) st.norms.emplace_back(base + ".bn" + std::to_string(i + 1), sc.width);
      st.relus.emplace_back();
      ch = sc.width;
    }
    if (sc.pool) st.pool.emplace();
    stages_.push_back(std::move(st));
    stage_width.push_back(sc.width);
  }
  if (cfg_.context != ContextMode::None) {
    ContextSpec spec{cfg_.dilation_rates, cfg_.context_width,
                     cfg_.context == ContextMode::Cascaded ? AggregationMode::Cascaded : AggregationMode::ParallelStack,
                     cfg_.context_correction};
    context_.emplace("ctx", ch, spec);
    ch = cfg_.context_width;
  }
  for (std::size_t r = 0; r < cfg_.refinement_taps.size(); ++r) {
    RefinementSpec spec{ch, stage_width[cfg_.refinement_taps[r] - 1], cfg_.refinement_width, cfg_.refinement_width,
                        cfg_.refinement_correction};
    refinements_.emplace_back("ref" + std::to_string(r + 1), spec);
    ch = cfg_.refinement_width;
  }
  classifier_ = Conv2d("cls", ch, cfg_.classes, 1, {});
}

Tensor ScasNet::forward(const Tensor& batch, Mode mode, std::uint64_t seed) {
  if (batch.rank() != 4 || batch.c() != cfg_.in_channels) {
    throw ShapeError("model input must be [N," + std::to_string(cfg_.in_channels) + ",H,W], got " +
                     shape_str(batch.shape()));
  }
  const std::size_t stride = output_stride(cfg_);
  if (batch.h() % stride != 0 || batch.w() % stride != 0) {
    throw ShapeError("model input " + std::to_string(batch.h()) + "x" + std::to_string(batch.w()) +
                     " is not a multiple of the encoder stride " + std::to_string(stride));
  }
  std::vector<Tensor> taps(stages_.size());
  tap_shapes_.assign(stages_.size(), Shape{});
  Tensor x = batch;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    Stage& st = stages_[s];
    for (std::size_t i = 0; i < st.convs.size(); ++i) {
      x = st.convs[i].forward(x);
      if (cfg_.use_batchnorm) x = st.norms[i].forward(x, mode);
      x = st.relus[i].forward(x);
    }
    tap_shapes_[s] = x.shape();
    if (std::find(cfg_.refinement_taps.begin(), cfg_.refinement_taps.end(), s + 1) != cfg_.refinement_taps.end()) {
      taps[s] = x;
    }
    if (st.pool) x = st.pool->forward(x);
  }
  if (context_) x = context_->forward(x);
  x = dropout_.forward(x, mode, seed);
  for (std::size_t r = 0; r < refinements_.size(); ++r) {
    const std::size_t tap = cfg_.refinement_taps[r] - 1;
    const std::size_t next = r + 1 < refinements_.size() ? cfg_.refinement_taps[r + 1] - 1 : tap;
    x = refinements_[r].forward(x, taps[tap], tap_shapes_[next][2], tap_shapes_[next][3]);
  }
  x = classifier_.forward(x);
  ready_ = true;
  return upsample_.forward(x, batch.h(), batch.w());
}

Tensor ScasNet::backward(const Tensor& grad_logits) {
  if (!ready_) throw StateError("model: backward called before forward");
  Tensor g = classifier_.backward(upsample_.backward(grad_logits));
  std::vector<Tensor> tap_grads(stages_.size());
  for (std::size_t r = refinements_.size(); r-- > 0;) {
    auto [gm, gf] = refinements_[r].backward(g);
    const std::size_t tap = cfg_.refinement_taps[r] - 1;
    if (tap_grads[tap].empty()) {
      tap_grads[tap] = std::move(gf);
    } else {
      tap_grads[tap] += gf;
    }
    g = std::move(gm);
  }
  g = dropout_.backward(g);
  if (context_) g = context_->backward(g);
  for (std::size_t s = stages_.size(); s-- > 0;) {
    Stage& st = stages_[s];
    if (st.pool) g = st.pool->backward(g);
    if (!tap_grads[s].empty()) g += tap_grads[s];
    for (std::size_t i = st.convs.size(); i-- > 0;) {
      g = st.relus[i].backward(g);
      if (cfg_.use_batchnorm) g = st.norms[i].backward(g);
      g = st.convs[i].backward(g);
    }
  }
  return g;
}

std::vector<Param*> ScasNet::params() {
  std::vector<Param*> out;
  for (auto& st : stages_) {
    for (std::size_t i = 0; i < st.convs.size(); ++i) {
      st.convs[i].collect(out);
      if (cfg_.use_batchnorm) st.norms[i].collect(out);
    }
  }
  if (context_) context_->collect(out);
  for (auto& r : refinements_) r.collect(out);
  classifier_.collect(out);
  return out;
}

std::vector<const Param*> ScasNet::params() const {
  auto mutable_params = const_cast<ScasNet*>(this)->params();
  return {mutable_params.begin(), mutable_params.end()};
}

Param* ScasNet::find_param(const std::string& name) {
  for (Param* p : params()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

void ScasNet::zero_grad() {
  for (Param* p : params()) p->zero_grad();
}

std::vector<ResidualCorrection*> ScasNet::corrections() {
  std::vector<ResidualCorrection*> out;
  if (context_) {
    for (std::size_t i = 0; i < context_->correction_count(); ++i) out.push_back(&context_->correction(i));
  }
  for (auto& r : refinements_) {
    if (r.has_correction()) out.push_back(&r.correction());
  }
  return out;
}

ScasNet build_model(const ModelConfig& cfg, std::uint64_t seed) {
  ScasNet model(cfg);
  for (Param* p : model.params()) {
    if (!p->trainable || !p->decay) continue;  // biases, BN affine and statistics keep their defaults
    const Tensor& w = p->value;
    const std::size_t fan_in = w.dim(1) * w.dim(2) * w.dim(3);
    fill_gaussian(p->value, std::sqrt(Real{2} / static_cast<Real>(fan_in)), splitmix64(seed ^ fnv1a(p->name)));
  }
  for (ResidualCorrection* rc : model.corrections()) rc->conv_c().weight().value.fill(0);
  return model;
}

LabelMap argmax_channels(const Tensor& scores) {
  if (scores.rank() != 4 || scores.n() != 1) throw ShapeError("argmax_channels expects [1,K,H,W]");
  LabelMap out(scores.h(), scores.w());
  const std::size_t P = scores.plane();
  for (std::size_t j = 0; j < P; ++j) {
    std::size_t best = 0;
    Real best_v = scores[j];
    for (std::size_t k = 1; k < scores.c(); ++k) {
      if (scores[k * P + j] > best_v) {
        best_v = scores[k * P + j];
        best = k;
      }
    }
    out.labels[j] = static_cast<std::uint8_t>(best);
  }
  return out;
}

LabelMap predict(ScasNet& model, const Tensor& image) {
  return argmax_channels(softmax_channels(model.forward(image, Mode::Eval)));
}

void save_checkpoint(const std::filesystem::path& dir, const ScasNet& model, const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& aux) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  nlohmann::json manifest;
  manifest["format"] = "scasnet-checkpoint";
  manifest["version"] = 1;
  manifest["config"] = to_json(model.config());
  manifest["epoch"] = meta.epoch;
  manifest["seed"] = meta.seed;
  manifest["history"] = meta.history;
  manifest["extra"] = meta.extra;
  auto list_blobs = [&dir](const char* prefix, std::size_t i, const std::string& name, const Tensor& t) {
    std::ostringstream file;
    file << prefix << std::setw(4) << std::setfill('0') << i << ".tnsr";
    save_tensor(dir / file.str(), t);
    return nlohmann::json{{"name", name}, {"file", file.str()}, {"shape", t.shape()}};
  };
  nlohmann::json params = nlohmann::json::array();
  std::size_t i = 0;
  for (const Param* p : model.params()) params.push_back(list_blobs("param_", i++, p->name, p->value));
  manifest["params"] = params;
  nlohmann::json aux_list = nlohmann::json::array();
  i = 0;
  for (const auto& [name, t] : aux) aux_list.push_back(list_blobs("aux_", i++, name, *t));
  manifest["aux"] = aux_list;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("checkpoint manifest missing: " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  LoadedCheckpoint lc;
  lc.model = ScasNet(model_config_from_json(manifest.at("config"), ModelConfig{}));
  lc.meta.epoch = manifest.value("epoch", std::size_t{0});
  lc.meta.seed = manifest.value("seed", std::uint64_t{0});
  lc.meta.history = manifest.value("history", nlohmann::json::array());
  lc.meta.extra = manifest.value("extra", nlohmann::json::object());
  auto params = lc.model.params();
  const auto& listed = manifest.at("params");
  if (listed.size() != params.size()) {
    throw DataError("checkpoint lists " + std::to_string(listed.size()) + " parameters, model has " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (listed[i].at("name").get<std::string>() != params[i]->name) {
      throw DataError("checkpoint parameter order mismatch at " + params[i]->name);
    }
    Tensor t = load_tensor(dir / listed[i].at("file").get<std::string>());
    if (t.shape() != params[i]->value.shape()) throw DataError("checkpoint shape mismatch for " + params[i]->name);
    params[i]->value = std::move(t);
  }
  for (const auto& a : manifest.value("aux", nlohmann::json::array())) {
    lc.aux.emplace_back(a.at("name").get<std::string>(), load_tensor(dir / a.at("file").get<std::string>()));
  }
  return lc;
}

}  // namespace scasnet
