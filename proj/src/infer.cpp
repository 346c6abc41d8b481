#include "scasnet/infer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "scasnet/json_util.hpp"

namespace scasnet {

void validate(const InferConfig& cfg) {
  if (cfg.scales.empty()) throw ConfigError("infer.scales must not be empty");
  for (Real s : cfg.scales)
    if (!(s > 0) || !std::isfinite(s)) throw ConfigError("infer.scales must be positive");
  if (cfg.patch == 0) throw ConfigError("infer.patch must be positive");
}

nlohmann::json to_json(const InferConfig& cfg) { return {{"scales", cfg.scales}, {"patch", cfg.patch}}; }

InferConfig infer_config_from_json(const nlohmann::json& j, const InferConfig& base) {
  reject_unknown_keys(j, {"scales", "patch"}, "infer");
  InferConfig c = base;
  read_opt(j, "scales", c.scales, "infer");
  read_opt(j, "patch", c.patch, "infer");
  return c;
}

std::vector<TileRect> plan_tiles(std::size_t h, std::size_t w, std::size_t tile_h, std::size_t tile_w) {
  if (tile_h == 0 || tile_w == 0) throw ShapeError("plan_tiles: tile size must be positive");
  std::vector<TileRect> out;
  for (std::size_t y = 0; y < h; y += tile_h)
    for (std::size_t x = 0; x < w; x += tile_w) out.push_back({y, x, std::min(tile_h, h - y), std::min(tile_w, w - x)});
  return out;
}

ProbMap stitch(const std::vector<PlacedTile>& tiles, std::size_t h, std::size_t w,
               std::vector<std::uint32_t>* write_count) {
  if (tiles.empty()) throw ShapeError("stitch: no tiles");
  const std::size_t K = tiles.front().probs.classes();
  std::vector<std::uint32_t> count(h * w, 0);
  Tensor canvas({1, K, h, w});
  for (const auto& t : tiles) {
    const Tensor& p = t.probs.probs;
    if (p.rank() != 4 || p.n() != 1 || p.c() != K) throw ShapeError("stitch: tile has the wrong class count");
    if (t.y + p.h() > h || t.x + p.w() > w)
      throw ShapeError("stitch: tile at (" + std::to_string(t.y) + "," + std::to_string(t.x) + ") leaves the canvas");
    for (std::size_t y = 0; y < p.h(); ++y)
      for (std::size_t x = 0; x < p.w(); ++x) {
        if (count[(t.y + y) * w + t.x + x]++ != 0)
          throw ShapeError("stitch: pixel (" + std::to_string(t.y + y) + "," + std::to_string(t.x + x) +
                           ") written twice");
        for (std::size_t k = 0; k < K; ++k) canvas.at(0, k, t.y + y, t.x + x) = p.at(0, k, y, x);
      }
  }
  for (std::size_t i = 0; i < count.size(); ++i)
    if (count[i] == 0)
      throw ShapeError("stitch: pixel (" + std::to_string(i / w) + "," + std::to_string(i % w) + ") not covered");
  if (write_count) *write_count = std::move(count);
  return {std::move(canvas)};
}

namespace {

std::size_t mirror(std::size_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::size_t period = 2 * (n - 1);
  i %= period;
  return i < n ? i : period - i;
}

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

}  // namespace

Tensor reflect_pad(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 4) throw ShapeError("reflect_pad expects a rank-4 tensor");
  if (out_h < x.h() || out_w < x.w()) throw ShapeError("reflect_pad: target smaller than input");
  if (out_h == x.h() && out_w == x.w()) return x;
  Tensor out = Tensor::uninitialized({x.n(), x.c(), out_h, out_w});
  for (std::size_t nc = 0; nc < x.n() * x.c(); ++nc) {
    const Real* src = x.data() + nc * x.plane();
    Real* dst = out.data() + nc * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const Real* row = src + mirror(y, x.h()) * x.w();
      for (std::size_t xx = 0; xx < out_w; ++xx) dst[y * out_w + xx] = row[mirror(xx, x.w())];
    }
  }
  return out;
}

void renormalize(ProbMap& p) {
  Tensor& t = p.probs;
  const std::size_t P = t.plane(), K = t.c();
  for (std::size_t j = 0; j < P; ++j) {
    Real s = 0;
    for (std::size_t k = 0; k < K; ++k) s += t[k * P + j];
    for (std::size_t k = 0; k < K; ++k) t[k * P + j] /= s;
  }
}

namespace {

Tensor crop(const Tensor& x, std::size_t h, std::size_t w) {
  if (h == x.h() && w == x.w()) return x;
  Tensor out = Tensor::uninitialized({x.n(), x.c(), h, w});
  for (std::size_t nc = 0; nc < x.n() * x.c(); ++nc)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(x.data() + nc * x.plane() + y * x.w(), w, out.data() + (nc * h + y) * w);
  return out;
}

Tensor window(const Tensor& x, const TileRect& r) {
  Tensor out = Tensor::uninitialized({1, x.c(), r.h, r.w});
  for (std::size_t c = 0; c < x.c(); ++c)
    for (std::size_t y = 0; y < r.h; ++y)
      std::copy_n(x.data() + (c * x.h() + r.y + y) * x.w() + r.x, r.w, out.data() + (c * r.h + y) * r.w);
  return out;
}

}  // namespace

InferResult infer_image(ScasNet& model, const Tensor& image, const InferConfig& cfg) {
  validate(cfg);
  if (image.rank() != 4 || image.n() != 1) throw ShapeError("infer_image expects a [1,C,H,W] image");
  const std::size_t H = image.h(), W = image.w();
  if (H < 8 || W < 8)
    throw ShapeError("infer_image: image " + std::to_string(H) + "x" + std::to_string(W) + " is smaller than 8 px");
  const std::size_t stride = model.stride();
  if (cfg.patch % stride != 0)
    throw ConfigError("infer.patch " + std::to_string(cfg.patch) + " is not a multiple of the model stride " +
                      std::to_string(stride));

  // Fixed accumulation order makes the average independent of how scales are listed.
  std::vector<Real> scales = cfg.scales;
  std::sort(scales.begin(), scales.end());

  Tensor sum;
  for (Real s : scales) {
    const auto sh = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(s * Real(H))));
    const auto sw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(s * Real(W))));
    const Tensor scaled = bilinear_resize(image, sh, sw);
    const std::size_t th = round_up(std::min(cfg.patch, sh), stride);
    const std::size_t tw = round_up(std::min(cfg.patch, sw), stride);
    std::vector<PlacedTile> tiles;
    for (const TileRect& r : plan_tiles(sh, sw, th, tw)) {
      const Tensor input = reflect_pad(window(scaled, r), th, tw);
      const Tensor probs = softmax_channels(model.forward(input, Mode::Eval));
      tiles.push_back({{crop(probs, r.h, r.w)}, r.y, r.x});
    }
    ProbMap p = stitch(tiles, sh, sw);
    if (sh != H || sw != W) {
      p.probs = bilinear_resize(p.probs, H, W);
      renormalize(p);
    }
    if (sum.size() == 0)
      sum = std::move(p.probs);
    else
      sum = elementwise_sum(sum, p.probs);
  }
  const Real inv = Real(1) / Real(scales.size());
  for (auto& v : sum.values()) v *= inv;
  InferResult out{{std::move(sum)}, {}};
  out.labels = argmax_channels(out.probs.probs);
  return out;
}

void save_probmap(const std::filesystem::path& stem, const ProbMap& p, const std::vector<std::string>& class_names) {
  auto tnsr = stem;
  tnsr += ".tnsr";
  auto side = stem;
  side += ".json";
  save_tensor(tnsr, p.probs);
  std::ofstream f(side);
  if (!f) throw DataError("cannot write " + side.string());
  f << nlohmann::json{{"K", p.classes()}, {"H", p.height()}, {"W", p.width()}, {"classes", class_names}}.dump(1)
    << '\n';
}

ProbMap load_probmap(const std::filesystem::path& stem) {
  auto tnsr = stem;
  tnsr += ".tnsr";
  ProbMap p{load_tensor(tnsr)};
  if (p.probs.rank() != 4 || p.probs.n() != 1) throw DataError(tnsr.string() + ": not a [1,K,H,W] probability map");
  return p;
}

}  // namespace scasnet
