#include "scasnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "scasnet/json_util.hpp"

namespace scasnet {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Distribution code is written out so the generated bytes do not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  Real uniform() { return static_cast<Real>(gen_() >> 11) * 0x1.0p-53; }
  Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }
  std::size_t between(std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(gen_() % (hi - lo + 1));
  }
  Real normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    Real u1 = uniform();
    while (u1 <= 0) u1 = uniform();
    const Real u2 = uniform();
    const Real r = std::sqrt(-2 * std::log(u1));
    spare_ = r * std::sin(2 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 gen_;
  Real spare_ = 0;
  bool has_spare_ = false;
};

using Rgb = std::array<Real, 3>;

struct Canvas {
  std::size_t h, w;
  std::vector<Real> rgb;
  LabelMap labels;

  Canvas(std::size_t h_, std::size_t w_) : h(h_), w(w_), rgb(h_ * w_ * 3, 0), labels(h_, w_) {}
};

constexpr int kSuper = 4;

/// Paints a shape given by an inside test on continuous coordinates (pixel centers at
/// integer + 0.5). Colour is blended by supersampled coverage; the label is set where the
/// pixel center is inside.
void paint(Canvas& cv, Real y0, Real x0, Real y1, Real x1, const std::function<bool(Real, Real)>& inside,
           const std::function<Rgb(std::size_t, std::size_t)>& colour, std::uint8_t label) {
  const auto clampi = [](Real v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp<Real>(v, 0, static_cast<Real>(hi)));
  };
  const std::size_t ys = clampi(std::floor(y0), cv.h), ye = clampi(std::ceil(y1), cv.h);
  const std::size_t xs = clampi(std::floor(x0), cv.w), xe = clampi(std::ceil(x1), cv.w);
  for (std::size_t y = ys; y < ye; ++y)
    for (std::size_t x = xs; x < xe; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy)
        for (int sx = 0; sx < kSuper; ++sx)
          hits += inside(static_cast<Real>(y) + (sy + Real(0.5)) / kSuper,
                         static_cast<Real>(x) + (sx + Real(0.5)) / kSuper);
      if (hits == 0) continue;
      const Real cover = Real(hits) / (kSuper * kSuper);
      const Rgb c = colour(y, x);
      Real* px = &cv.rgb[(y * cv.w + x) * 3];
      for (int k = 0; k < 3; ++k) px[k] = (1 - cover) * px[k] + cover * c[k];
      if (inside(static_cast<Real>(y) + Real(0.5), static_cast<Real>(x) + Real(0.5))) cv.labels.at(y, x) = label;
    }
}

struct Box {
  Real cy, cx, hh, hw, angle;

  bool contains(Real y, Real x) const {
    const Real dy = y - cy, dx = x - cx;
    const Real c = std::cos(angle), s = std::sin(angle);
    const Real u = c * dx + s * dy, v = -s * dx + c * dy;
    return std::abs(u) <= hw && std::abs(v) <= hh;
  }
  Real radius() const { return std::sqrt(hh * hh + hw * hw); }
};

void paint_box(Canvas& cv, const Box& b, const std::function<Rgb(std::size_t, std::size_t)>& colour,
               std::uint8_t label) {
  const Real r = b.radius() + 1;
  paint(cv, b.cy - r, b.cx - r, b.cy + r, b.cx + r, [&](Real y, Real x) { return b.contains(y, x); }, colour,
        label);
}

/// Darkens the image under `b` shifted by (dy, dx); labels are untouched.
void cast_shadow(Canvas& cv, const Box& b, Real dy, Real dx) {
  const Box s{b.cy + dy, b.cx + dx, b.hh, b.hw, b.angle};
  const Real r = s.radius() + 1;
  const auto clampi = [](Real v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp<Real>(v, 0, static_cast<Real>(hi)));
  };
  for (std::size_t y = clampi(std::floor(s.cy - r), cv.h); y < clampi(std::ceil(s.cy + r), cv.h); ++y)
    for (std::size_t x = clampi(std::floor(s.cx - r), cv.w); x < clampi(std::ceil(s.cx + r), cv.w); ++x) {
      int hits = 0;
      for (int ky = 0; ky < kSuper; ++ky)
        for (int kx = 0; kx < kSuper; ++kx)
          hits += s.contains(static_cast<Real>(y) + (ky + Real(0.5)) / kSuper,
                             static_cast<Real>(x) + (kx + Real(0.5)) / kSuper);
      const Real f = 1 - Real(0.45) * hits / (kSuper * kSuper);
      for (int k = 0; k < 3; ++k) cv.rgb[(y * cv.w + x) * 3 + k] *= f;
    }
}

struct Strip {
  Real py, px;  // a point on the centre line
  Real dy, dx;  // unit direction
  Real half;

  Real distance(Real y, Real x) const { return std::abs((y - py) * dx - (x - px) * dy); }
};

Rgb jitter(Rgb base, Rng& rng, Real amount) {
  for (auto& c : base) c += rng.uniform(-amount, amount);
  return base;
}

}  // namespace

const std::vector<std::string>& scene_class_names() {
  static const std::vector<std::string> names = {"background", "building", "road", "car", "vegetation"};
  return names;
}

Scene generate_scene(const SceneSpec& spec) {
  if (spec.height == 0 || spec.width == 0) throw ConfigError("scene size must be positive");
  Rng rng(spec.seed);
  Canvas cv(spec.height, spec.width);
  const Real H = static_cast<Real>(spec.height), W = static_cast<Real>(spec.width);

  // Background: bare soil with a slow colour gradient.
  const Rgb ground = jitter({150, 138, 104}, rng, 10);
  Real wave[3][4];
  for (auto& w : wave) {
    w[0] = rng.uniform(0.02, 0.08);
    w[1] = rng.uniform(0, 2 * std::numbers::pi);
    w[2] = rng.uniform(0, 2 * std::numbers::pi);
    w[3] = rng.uniform(4, 10);
  }
  for (std::size_t y = 0; y < spec.height; ++y)
    for (std::size_t x = 0; x < spec.width; ++x) {
      Real shade = 0;
      for (const auto& w : wave) shade += w[3] * std::sin(w[0] * (std::cos(w[1]) * Real(x) + std::sin(w[1]) * Real(y)) + w[2]);
      for (int k = 0; k < 3; ++k) cv.rgb[(y * spec.width + x) * 3 + k] = ground[k] + shade;
    }

  // Lawns: smooth green boxes that stay background. Only texture tells them from trees.
  const std::size_t n_lawns = rng.between(spec.lawns.min, spec.lawns.max);
  for (std::size_t i = 0; i < n_lawns; ++i) {
    const Box b{rng.uniform(0, H), rng.uniform(0, W), rng.uniform(10, 22), rng.uniform(10, 26),
                rng.uniform(0, std::numbers::pi / 2)};
    const Rgb grass = jitter({74, 112, 56}, rng, 8);
    paint_box(cv, b, [&](std::size_t, std::size_t) { return grass; }, Background);
  }

  // Vegetation: clusters of overlapping crowns with per-pixel texture.
  const std::size_t n_veg = rng.between(spec.vegetation.min, spec.vegetation.max);
  for (std::size_t i = 0; i < n_veg; ++i) {
    const Real cy = rng.uniform(0, H), cx = rng.uniform(0, W);
    const std::size_t crowns = rng.between(3, 7);
    const Rgb green = jitter({64, 106, 50}, rng, 8);
    const std::uint64_t tex_seed = mix(spec.seed, 0x7EE5 + i);
    auto texture = [&](std::size_t y, std::size_t x) {
      const Real t = static_cast<Real>(mix(tex_seed, y * 65536 + x) >> 11) * 0x1.0p-53;
      const Real f = 0.75 + 0.5 * t;
      return Rgb{green[0] * f, green[1] * f, green[2] * f};
    };
    for (std::size_t c = 0; c < crowns; ++c) {
      const Real y = cy + rng.uniform(-14, 14), x = cx + rng.uniform(-14, 14), r = rng.uniform(5, 11);
      paint(cv, y - r, x - r, y + r, x + r,
            [&](Real py, Real px) { return (py - y) * (py - y) + (px - x) * (px - x) <= r * r; }, texture,
            Vegetation);
    }
  }

  // Roads: straight strips crossing the scene.
  static const Rgb kAsphalt = {104, 104, 110};
  std::vector<Strip> roads;
  const std::size_t n_roads = rng.between(spec.roads.min, spec.roads.max);
  for (std::size_t i = 0; i < n_roads; ++i) {
    Real angle;
    const Real pick = rng.uniform();
    if (pick < 0.4)
      angle = 0;
    else if (pick < 0.8)
      angle = std::numbers::pi / 2;
    else
      angle = rng.uniform(0.3, std::numbers::pi / 2 - 0.3) * (rng.uniform() < 0.5 ? 1 : -1);
    Strip s{rng.uniform(0.2 * H, 0.8 * H), rng.uniform(0.2 * W, 0.8 * W), std::sin(angle), std::cos(angle),
            rng.uniform(6, 8)};
    const Rgb asphalt = jitter(kAsphalt, rng, 6);
    paint(cv, 0, 0, H, W, [&](Real y, Real x) { return s.distance(y, x) <= s.half; },
          [&](std::size_t, std::size_t) { return asphalt; }, Road);
    roads.push_back(s);
  }

  // Lots: paved rectangles in road colour. Flat roofs share the colour, so the cast
  // shadow around a building is the cue that separates the two.
  std::vector<Box> lots;
  const std::size_t n_lots = rng.between(spec.lots.min, spec.lots.max);
  for (std::size_t i = 0; i < n_lots; ++i) {
    const Box b{rng.uniform(0, H), rng.uniform(0, W), rng.uniform(10, 18), rng.uniform(12, 22),
                rng.uniform(0, std::numbers::pi / 2)};
    const Rgb paving = jitter(kAsphalt, rng, 8);
    paint_box(cv, b, [&](std::size_t, std::size_t) { return paving; }, Road);
    lots.push_back(b);
  }

  // One sun per scene: shadows fall along (sy, sx).
  const Real sun = rng.uniform(0, 2 * std::numbers::pi), sun_len = rng.uniform(4, 7);
  const Real sy = sun_len * std::sin(sun), sx = sun_len * std::cos(sun);

  // Buildings: rotated rectangles with a ridge, kept off the roads when a free spot is found.
  static const Rgb roofs[] = {kAsphalt, kAsphalt, {86, 84, 94}, {164, 88, 66}, {188, 182, 170}};
  const std::size_t n_buildings = rng.between(spec.buildings.min, spec.buildings.max);
  for (std::size_t i = 0; i < n_buildings; ++i) {
    Box b{};
    for (int attempt = 0; attempt < 20; ++attempt) {
      b = Box{rng.uniform(0, H), rng.uniform(0, W), rng.uniform(8, 16), rng.uniform(8, 20),
              rng.uniform(0, std::numbers::pi / 2)};
      bool clear = true;
      for (const auto& r : roads) clear = clear && r.distance(b.cy, b.cx) > r.half + b.radius();
      if (clear) break;
    }
    cast_shadow(cv, b, sy, sx);
    const Rgb roof = jitter(roofs[rng.between(0, 4)], rng, 8);
    const Rgb dark = {roof[0] * 0.88, roof[1] * 0.88, roof[2] * 0.88};
    const Real c = std::cos(b.angle), s = std::sin(b.angle);
    paint_box(cv, b,
              [&](std::size_t y, std::size_t x) {
                const Real v = -s * (Real(x) + 0.5 - b.cx) + c * (Real(y) + 0.5 - b.cy);
                return v < 0 ? dark : roof;
              },
              Building);
  }

  // Cars: small boxes on a road or a lot, some painted close to asphalt.
  static const Rgb paints[] = {{196, 34, 30}, {36, 64, 178}, {232, 232, 228}, {30, 30, 34}, {206, 184, 40},
                               {128, 128, 134}};
  const std::size_t n_cars = rng.between(spec.cars.min, spec.cars.max);
  for (std::size_t i = 0; i < n_cars; ++i) {
    Box b{0, 0, rng.uniform(4, 5), rng.uniform(7, 9), 0};
    bool placed = false;
    const std::size_t slots = roads.size() + lots.size();
    const std::size_t pick = slots ? rng.between(0, slots - 1) : 0;
    if (pick < roads.size()) {
      const Strip& r = roads[pick];
      const Real across = rng.uniform(-1, 1) * std::max<Real>(0, r.half - b.hh);
      b.angle = std::atan2(r.dy, r.dx);
      for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
        const Real along = rng.uniform(-std::max(H, W), std::max(H, W));
        b.cy = r.py + along * r.dy + across * r.dx;
        b.cx = r.px + along * r.dx - across * r.dy;
        placed = b.cy >= 0 && b.cy < H && b.cx >= 0 && b.cx < W;
      }
    } else if (slots) {
      const Box& lot = lots[pick - roads.size()];
      const Real u = rng.uniform(-1, 1) * std::max<Real>(0, lot.hw - b.hh);
      const Real v = rng.uniform(-1, 1) * std::max<Real>(0, lot.hh - b.hw);
      const Real c = std::cos(lot.angle), s = std::sin(lot.angle);
      b.cy = lot.cy + s * u + c * v;
      b.cx = lot.cx + c * u - s * v;
      b.angle = lot.angle + std::numbers::pi / 2;
      placed = b.cy >= 0 && b.cy < H && b.cx >= 0 && b.cx < W;
    }
    if (!placed) {
      b.cy = rng.uniform(0, H);
      b.cx = rng.uniform(0, W);
      b.angle = rng.uniform(0, std::numbers::pi);
    }
    cast_shadow(cv, b, sy / 3, sx / 3);
    const Rgb body = jitter(paints[rng.between(0, 5)], rng, 6);
    paint_box(cv, b, [&](std::size_t, std::size_t) { return body; }, Car);
  }

  Scene out{Image(spec.height, spec.width), std::move(cv.labels)};
  for (std::size_t i = 0; i < cv.rgb.size(); ++i) {
    const Real v = cv.rgb[i] + spec.noise * rng.normal();
    out.image.rgb[i] = static_cast<std::uint8_t>(std::lround(std::clamp<Real>(v, 0, 255)));
  }
  return out;
}

std::vector<std::size_t> crop_offsets(std::size_t extent, std::size_t patch, std::size_t overlap) {
  if (patch == 0 || patch > extent)
    throw ConfigError("patch size " + std::to_string(patch) + " does not fit extent " + std::to_string(extent));
  if (overlap >= patch)
    throw ConfigError("overlap " + std::to_string(overlap) + " must be smaller than patch " + std::to_string(patch));
  const std::size_t stride = patch - overlap;
  const std::size_t n = (extent - patch + stride - 1) / stride + 1;
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::min(i * stride, extent - patch);
  return out;
}

std::vector<Patch> crop_patches(const Image& image, const LabelMap& labels, std::size_t patch, std::size_t overlap,
                                const std::string& source) {
  if (image.height != labels.height || image.width != labels.width)
    throw ShapeError("image and label map sizes differ");
  std::vector<Patch> out;
  for (std::size_t y0 : crop_offsets(image.height, patch, overlap))
    for (std::size_t x0 : crop_offsets(image.width, patch, overlap)) {
      Patch p{Image(patch, patch), LabelMap(patch, patch), source, y0, x0, "id"};
      for (std::size_t y = 0; y < patch; ++y) {
        std::copy_n(&image.rgb[((y0 + y) * image.width + x0) * 3], patch * 3, &p.image.rgb[y * patch * 3]);
        std::copy_n(&labels.labels[(y0 + y) * labels.width + x0], patch, &p.labels.labels[y * patch]);
      }
      out.push_back(std::move(p));
    }
  return out;
}

std::string augmentation_name(Augmentation a) {
  switch (a) {
    case Augmentation::Identity: return "id";
    case Augmentation::HFlip: return "hflip";
    case Augmentation::VFlip: return "vflip";
    case Augmentation::Rot90: return "rot90";
    case Augmentation::Rot180: return "rot180";
    case Augmentation::Rot270: return "rot270";
  }
  return "?";
}

namespace {

/// Source coordinate for output pixel (y, x); output dims equal input dims for all six
/// transforms since rotations require square input.
std::pair<std::size_t, std::size_t> source_of(Augmentation a, std::size_t y, std::size_t x, std::size_t h,
                                              std::size_t w) {
  switch (a) {
    case Augmentation::Identity: return {y, x};
    case Augmentation::HFlip: return {y, w - 1 - x};
    case Augmentation::VFlip: return {h - 1 - y, x};
    case Augmentation::Rot90: return {x, w - 1 - y};
    case Augmentation::Rot180: return {h - 1 - y, w - 1 - x};
    case Augmentation::Rot270: return {h - 1 - x, y};
  }
  return {y, x};
}

bool is_rotation(Augmentation a) {
  return a == Augmentation::Rot90 || a == Augmentation::Rot180 || a == Augmentation::Rot270;
}

void check_square(std::size_t h, std::size_t w, Augmentation a) {
  if (is_rotation(a) && h != w)
    throw ShapeError("rotation needs a square patch, got " + std::to_string(h) + "x" + std::to_string(w));
}

}  // namespace

Image transform(const Image& image, Augmentation a) {
  check_square(image.height, image.width, a);
  Image out(image.height, image.width);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x) {
      auto [sy, sx] = source_of(a, y, x, image.height, image.width);
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = image.at(sy, sx, c);
    }
  return out;
}

LabelMap transform(const LabelMap& labels, Augmentation a) {
  check_square(labels.height, labels.width, a);
  LabelMap out(labels.height, labels.width);
  for (std::size_t y = 0; y < labels.height; ++y)
    for (std::size_t x = 0; x < labels.width; ++x) {
      auto [sy, sx] = source_of(a, y, x, labels.height, labels.width);
      out.at(y, x) = labels.at(sy, sx);
    }
  return out;
}

std::vector<Patch> augment(const std::vector<Patch>& patches) {
  std::vector<Patch> out;
  out.reserve(patches.size() * kAugmentations.size());
  for (const auto& p : patches)
    for (auto a : kAugmentations)
      out.push_back(Patch{transform(p.image, a), transform(p.labels, a), p.source, p.y, p.x, augmentation_name(a)});
  return out;
}

Tensor to_network_input(const Image& image) {
  Tensor t = Tensor::uninitialized({1, 3, image.height, image.width});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x)
        t.at(0, c, y, x) = (Real(image.at(y, x, c)) / 255 - Real(0.5)) * 2;
  return t;
}

namespace {

void write_netpbm(const fs::path& path, const char* magic, std::size_t h, std::size_t w,
                  const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << magic << '\n' << w << ' ' << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_netpbm(const fs::path& path, const std::string& magic, std::size_t channels,
                                      std::size_t& h, std::size_t& w) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    for (;;) {
      int c = f.get();
      if (c == EOF) break;
      if (c == '#') {
        while (c != EOF && c != '\n') c = f.get();
        continue;
      }
      if (std::isspace(c)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(c));
    }
    return t;
  };
  if (token() != magic) throw DataError(path.string() + ": expected " + magic + " header");
  std::size_t maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed header");
  }
  if (maxval != 255 || h == 0 || w == 0) throw DataError(path.string() + ": unsupported header");
  std::vector<std::uint8_t> bytes(h * w * channels);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size())) throw DataError(path.string() + ": truncated");
  return bytes;
}

}  // namespace

void write_ppm(const fs::path& path, const Image& image) {
  write_netpbm(path, "P6", image.height, image.width, image.rgb);
}

Image read_ppm(const fs::path& path) {
  Image img;
  img.rgb = read_netpbm(path, "P6", 3, img.height, img.width);
  return img;
}

void write_pgm(const fs::path& path, const LabelMap& labels) {
  write_netpbm(path, "P5", labels.height, labels.width, labels.labels);
}

LabelMap read_pgm(const fs::path& path) {
  LabelMap lm;
  lm.labels = read_netpbm(path, "P5", 1, lm.height, lm.width);
  return lm;
}

namespace {

void check_range(const CountRange& r, const char* what) {
  if (r.min > r.max) throw ConfigError(std::string("data.") + what + ": min exceeds max");
}

nlohmann::json range_json(const CountRange& r) { return nlohmann::json::array({r.min, r.max}); }

void read_range(const nlohmann::json& j, const char* key, CountRange& r) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_unsigned() || !(*it)[1].is_number_unsigned())
    throw ConfigError(std::string("config key 'data.") + key + "' must be [min, max]");
  r = {(*it)[0].get<std::size_t>(), (*it)[1].get<std::size_t>()};
}

}  // namespace

void validate(const DataConfig& cfg) {
  if (cfg.train_scenes == 0) throw ConfigError("data.train_scenes must be at least 1");
  if (cfg.scene_height < 8 || cfg.scene_width < 8) throw ConfigError("data: scenes must be at least 8x8");
  if (cfg.patch == 0 || cfg.patch > cfg.scene_height || cfg.patch > cfg.scene_width)
    throw ConfigError("data.patch must fit inside the scene");
  if (cfg.overlap >= cfg.patch) throw ConfigError("data.overlap must be smaller than data.patch");
  if (!(cfg.noise >= 0)) throw ConfigError("data.noise must be non-negative");
  check_range(cfg.buildings, "buildings");
  check_range(cfg.roads, "roads");
  check_range(cfg.cars, "cars");
  check_range(cfg.vegetation, "vegetation");
  check_range(cfg.lots, "lots");
  check_range(cfg.lawns, "lawns");
}

nlohmann::json to_json(const DataConfig& cfg) {
  return {{"scene_height", cfg.scene_height},
          {"scene_width", cfg.scene_width},
          {"train_scenes", cfg.train_scenes},
          {"val_scenes", cfg.val_scenes},
          {"test_scenes", cfg.test_scenes},
          {"patch", cfg.patch},
          {"overlap", cfg.overlap},
          {"augment", cfg.augment},
          {"buildings", range_json(cfg.buildings)},
          {"roads", range_json(cfg.roads)},
          {"cars", range_json(cfg.cars)},
          {"vegetation", range_json(cfg.vegetation)},
          {"lots", range_json(cfg.lots)},
          {"lawns", range_json(cfg.lawns)},
          {"noise", cfg.noise},
          {"seed", cfg.seed}};
}

DataConfig data_config_from_json(const nlohmann::json& j, const DataConfig& base) {
  reject_unknown_keys(j,
                      {"scene_height", "scene_width", "train_scenes", "val_scenes", "test_scenes", "patch", "overlap",
                       "augment", "buildings", "roads", "cars", "vegetation", "lots", "lawns", "noise", "seed"},
                      "data");
  DataConfig c = base;
  read_opt(j, "scene_height", c.scene_height, "data");
  read_opt(j, "scene_width", c.scene_width, "data");
  read_opt(j, "train_scenes", c.train_scenes, "data");
  read_opt(j, "val_scenes", c.val_scenes, "data");
  read_opt(j, "test_scenes", c.test_scenes, "data");
  read_opt(j, "patch", c.patch, "data");
  read_opt(j, "overlap", c.overlap, "data");
  read_opt(j, "augment", c.augment, "data");
  read_range(j, "buildings", c.buildings);
  read_range(j, "roads", c.roads);
  read_range(j, "cars", c.cars);
  read_range(j, "vegetation", c.vegetation);
  read_range(j, "lots", c.lots);
  read_range(j, "lawns", c.lawns);
  read_opt(j, "noise", c.noise, "data");
  read_opt(j, "seed", c.seed, "data");
  return c;
}

SceneSpec scene_spec(const DataConfig& cfg, std::size_t split, std::size_t index) {
  SceneSpec s;
  s.height = cfg.scene_height;
  s.width = cfg.scene_width;
  s.buildings = cfg.buildings;
  s.roads = cfg.roads;
  s.cars = cfg.cars;
  s.vegetation = cfg.vegetation;
  s.lots = cfg.lots;
  s.lawns = cfg.lawns;
  s.noise = cfg.noise;
  s.seed = mix(mix(cfg.seed, split), index);
  return s;
}

namespace {

constexpr const char* kSplitNames[] = {"train", "val", "test"};

std::string scene_id(std::size_t split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu", kSplitNames[split], index);
  return buf;
}

nlohmann::json entry_json(const DatasetEntry& e) {
  return {{"image", e.image}, {"labels", e.labels}, {"source", e.source},
          {"y", e.y},         {"x", e.x},           {"augmentation", e.augmentation}};
}

DatasetEntry entry_from_json(const nlohmann::json& j) {
  try {
    return {j.at("image").get<std::string>(), j.at("labels").get<std::string>(), j.at("source").get<std::string>(),
            j.at("y").get<std::size_t>(),      j.at("x").get<std::size_t>(),       j.at("augmentation").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest entry: ") + e.what());
  }
}

std::vector<DatasetEntry> entries_from_json(const nlohmann::json& j) {
  std::vector<DatasetEntry> out;
  if (!j.is_array()) throw DataError("manifest split must be an array");
  for (const auto& e : j) out.push_back(entry_from_json(e));
  return out;
}

nlohmann::json entries_json(const std::vector<DatasetEntry>& es) {
  auto a = nlohmann::json::array();
  for (const auto& e : es) a.push_back(entry_json(e));
  return a;
}

}  // namespace

DatasetManifest generate_dataset(const DataConfig& cfg, const fs::path& root) {
  validate(cfg);
  std::error_code ec;
  fs::create_directories(root / "scenes", ec);
  if (!ec) fs::create_directories(root / "patches", ec);
  if (ec) throw DataError("cannot create dataset directory " + root.string() + ": " + ec.message());

  DatasetManifest m;
  m.root = root;
  m.config = cfg;
  m.class_names = scene_class_names();
  const std::size_t counts[] = {cfg.train_scenes, cfg.val_scenes, cfg.test_scenes};
  std::vector<DatasetEntry>* scene_lists[] = {&m.train_scenes, &m.val_scenes, &m.test_scenes};
  for (std::size_t split = 0; split < 3; ++split)
    for (std::size_t i = 0; i < counts[split]; ++i) {
      const std::string id = scene_id(split, i);
      Scene s = generate_scene(scene_spec(cfg, split, i));
      DatasetEntry e{"scenes/" + id + ".ppm", "scenes/" + id + ".pgm", id, 0, 0, "id"};
      write_ppm(root / e.image, s.image);
      write_pgm(root / e.labels, s.labels);
      scene_lists[split]->push_back(e);
      if (split != 0) continue;
      auto patches = crop_patches(s.image, s.labels, cfg.patch, cfg.overlap, id);
      if (cfg.augment) patches = augment(patches);
      for (const auto& p : patches) {
        char name[96];
        std::snprintf(name, sizeof name, "patches/%s_y%03zu_x%03zu_%s", id.c_str(), p.y, p.x,
                      p.augmentation.c_str());
        DatasetEntry pe{std::string(name) + ".ppm", std::string(name) + ".pgm", id, p.y, p.x, p.augmentation};
        write_ppm(root / pe.image, p.image);
        write_pgm(root / pe.labels, p.labels);
        m.train_patches.push_back(std::move(pe));
      }
    }
  write_manifest(m);
  return m;
}

void write_manifest(const DatasetManifest& m) {
  nlohmann::json j = {{"format", "scasnet-dataset"},
                      {"version", 1},
                      {"config", to_json(m.config)},
                      {"classes", m.class_names},
                      {"splits",
                       {{"train", {{"scenes", entries_json(m.train_scenes)}, {"patches", entries_json(m.train_patches)}}},
                        {"val", {{"scenes", entries_json(m.val_scenes)}}},
                        {"test", {{"scenes", entries_json(m.test_scenes)}}}}}};
  std::ofstream f(m.root / "manifest.json");
  if (!f) throw DataError("cannot write " + (m.root / "manifest.json").string());
  f << j.dump(1) << '\n';
}

DatasetManifest load_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  std::ifstream f(path);
  if (!f) throw DataError("missing dataset manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "scasnet-dataset" || j.value("version", 0) != 1)
    throw DataError(path.string() + ": not a version 1 dataset manifest");
  DatasetManifest m;
  m.root = root;
  try {
    m.config = data_config_from_json(j.at("config"), DataConfig{});
    m.class_names = j.at("classes").get<std::vector<std::string>>();
    const auto& s = j.at("splits");
    m.train_scenes = entries_from_json(s.at("train").at("scenes"));
    m.train_patches = entries_from_json(s.at("train").at("patches"));
    m.val_scenes = entries_from_json(s.at("val").at("scenes"));
    m.test_scenes = entries_from_json(s.at("test").at("scenes"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return m;
}

std::vector<Sample> load_samples(const DatasetManifest& m, const std::vector<DatasetEntry>& entries) {
  std::vector<Sample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    Image img = read_ppm(m.root / e.image);
    LabelMap lm = read_pgm(m.root / e.labels);
    if (img.height != lm.height || img.width != lm.width) throw DataError("label map size differs for " + e.image);
    for (auto v : lm.labels)
      if (v >= m.class_names.size()) throw DataError("label out of range in " + e.labels);
    out.push_back({to_network_input(img), std::move(lm)});
  }
  return out;
}

}  // namespace scasnet
