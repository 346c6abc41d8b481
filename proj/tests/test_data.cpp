#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <random>

#include "scasnet/data.hpp"

using namespace scasnet;

namespace {

std::array<std::size_t, 256> histogram(const LabelMap& lm) {
  std::array<std::size_t, 256> h{};
  for (auto v : lm.labels) ++h[v];
  return h;
}

Patch random_patch(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Patch p{Image(n, n), LabelMap(n, n), "t", 0, 0, "id"};
  for (auto& v : p.image.rgb) v = std::uint8_t(rng());
  for (auto& v : p.labels.labels) v = std::uint8_t(rng() % 5);
  return p;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("scasnet_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("crop offsets: 1500 / 400 / 100 gives a 5x5 grid") {
  auto o = crop_offsets(1500, 400, 100);
  CHECK(o == std::vector<std::size_t>{0, 300, 600, 900, 1100});
  CHECK(crop_offsets(64, 64, 16) == std::vector<std::size_t>{0});
  CHECK(crop_offsets(128, 64, 16) == std::vector<std::size_t>{0, 48, 64});
  CHECK_THROWS_AS(crop_offsets(100, 40, 40), ConfigError);
  CHECK_THROWS_AS(crop_offsets(100, 120, 0), ConfigError);

  Image img(1500, 1500);
  LabelMap lm(1500, 1500);
  CHECK(crop_patches(img, lm, 400, 100).size() == 25);
  CHECK(crop_patches(Image(64, 64), LabelMap(64, 64), 64, 10).size() == 1);
}

TEST_CASE("crop footprints cover every pixel and carry the source pixels") {
  for (auto [h, w, p, o] : {std::array<std::size_t, 4>{128, 128, 64, 16}, {97, 150, 40, 7}, {50, 50, 13, 12}}) {
    Scene s = generate_scene({.height = h, .width = w, .seed = h + w});
    auto patches = crop_patches(s.image, s.labels, p, o, "src");
    std::vector<int> covered(h * w, 0);
    for (const auto& pt : patches) {
      CHECK(pt.image.height == p);
      CHECK(pt.labels.width == p);
      CHECK(pt.source == "src");
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x) {
          ++covered[(pt.y + y) * w + pt.x + x];
          CHECK(pt.labels.at(y, x) == s.labels.at(pt.y + y, pt.x + x));
          CHECK(pt.image.at(y, x, 1) == s.image.at(pt.y + y, pt.x + x, 1));
        }
    }
    for (int c : covered) CHECK(c >= 1);
  }
}

TEST_CASE("augmentation: six variants, closure, commutation, histogram invariance") {
  std::vector<Patch> ps{random_patch(7, 1), random_patch(7, 2), random_patch(7, 3)};
  auto aug = augment(ps);
  REQUIRE(aug.size() == 18);
  const char* names[] = {"id", "hflip", "vflip", "rot90", "rot180", "rot270"};
  for (std::size_t i = 0; i < aug.size(); ++i) {
    CHECK(aug[i].augmentation == names[i % 6]);
    CHECK(histogram(aug[i].labels) == histogram(ps[i / 6].labels));
  }

  const Patch& p = ps[0];
  Image img = p.image;
  LabelMap lm = p.labels;
  for (int i = 0; i < 4; ++i) {
    img = transform(img, Augmentation::Rot90);
    lm = transform(lm, Augmentation::Rot90);
  }
  CHECK(img == p.image);
  CHECK(lm == p.labels);
  CHECK(transform(transform(p.image, Augmentation::Rot90), Augmentation::Rot270) == p.image);
  CHECK(transform(transform(p.image, Augmentation::Rot90), Augmentation::Rot90) ==
        transform(p.image, Augmentation::Rot180));
  CHECK(transform(transform(p.labels, Augmentation::HFlip), Augmentation::VFlip) ==
        transform(p.labels, Augmentation::Rot180));

  // Counterclockwise: the top-right corner moves to the top-left.
  CHECK(transform(p.labels, Augmentation::Rot90).at(0, 0) == p.labels.at(0, 6));
  CHECK(transform(p.labels, Augmentation::HFlip).at(2, 1) == p.labels.at(2, 5));
  CHECK(transform(p.labels, Augmentation::VFlip).at(2, 1) == p.labels.at(4, 1));

  // Image and labels move together: relabel by pixel colour and compare after transforming.
  for (auto a : kAugmentations) {
    Image ti = transform(p.image, a);
    LabelMap tl = transform(p.labels, a);
    LabelMap from_image(7, 7);
    for (std::size_t y = 0; y < 7; ++y)
      for (std::size_t x = 0; x < 7; ++x)
        for (std::size_t sy = 0; sy < 7; ++sy)
          for (std::size_t sx = 0; sx < 7; ++sx)
            if (p.image.at(sy, sx, 0) == ti.at(y, x, 0) && p.image.at(sy, sx, 1) == ti.at(y, x, 1) &&
                p.image.at(sy, sx, 2) == ti.at(y, x, 2))
              from_image.at(y, x) = p.labels.at(sy, sx);
    CHECK(from_image == tl);
  }

  Patch rect{Image(4, 6), LabelMap(4, 6), "", 0, 0, "id"};
  CHECK_THROWS_AS(augment({rect}), ShapeError);
  CHECK_NOTHROW(transform(rect.image, Augmentation::HFlip));
}

TEST_CASE("scene generation: determinism, labels, classes") {
  SceneSpec spec{.seed = 17};
  Scene a = generate_scene(spec), b = generate_scene(spec);
  CHECK(a.image == b.image);
  CHECK(a.labels == b.labels);
  spec.seed = 18;
  CHECK_FALSE(generate_scene(spec).image == a.image);

  for (auto v : a.labels.labels) CHECK(v < kSceneClasses);
  CHECK(a.labels.size() == 128 * 128);

  SceneSpec empty{.buildings = {0, 0}, .roads = {0, 0}, .cars = {0, 0}, .vegetation = {0, 0}, .lots = {0, 0}, .seed = 3};
  Scene e = generate_scene(empty);
  for (auto v : e.labels.labels) CHECK(v == Background);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto h = histogram(generate_scene({.seed = seed}).labels);
    INFO("seed " << seed);
    for (std::size_t k = 0; k < kSceneClasses; ++k) CHECK(h[k] > 0);
  }
}

TEST_CASE("network input scaling") {
  Image img(1, 2);
  img.rgb = {0, 255, 51, 102, 0, 255};
  Tensor t = to_network_input(img);
  CHECK(t.shape() == Shape{1, 3, 1, 2});
  CHECK(t.at(0, 0, 0, 0) == -1);
  CHECK(t.at(0, 1, 0, 0) == 1);
  CHECK(t.at(0, 0, 0, 1) == doctest::Approx(-0.2).epsilon(1e-14));
}

TEST_CASE("ppm and pgm round trips and malformed files") {
  auto dir = temp_dir("pnm");
  std::filesystem::create_directories(dir);
  Patch p = random_patch(9, 4);
  write_ppm(dir / "a.ppm", p.image);
  write_pgm(dir / "a.pgm", p.labels);
  CHECK(read_ppm(dir / "a.ppm") == p.image);
  CHECK(read_pgm(dir / "a.pgm") == p.labels);
  CHECK(slurp(dir / "a.pgm").rfind("P5\n9 9\n255\n", 0) == 0);
  CHECK_THROWS_AS(read_ppm(dir / "a.pgm"), DataError);
  CHECK_THROWS_AS(read_ppm(dir / "missing.ppm"), DataError);
  std::ofstream(dir / "short.pgm", std::ios::binary) << "P5\n4 4\n255\nabc";
  CHECK_THROWS_AS(read_pgm(dir / "short.pgm"), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("data config validation and json") {
  DataConfig c;
  CHECK_NOTHROW(validate(c));
  auto bad = c;
  bad.train_scenes = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.overlap = 64;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.patch = 200;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.cars = {3, 1};
  CHECK_THROWS_AS(validate(bad), ConfigError);
  c.seed = 5;
  c.cars = {1, 9};
  CHECK(data_config_from_json(to_json(c), DataConfig{}) == c);
  CHECK_THROWS_AS(data_config_from_json({{"scenes", 3}}, c), ConfigError);
  CHECK_THROWS_AS(data_config_from_json({{"cars", 3}}, c), ConfigError);
  CHECK(scene_spec(c, 0, 1).seed != scene_spec(c, 1, 1).seed);
  CHECK(scene_spec(c, 0, 1).seed != scene_spec(c, 0, 2).seed);
}

TEST_CASE("dataset generation, manifest and sample loading") {
  DataConfig c;
  c.train_scenes = 2;
  c.val_scenes = 1;
  c.test_scenes = 1;
  c.seed = 8;
  auto dir = temp_dir("dataset");
  auto m = generate_dataset(c, dir);
  // 128 / 64 / 16 gives a 3x3 grid; six variants each.
  CHECK(m.train_patches.size() == 2 * 9 * 6);
  CHECK(m.train_scenes.size() == 2);
  CHECK(m.val_scenes.size() == 1);
  CHECK(m.test_scenes.size() == 1);

  auto loaded = load_manifest(dir);
  CHECK(loaded.config == c);
  CHECK(loaded.class_names == scene_class_names());
  REQUIRE(loaded.train_patches.size() == m.train_patches.size());
  CHECK(loaded.train_patches[7].augmentation == m.train_patches[7].augmentation);
  CHECK(loaded.test_scenes[0].image == "scenes/test_000.ppm");

  auto samples = load_samples(loaded, {loaded.train_patches[0], loaded.test_scenes[0]});
  CHECK(samples[0].image.shape() == Shape{1, 3, 64, 64});
  CHECK(samples[1].labels.height == 128);
  Scene test0 = generate_scene(scene_spec(c, 2, 0));
  CHECK(samples[1].labels == test0.labels);

  auto again = temp_dir("dataset2");
  generate_dataset(c, again);
  CHECK(slurp(dir / "manifest.json") == slurp(again / "manifest.json"));
  CHECK(slurp(dir / m.train_patches[20].image) == slurp(again / m.train_patches[20].image));

  std::filesystem::remove(dir / "manifest.json");
  CHECK_THROWS_AS(load_manifest(dir), DataError);
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(again);
}
