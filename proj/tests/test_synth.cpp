#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tsfn/synth.hpp"

using namespace tsfn;
namespace fs = std::filesystem;

namespace {

SynthConfig small_synth() {
  SynthConfig s;
  s.t = 6;
  s.h = 16;
  s.w = 16;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("render_gesture is deterministic per seed") {
  SynthConfig s = small_synth();
  VideoClip a = render_gesture(GestureClass::beckoning, 5, s);
  VideoClip b = render_gesture(GestureClass::beckoning, 5, s);
  CHECK(a.values == b.values);
  VideoClip c = render_gesture(GestureClass::beckoning, 6, s);
  CHECK(a.values != c.values);
  for (double v : a.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("distinct gestures render visibly different clips") {
  SynthConfig s = small_synth();
  VideoClip stop = render_gesture(GestureClass::stop, 5, s);
  VideoClip null = render_gesture(GestureClass::null_gesture, 5, s);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < stop.values.size(); ++i)
    if (std::abs(stop.values[i] - null.values[i]) > 0.1) ++differing;
  // at least 1% of the pixel channels move substantially
  CHECK(differing * 100 >= stop.values.size());
}

TEST_CASE("degrade rejects distances outside the working range") {
  SynthConfig s = small_synth();
  VideoClip clip = render_gesture(GestureClass::stop, 1, s);
  CHECK_THROWS_AS(degrade(clip, 3.9, 1, s), InvalidInput);
  CHECK_THROWS_AS(degrade(clip, 28.1, 1, s), InvalidInput);
  CHECK_NOTHROW(degrade(clip, 4.0, 1, s));
  CHECK_NOTHROW(degrade(clip, 28.0, 1, s));
}

TEST_CASE("degrade at the nearest distance is the identity") {
  SynthConfig s = small_synth();
  VideoClip clip = render_gesture(GestureClass::pointing, 2, s);
  VideoClip d = degrade(clip, 4.0, 9, s);
  CHECK(d.values == clip.values);
}

TEST_CASE("degrade is deterministic per seed") {
  SynthConfig s = small_synth();
  VideoClip clip = render_gesture(GestureClass::thumbs_up, 3, s);
  VideoClip a = degrade(clip, 20.0, 7, s);
  VideoClip b = degrade(clip, 20.0, 7, s);
  CHECK(a.values == b.values);
  VideoClip c = degrade(clip, 20.0, 8, s);
  CHECK(a.values != c.values);
}

TEST_CASE("sharpness decays monotonically with distance") {
  SynthConfig s;
  s.t = 4;
  s.h = 32;
  s.w = 32;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    VideoClip clip = render_gesture(GestureClass::stop, seed, s);
    double prev = 1e9;
    for (int d = 4; d <= 28; d += 4) {
      const double sharp = sharpness_metric(degrade(clip, d, seed, s));
      CHECK(sharp <= prev + 1e-12);
      prev = sharp;
    }
  }
}

TEST_CASE("laplacian sharpness hand case") {
  VideoClip clip(1, 3, 3);
  clip.at(0, 1, 1, 0) = 1.0;  // single bright center pixel, channel 0
  // one interior pixel, |lap| = 4 on channel 0 and 0 elsewhere -> mean 4/3
  CHECK(std::abs(sharpness_metric(clip) - 4.0 / 3.0) <= 1e-15);
  VideoClip flat(2, 5, 5);
  for (auto& v : flat.values) v = 0.37;
  CHECK(sharpness_metric(flat) == 0.0);
}

TEST_CASE("clip file round trip quantizes to 8 bits") {
  SynthConfig s = small_synth();
  VideoClip clip = render_gesture(GestureClass::thumbs_down, 4, s);
  TempDir dir("tsfn_clip_io_test");
  fs::create_directories(dir.path);
  const std::string path = (dir.path / "clip.tsfv").string();
  save_clip_file(path, clip);
  VideoClip back = load_clip_file(path);
  REQUIRE(back.frames == clip.frames);
  REQUIRE(back.height == clip.height);
  REQUIRE(back.width == clip.width);
  for (std::size_t i = 0; i < clip.values.size(); ++i) {
    CHECK(std::abs(back.values[i] - clip.values[i]) <= 0.5 / 255.0 + 1e-12);
    // stored values sit exactly on the 8-bit lattice
    const double scaled = back.values[i] * 255.0;
    CHECK(std::abs(scaled - std::lround(scaled)) <= 1e-9);
  }
}

TEST_CASE("dataset generation: counts, split and manifest consistency") {
  SynthConfig s;
  s.t = 4;
  s.h = 8;
  s.w = 8;
  s.samples_per_meter = 2;
  s.distance_grid = {4, 16, 28};
  TempDir dir("tsfn_dataset_test");
  Manifest m = generate_dataset(s, dir.path.string());

  CHECK(m.samples.size() == kClassCount * 3 * 2);
  // 2 per cell with test_count 1: half train, half test
  CHECK(m.rows("train").size() == kClassCount * 3);
  CHECK(m.rows("test").size() == kClassCount * 3);
  CHECK(m.rows("").size() == m.samples.size());

  for (const auto& r : m.samples) {
    CHECK(fs::exists(dir.path / r.file));
    Sample sample = load_sample(m, r);
    CHECK(sample.clip.frames == s.t);
    CHECK(sample.clip.height == s.h);
    CHECK(static_cast<int>(sample.label) == r.class_code);
    CHECK(sample.seed == r.seed);
  }

  // reload from disk agrees with the in-memory manifest
  Manifest re = load_manifest((dir.path / "manifest.json").string());
  REQUIRE(re.samples.size() == m.samples.size());
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    CHECK(re.samples[i].file == m.samples[i].file);
    CHECK(re.samples[i].split == m.samples[i].split);
    CHECK(re.samples[i].seed == m.samples[i].seed);
  }

  // refuses to clobber without the overwrite flag
  CHECK_THROWS_AS(generate_dataset(s, dir.path.string()), IoError);
}

TEST_CASE("dataset regeneration is byte identical") {
  SynthConfig s;
  s.t = 4;
  s.h = 8;
  s.w = 8;
  s.samples_per_meter = 1;
  s.distance_grid = {4, 28};
  TempDir a("tsfn_regen_a"), b("tsfn_regen_b");
  generate_dataset(s, a.path.string());
  generate_dataset(s, b.path.string());
  CHECK(slurp(a.path / "manifest.json") == slurp(b.path / "manifest.json"));
  for (const auto& entry : fs::directory_iterator(a.path)) {
    const fs::path other = b.path / entry.path().filename();
    REQUIRE(fs::exists(other));
    CHECK(slurp(entry.path()) == slurp(other));
  }
}

TEST_CASE("classes stay separable by nearest centroid at close range") {
  SynthConfig s;
  s.t = 6;
  s.h = 32;
  s.w = 32;
  const std::size_t train_seeds = 3;

  // time-averaged flattened image per render
  auto feature = [&](GestureClass g, std::uint64_t seed) {
    VideoClip c = render_gesture(g, seed, s);
    std::vector<double> f(s.h * s.w * 3, 0.0);
    for (std::size_t t = 0; t < s.t; ++t)
      for (std::size_t i = 0; i < f.size(); ++i) f[i] += c.values[t * f.size() + i] / s.t;
    return f;
  };

  std::vector<std::vector<double>> centroids(kClassCount);
  for (std::size_t c = 0; c < kClassCount; ++c) {
    centroids[c].assign(s.h * s.w * 3, 0.0);
    for (std::uint64_t seed = 0; seed < train_seeds; ++seed) {
      auto f = feature(static_cast<GestureClass>(c), seed);
      for (std::size_t i = 0; i < f.size(); ++i) centroids[c][i] += f[i] / train_seeds;
    }
  }

  std::size_t correct = 0;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    auto f = feature(static_cast<GestureClass>(c), 100 + c);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < kClassCount; ++k) {
      double d = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) {
        const double e = f[i] - centroids[k][i];
        d += e * e;
      }
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (best == c) ++correct;
  }
  CHECK(correct >= 5);
}

TEST_CASE("synth config json round trip") {
  SynthConfig s;
  s.t = 12;
  s.samples_per_meter = 7;
  s.noise_scale = 0.11;
  s.distance_grid = {4, 10, 28};
  nlohmann::json j;
  synth_config_to_json(j, s);
  SynthConfig back = synth_config_from_json(j);
  CHECK(back.t == s.t);
  CHECK(back.samples_per_meter == s.samples_per_meter);
  CHECK(back.noise_scale == s.noise_scale);
  CHECK(back.distance_grid == s.distance_grid);

  nlohmann::json bad = j;
  bad["distance_grid"] = {2};
  CHECK_THROWS_AS(synth_config_from_json(bad), ConfigError);
}
