#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "tsfn/data.hpp"
#include "tsfn/rng.hpp"
#include "tsfn/serialize.hpp"

#include <json.hpp>

namespace tsfn {

struct SynthConfig {
  std::size_t t = 16, h = 32, w = 32;
  std::size_t samples_per_meter = 15;
  std::vector<int> distance_grid = default_grid();
  std::uint64_t seed = 7;
  // degradation coefficients, chosen so the sharpness metric decreases
  // strictly along the 4..28 m grid for every gesture/seed combination
  double blur_scale = 4.0;
  double noise_scale = 0.001;
  double downsample_floor = 0.5;
  double clip_duration_seconds = 4.0;

  double fps() const { return static_cast<double>(t) / clip_duration_seconds; }

  static std::vector<int> default_grid() {
    std::vector<int> g(25);
    std::iota(g.begin(), g.end(), 4);
    return g;
  }

  void validate() const {
    if (t == 0 || h == 0 || w == 0 || samples_per_meter == 0)
      throw ConfigError("synth config counts must be positive");
    if (blur_scale < 0 || noise_scale < 0 || downsample_floor < 0)
      throw ConfigError("degradation scales must be non-negative");
    for (int d : distance_grid)
      if (d < kMinDistance || d > kMaxDistance)
        throw ConfigError("distance grid entry out of [4,28]: " + std::to_string(d));
  }
};

inline void synth_config_to_json(nlohmann::json& j, const SynthConfig& c) {
  j["t"] = c.t;
  j["h"] = c.h;
  j["w"] = c.w;
  j["samples_per_meter"] = c.samples_per_meter;
  j["distance_grid"] = c.distance_grid;
  j["seed"] = c.seed;
  j["blur_scale"] = c.blur_scale;
  j["noise_scale"] = c.noise_scale;
  j["downsample_floor"] = c.downsample_floor;
  j["clip_duration_seconds"] = c.clip_duration_seconds;
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  if (j.contains("t")) c.t = j.at("t").get<std::size_t>();
  if (j.contains("h")) c.h = j.at("h").get<std::size_t>();
  if (j.contains("w")) c.w = j.at("w").get<std::size_t>();
  if (j.contains("samples_per_meter")) c.samples_per_meter = j.at("samples_per_meter").get<std::size_t>();
  if (j.contains("distance_grid")) c.distance_grid = j.at("distance_grid").get<std::vector<int>>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("blur_scale")) c.blur_scale = j.at("blur_scale").get<double>();
  if (j.contains("noise_scale")) c.noise_scale = j.at("noise_scale").get<double>();
  if (j.contains("downsample_floor")) c.downsample_floor = j.at("downsample_floor").get<double>();
  if (j.contains("clip_duration_seconds"))
    c.clip_duration_seconds = j.at("clip_duration_seconds").get<double>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Stick-figure renderer
// ---------------------------------------------------------------------------

namespace render_detail {

struct Color {
  double r, g, b;
};

inline void paint(VideoClip& clip, std::size_t t, double px, double py, double coverage,
                  const Color& c) {
  const long x = static_cast<long>(px), y = static_cast<long>(py);
  if (x < 0 || y < 0 || x >= static_cast<long>(clip.width) || y >= static_cast<long>(clip.height))
    return;
  auto& r0 = clip.at(t, y, x, 0);
  auto& g0 = clip.at(t, y, x, 1);
  auto& b0 = clip.at(t, y, x, 2);
  r0 = std::max(r0, c.r * coverage);
  g0 = std::max(g0, c.g * coverage);
  b0 = std::max(b0, c.b * coverage);
}

/// Thick anti-aliased segment via per-pixel distance to the segment.
inline void draw_segment(VideoClip& clip, std::size_t t, double x0, double y0, double x1,
                         double y1, double thick, const Color& c) {
  const double lo_x = std::min(x0, x1) - thick - 1, hi_x = std::max(x0, x1) + thick + 1;
  const double lo_y = std::min(y0, y1) - thick - 1, hi_y = std::max(y0, y1) + thick + 1;
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  for (long y = std::max(0L, static_cast<long>(lo_y));
       y <= std::min(static_cast<long>(clip.height) - 1, static_cast<long>(hi_y)); ++y) {
    for (long x = std::max(0L, static_cast<long>(lo_x));
         x <= std::min(static_cast<long>(clip.width) - 1, static_cast<long>(hi_x)); ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double u = 0.0;
      if (len2 > 0) u = std::clamp(((px - x0) * dx + (py - y0) * dy) / len2, 0.0, 1.0);
      const double ex = px - (x0 + u * dx), ey = py - (y0 + u * dy);
      const double dist = std::sqrt(ex * ex + ey * ey);
      // quarter-pixel ramp: near-field frames stay the sharpest point of the
      // degradation chain even after nearest-neighbor resampling
      const double cov = std::clamp(4.0 * (thick + 0.125 - dist), 0.0, 1.0);
      if (cov > 0) paint(clip, t, px, py, cov, c);
    }
  }
}

inline void draw_blob(VideoClip& clip, std::size_t t, double cx, double cy, double radius,
                      const Color& c) {
  draw_segment(clip, t, cx, cy, cx, cy, radius, c);
}

// direction from an angle measured off the downward vertical;
// a = 0 points down, pi/2 points right, pi points up
inline double dir_x(double a) { return std::sin(a); }
inline double dir_y(double a) { return std::cos(a); }

}  // namespace render_detail

/// Renders one gesture clip: torso, head and a jointed right arm executing a
/// class-specific joint-angle trajectory, over a plain background.
/// Deterministic per (gesture, seed, config).
inline VideoClip render_gesture(GestureClass gesture, std::uint64_t seed,
                                const SynthConfig& cfg) {
  using namespace render_detail;
  cfg.validate();
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(gesture) + 11));

  const double S = static_cast<double>(cfg.h);
  const double bg = rng.uniform(0.04, 0.22);
  const double jx = rng.uniform(-0.05, 0.05) * S;  // anchor jitter
  const double jy = rng.uniform(-0.03, 0.03) * S;
  const double amp_jit = rng.uniform(0.85, 1.15);
  const double phase = rng.uniform(0.0, 6.28318530717958647692);
  const double ang_jit = rng.uniform(-0.07, 0.07);

  const double hip_x = 0.42 * S + jx, hip_y = 0.88 * S + jy;
  const double sho_x = 0.42 * S + jx, sho_y = 0.42 * S + jy;
  const double head_y = 0.30 * S + jy;
  const double lu = 0.22 * S, lf = 0.22 * S;

  const Color body{0.85, 0.85, 0.80};
  const Color marker{0.98, 0.25, 0.20};

  VideoClip clip(cfg.t, cfg.h, cfg.w);
  std::fill(clip.values.begin(), clip.values.end(), bg);

  const double pi = 3.14159265358979323846;
  for (std::size_t t = 0; t < cfg.t; ++t) {
    const double tau = (cfg.t > 1) ? static_cast<double>(t) / (cfg.t - 1) : 0.0;
    double au = 0.0, af = 0.0;       // absolute limb angles off the down vertical
    double marker_r = 0.075 * S;     // hand marker radius
    double marker_off = 0.0;         // marker offset along the forearm direction
    switch (gesture) {
      case GestureClass::beckoning: {
        const double osc = 0.5 + 0.5 * std::sin(2.0 * pi * 2.0 * tau + phase);
        au = pi * 0.50 + ang_jit;
        af = pi * (0.50 + 0.38 * amp_jit * osc) + ang_jit;
        break;
      }
      case GestureClass::stop:
        au = pi * 0.93 + ang_jit;
        af = pi * 0.97 + ang_jit;
        marker_r = 0.11 * S;  // broad palm
        break;
      case GestureClass::null_gesture: {
        const double sway = 0.05 * amp_jit * std::sin(2.0 * pi * tau + phase);
        au = 0.10 + ang_jit + sway;
        af = 0.08 + ang_jit + sway;
        break;
      }
      case GestureClass::thumbs_up:
        au = pi * 0.42 + ang_jit;
        af = pi * 0.96 + ang_jit;
        marker_off = 1.0;  // thumb above the wrist
        break;
      case GestureClass::pointing:
        au = pi * 0.52 + ang_jit;
        af = pi * 0.50 + ang_jit;
        marker_off = 1.0;
        break;
      case GestureClass::thumbs_down:
        au = pi * 0.58 + ang_jit;
        af = 0.04 + ang_jit;
        marker_off = 1.0;  // thumb below the wrist (forearm points down)
        break;
    }

    // torso and head; kept wide so even the coarsest resampling grid at the
    // far end of the distance range still lands several samples on the body
    draw_segment(clip, t, hip_x, hip_y, sho_x, sho_y, 0.15 * S, body);
    draw_blob(clip, t, sho_x, head_y, 0.11 * S, body);

    // y grows downward; a=0 points down, a=pi points up, a=pi/2 points right
    const double elbow_x = sho_x + lu * dir_x(au);
    const double elbow_y = sho_y + lu * dir_y(au);
    const double wrist_x = elbow_x + lf * dir_x(af);
    const double wrist_y = elbow_y + lf * dir_y(af);

    draw_segment(clip, t, sho_x, sho_y, elbow_x, elbow_y, 0.065 * S, body);
    draw_segment(clip, t, elbow_x, elbow_y, wrist_x, wrist_y, 0.055 * S, body);

    const double mx = wrist_x + marker_off * marker_r * 1.6 * dir_x(af);
    const double my = wrist_y + marker_off * marker_r * 1.6 * dir_y(af);
    draw_blob(clip, t, mx, my, marker_r, marker);
  }

  for (double& v : clip.values) v = std::clamp(v, 0.0, 1.0);
  return clip;
}

// ---------------------------------------------------------------------------
// Distance-indexed degradation
// ---------------------------------------------------------------------------

/// Applies the distance degradation chain: resolution reduction (nearest
/// down/up), Gaussian blur, additive Gaussian noise, and temporal motion
/// blur beyond 16 m. Deterministic per seed.
inline VideoClip degrade(const VideoClip& clip, double distance, std::uint64_t seed,
                         const SynthConfig& cfg) {
  if (distance < kMinDistance || distance > kMaxDistance)
    throw InvalidInput("degrade: distance " + std::to_string(distance) + " outside [4,28] m");
  Rng rng(mix_seed(seed, 0x5eedfacedeadbeefULL));
  VideoClip out = clip;
  const std::size_t T = clip.frames, H = clip.height, W = clip.width;
  const double severity = (distance - kMinDistance) / (kMaxDistance - kMinDistance);

  // 1) resolution reduction: nearest-neighbor downsample then upsample back
  const double factor = std::max(1.0, distance / 4.0 * cfg.downsample_floor);
  if (factor > 1.0 + 1e-12) {
    const std::size_t h2 = std::max<std::size_t>(1, static_cast<std::size_t>(H / factor));
    const std::size_t w2 = std::max<std::size_t>(1, static_cast<std::size_t>(W / factor));
    VideoClip tmp = out;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const std::size_t yy = std::min(h2 - 1, y * h2 / H);
          const std::size_t xx = std::min(w2 - 1, x * w2 / W);
          const std::size_t ys = std::min(H - 1, (yy * H + H / 2) / h2);
          const std::size_t xs = std::min(W - 1, (xx * W + W / 2) / w2);
          for (std::size_t c = 0; c < 3; ++c) out.at(t, y, x, c) = tmp.at(t, ys, xs, c);
        }
  }

  // 2) separable Gaussian blur
  const double sigma = cfg.blur_scale * severity;
  if (sigma > 1e-12) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
      sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    VideoClip tmp = out;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
          for (std::size_t c = 0; c < 3; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
              const long xi = std::clamp<long>(static_cast<long>(x) + i, 0, W - 1);
              acc += k[i + radius] * out.at(t, y, xi, c);
            }
            tmp.at(t, y, x, c) = acc;
          }
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
          for (std::size_t c = 0; c < 3; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
              const long yi = std::clamp<long>(static_cast<long>(y) + i, 0, H - 1);
              acc += k[i + radius] * tmp.at(t, yi, x, c);
            }
            out.at(t, y, x, c) = acc;
          }
  }

  // 3) additive zero-mean Gaussian pixel noise
  const double noise_std = cfg.noise_scale * severity;
  if (noise_std > 1e-12)
    for (double& v : out.values) v = std::clamp(v + noise_std * rng.gaussian(), 0.0, 1.0);

  // 4) temporal motion blur beyond 16 m
  if (distance > 16.0) {
    const std::size_t frame_sz = H * W * 3;
    for (std::size_t t = 1; t < T; ++t)
      for (std::size_t i = 0; i < frame_sz; ++i)
        out.values[t * frame_sz + i] =
            0.8 * out.values[t * frame_sz + i] + 0.2 * out.values[(t - 1) * frame_sz + i];
  }

  for (double& v : out.values) v = std::clamp(v, 0.0, 1.0);
  return out;
}

/// Mean absolute 4-neighbor Laplacian over all frames; 0 for constant images.
inline double sharpness_metric(const VideoClip& clip) {
  const std::size_t T = clip.frames, H = clip.height, W = clip.width;
  if (H < 3 || W < 3) return 0.0;
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t y = 1; y + 1 < H; ++y)
      for (std::size_t x = 1; x + 1 < W; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          const double lap = clip.at(t, y - 1, x, c) + clip.at(t, y + 1, x, c) +
                             clip.at(t, y, x - 1, c) + clip.at(t, y, x + 1, c) -
                             4.0 * clip.at(t, y, x, c);
          acc += std::abs(lap);
          ++n;
        }
  return n ? acc / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------------------
// Clip files and dataset manifest
// ---------------------------------------------------------------------------

// Clip file: magic "TSFV", T,H,W (u32 LE), then T*H*W*3 bytes of
// round(value*255).

inline void write_clip(std::ostream& os, const VideoClip& clip) {
  os.write("TSFV", 4);
  write_u32(os, static_cast<std::uint32_t>(clip.frames));
  write_u32(os, static_cast<std::uint32_t>(clip.height));
  write_u32(os, static_cast<std::uint32_t>(clip.width));
  std::vector<unsigned char> bytes(clip.values.size());
  for (std::size_t i = 0; i < clip.values.size(); ++i)
    bytes[i] = static_cast<unsigned char>(
        std::lround(std::clamp(clip.values[i], 0.0, 1.0) * 255.0));
  os.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (!os) throw IoError("clip write failed");
}

inline VideoClip read_clip(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "TSFV") throw IoError("bad clip magic, expected TSFV");
  const std::size_t t = read_u32(is), h = read_u32(is), w = read_u32(is);
  VideoClip clip(t, h, w);
  std::vector<unsigned char> bytes(clip.values.size());
  is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!is) throw IoError("truncated clip file");
  for (std::size_t i = 0; i < bytes.size(); ++i)
    clip.values[i] = static_cast<double>(bytes[i]) / 255.0;
  return clip;
}

inline void save_clip_file(const std::string& path, const VideoClip& clip) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open clip for writing: " + path);
  write_clip(os, clip);
}

inline VideoClip load_clip_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open clip: " + path);
  return read_clip(is);
}

struct ManifestRow {
  std::string file;
  int class_code = 0;
  double distance_m = kMinDistance;
  std::string split;  // "train" | "test"
  std::uint64_t seed = 0;
};

struct Manifest {
  SynthConfig config;
  std::vector<ManifestRow> samples;
  std::string dir;  // directory containing the clip files

  std::vector<const ManifestRow*> rows(const std::string& split) const {
    std::vector<const ManifestRow*> out;
    for (const auto& r : samples)
      if (split.empty() || r.split == split) out.push_back(&r);
    return out;
  }
};

inline std::uint64_t sample_seed(const SynthConfig& cfg, int class_code, int distance,
                                 std::size_t index) {
  return mix_seed(cfg.seed, static_cast<std::uint64_t>(class_code) * 1000003ULL +
                                static_cast<std::uint64_t>(distance) * 101ULL + index);
}

/// Renders, degrades and writes every (class x distance x index) cell, plus
/// a manifest with a fixed train/test split. The whole dataset is a pure
/// function of the config.
inline Manifest generate_dataset(const SynthConfig& cfg, const std::string& out_dir,
                                 bool overwrite = false) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const fs::path manifest_path = fs::path(out_dir) / "manifest.json";
  if (fs::exists(manifest_path) && !overwrite)
    throw IoError("manifest already exists (pass overwrite to replace): " +
                  manifest_path.string());

  // last `test_count` indices of every (class, distance) cell go to test
  const std::size_t test_count =
      std::max<std::size_t>(1, cfg.samples_per_meter * 2 / 15);

  Manifest m;
  m.config = cfg;
  m.dir = out_dir;
  for (int cls = 0; cls < static_cast<int>(kClassCount); ++cls) {
    for (int dist : cfg.distance_grid) {
      for (std::size_t i = 0; i < cfg.samples_per_meter; ++i) {
        const std::uint64_t s = sample_seed(cfg, cls, dist, i);
        VideoClip clip = render_gesture(gesture_from_code(cls), s, cfg);
        clip = degrade(clip, static_cast<double>(dist), mix_seed(s, 2), cfg);
        ManifestRow row;
        row.file = "clip_c" + std::to_string(cls) + "_d" + std::to_string(dist) + "_i" +
                   std::to_string(i) + ".tsfv";
        row.class_code = cls;
        row.distance_m = static_cast<double>(dist);
        row.split = (i + test_count >= cfg.samples_per_meter) ? "test" : "train";
        row.seed = s;
        save_clip_file((fs::path(out_dir) / row.file).string(), clip);
        m.samples.push_back(std::move(row));
      }
    }
  }

  nlohmann::json j;
  synth_config_to_json(j["config"], cfg);
  j["samples"] = nlohmann::json::array();
  for (const auto& r : m.samples)
    j["samples"].push_back({{"file", r.file},
                            {"class", r.class_code},
                            {"distance_m", r.distance_m},
                            {"split", r.split},
                            {"seed", r.seed}});
  std::ofstream os(manifest_path);
  if (!os) throw IoError("cannot write manifest: " + manifest_path.string());
  os << j.dump(2) << "\n";
  return m;
}

inline Manifest load_manifest(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw IoError("cannot open manifest: " + manifest_path);
  nlohmann::json j;
  is >> j;
  Manifest m;
  m.config = synth_config_from_json(j.at("config"));
  m.dir = std::filesystem::path(manifest_path).parent_path().string();
  for (const auto& e : j.at("samples")) {
    ManifestRow r;
    r.file = e.at("file").get<std::string>();
    r.class_code = e.at("class").get<int>();
    r.distance_m = e.at("distance_m").get<double>();
    r.split = e.at("split").get<std::string>();
    r.seed = e.at("seed").get<std::uint64_t>();
    m.samples.push_back(std::move(r));
  }
  return m;
}

inline Sample load_sample(const Manifest& m, const ManifestRow& row) {
  Sample s;
  s.clip = load_clip_file((std::filesystem::path(m.dir) / row.file).string());
  s.label = gesture_from_code(row.class_code);
  s.distance = row.distance_m;
  s.seed = row.seed;
  return s;
}

}  // namespace tsfn
