#pragma once

#include <cstdint>
#include <fstream>
#include <vector>

#include "tsfn/autograd.hpp"
#include "tsfn/data.hpp"
#include "tsfn/rng.hpp"
#include "tsfn/serialize.hpp"

namespace tsfn {

enum class Ablation { full, tcn_only, r2plus1d_only };

struct ModelConfig {
  std::size_t frames = 16, height = 32, width = 32;
  std::vector<std::size_t> encoder_channels = {16};  // linear per-frame 2D encoder
  std::size_t encoder_stride = 2;
  std::vector<std::size_t> tcn_channels = {32, 32, 32};  // dilated temporal stack
  std::vector<std::size_t> tcn_dilations = {1, 2, 4};
  std::size_t tcn_temporal_extent = 3;
  std::vector<std::size_t> r2_channels = {8, 16};
  std::vector<std::size_t> r2_mid_channels = {4, 8};  // factorization mid width
  std::size_t r2_temporal_extent = 3;
  std::size_t r2_spatial_extent = 3;
  std::size_t r2_spatial_stride = 2;
  std::vector<std::size_t> fc_widths = {64, 32, kClassCount};
  bool sigmoid_output = false;  // per-class sigmoid head instead of softmax
  std::uint64_t seed = 1;

  std::size_t tcn_feature_dim() const { return tcn_channels.back(); }
  std::size_t r2_feature_dim() const { return r2_channels.back(); }
  std::size_t fused_dim() const { return tcn_feature_dim() + r2_feature_dim(); }

  void validate() const {
    if (frames == 0 || height == 0 || width == 0) throw ConfigError("clip dims must be positive");
    if (encoder_channels.empty() || tcn_channels.empty() || r2_channels.empty())
      throw ConfigError("channel lists must be non-empty");
    if (tcn_dilations.size() != tcn_channels.size())
      throw ConfigError("tcn_dilations length must match tcn_channels");
    if (r2_mid_channels.size() != r2_channels.size())
      throw ConfigError("r2_mid_channels length must match r2_channels");
    if (fc_widths.size() != 3) throw ConfigError("fc_widths must have exactly 3 entries");
    if (fc_widths.back() != kClassCount)
      throw ConfigError("final fc width must equal class count " + std::to_string(kClassCount));
    for (std::size_t d : tcn_dilations)
      if (d * (tcn_temporal_extent - 1) + 1 > frames)
        throw ConfigError("dilation horizon exceeds frame count");
    if (r2_spatial_extent % 2 == 0) throw ConfigError("r2 spatial extent must be odd");
  }
};

/// Channels seen by both branches: centered RGB, normalized x/y coordinate
/// maps, and luminance-weighted coordinate maps. Both branches end in global
/// average pooling, which makes plain convolutional features
/// position-invariant — yet the classes differ mainly by limb position. The
/// lum*x / lum*y channels average to the brightness centroid, so pooled
/// features carry position at first order through the sigmoid stack;
/// centering keeps the sigmoids in their responsive range.
inline constexpr std::size_t kInputChannels = 7;

/// Builds the kInputChannels x T x H x W network input from a 3 x T x H x W
/// clip tensor: values shifted by -0.5, x and y maps over [-1, 1], then
/// centered-luminance * x and * y maps.
inline Tensor model_input(const Tensor& cthw) {
  if (cthw.rank() != 4 || cthw.extent(0) != 3)
    throw DimensionError("model_input expects a 3 x T x H x W tensor");
  const std::size_t T = cthw.extent(1), H = cthw.extent(2), W = cthw.extent(3);
  Tensor out(Shape{kInputChannels, T, H, W});
  const std::size_t plane = T * H * W;
  for (std::size_t i = 0; i < 3 * plane; ++i) out[i] = cthw[i] - 0.5;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t px = (t * H + y) * W + x;
        const double xn = W > 1 ? 2.0 * static_cast<double>(x) / (W - 1) - 1.0 : 0.0;
        const double yn = H > 1 ? 2.0 * static_cast<double>(y) / (H - 1) - 1.0 : 0.0;
        const double lum = (cthw[px] + cthw[plane + px] + cthw[2 * plane + px]) / 3.0 - 0.5;
        out[3 * plane + px] = xn;
        out[4 * plane + px] = yn;
        out[5 * plane + px] = lum * xn;
        out[6 * plane + px] = lum * yn;
      }
  return out;
}

struct ConvLayer {
  Tensor kernel, bias;
};

struct R2Block {
  Tensor t_kernel, t_bias, s_kernel, s_bias;
};

struct ModelParams {
  std::vector<ConvLayer> encoder;   // 2D: K x C x k x k
  std::vector<ConvLayer> temporal;  // 1D: K x C x d_t
  std::vector<R2Block> r2_blocks;
  std::vector<ConvLayer> fc;  // kernel holds the m x n weight matrix

  template <typename F>
  void for_each_tensor(F&& f) {
    for (auto& l : encoder) { f(l.kernel); f(l.bias); }
    for (auto& l : temporal) { f(l.kernel); f(l.bias); }
    for (auto& b : r2_blocks) { f(b.t_kernel); f(b.t_bias); f(b.s_kernel); f(b.s_bias); }
    for (auto& l : fc) { f(l.kernel); f(l.bias); }
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    for (const auto& l : encoder) { f(l.kernel); f(l.bias); }
    for (const auto& l : temporal) { f(l.kernel); f(l.bias); }
    for (const auto& b : r2_blocks) { f(b.t_kernel); f(b.t_bias); f(b.s_kernel); f(b.s_bias); }
    for (const auto& l : fc) { f(l.kernel); f(l.bias); }
  }

  std::size_t tensor_count() const {
    std::size_t n = 0;
    for_each_tensor([&n](const Tensor&) { ++n; });
    return n;
  }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for_each_tensor([&n](const Tensor& t) { n += t.size(); });
    return n;
  }
  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&ok](const Tensor& t) { ok = ok && t.all_finite(); });
    return ok;
  }
};

namespace detail {
inline Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng, double gain = 1.0) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

// sigmoid layers get 4x the fan-in bound: sigma'(0) = 1/4, so plain fan-in
// scaling contracts differences by ~4x per layer and the deep stack forgets
// its input before the classifier sees it
inline constexpr double kSigmoidGain = 4.0;
}  // namespace detail

/// Fan-in scaled uniform weights (bound sqrt(6 / fan_in), 4x for layers
/// feeding a sigmoid), zero biases. Deterministic per config seed.
inline ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  ModelParams p;
  std::size_t in_c = kInputChannels;
  for (std::size_t out_c : cfg.encoder_channels) {
    const std::size_t k = 3;
    p.encoder.push_back({detail::init_uniform({out_c, in_c, k, k}, in_c * k * k, rng),
                         Tensor(Shape{out_c})});
    in_c = out_c;
  }
  std::size_t t_in = cfg.encoder_channels.back();
  for (std::size_t i = 0; i < cfg.tcn_channels.size(); ++i) {
    const std::size_t out_c = cfg.tcn_channels[i];
    p.temporal.push_back(
        {detail::init_uniform({out_c, t_in, cfg.tcn_temporal_extent},
                              t_in * cfg.tcn_temporal_extent, rng, detail::kSigmoidGain),
         Tensor(Shape{out_c})});
    t_in = out_c;
  }
  std::size_t r_in = kInputChannels;
  for (std::size_t i = 0; i < cfg.r2_channels.size(); ++i) {
    const std::size_t mid = cfg.r2_mid_channels[i];
    const std::size_t out_c = cfg.r2_channels[i];
    const std::size_t dt = cfg.r2_temporal_extent, k = cfg.r2_spatial_extent;
    R2Block b;
    b.t_kernel = detail::init_uniform({mid, r_in, dt}, r_in * dt, rng, detail::kSigmoidGain);
    b.t_bias = Tensor(Shape{mid});
    b.s_kernel =
        detail::init_uniform({out_c, mid, k, k}, mid * k * k, rng, detail::kSigmoidGain);
    b.s_bias = Tensor(Shape{out_c});
    p.r2_blocks.push_back(std::move(b));
    r_in = out_c;
  }
  std::size_t f_in = cfg.fused_dim();
  for (std::size_t i = 0; i < cfg.fc_widths.size(); ++i) {
    const std::size_t w = cfg.fc_widths[i];
    // the final layer emits logits (no sigmoid), so it keeps the plain bound
    const double gain = i + 1 < cfg.fc_widths.size() ? detail::kSigmoidGain : 1.0;
    p.fc.push_back({detail::init_uniform({w, f_in}, f_in, rng, gain), Tensor(Shape{w})});
    f_in = w;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Tape-based forward
// ---------------------------------------------------------------------------

struct ParamValues {
  std::vector<std::pair<ad::Value, ad::Value>> encoder, temporal, fc;
  struct R2 {
    ad::Value tk, tb, sk, sb;
  };
  std::vector<R2> r2_blocks;

  /// Visits parameter value-nodes in checkpoint order.
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& [k, b] : encoder) { f(k); f(b); }
    for (const auto& [k, b] : temporal) { f(k); f(b); }
    for (const auto& r : r2_blocks) { f(r.tk); f(r.tb); f(r.sk); f(r.sb); }
    for (const auto& [k, b] : fc) { f(k); f(b); }
  }
};

inline ParamValues bind_params(ad::Tape& tape, const ModelParams& p, bool requires_grad = true) {
  ParamValues v;
  for (const auto& l : p.encoder)
    v.encoder.emplace_back(tape.leaf(l.kernel, requires_grad), tape.leaf(l.bias, requires_grad));
  for (const auto& l : p.temporal)
    v.temporal.emplace_back(tape.leaf(l.kernel, requires_grad), tape.leaf(l.bias, requires_grad));
  for (const auto& b : p.r2_blocks)
    v.r2_blocks.push_back({tape.leaf(b.t_kernel, requires_grad), tape.leaf(b.t_bias, requires_grad),
                           tape.leaf(b.s_kernel, requires_grad),
                           tape.leaf(b.s_bias, requires_grad)});
  for (const auto& l : p.fc)
    v.fc.emplace_back(tape.leaf(l.kernel, requires_grad), tape.leaf(l.bias, requires_grad));
  return v;
}

/// TCN branch: linear per-frame 2D encoder, spatial pooling, dilated causal
/// 1D stack with sigmoid per layer, temporal pooling. The encoder is kept
/// linear so the pooled channel/position moments of the input reach the
/// temporal stack unattenuated.
inline ad::Value tcn_branch(ad::Tape& tape, const ad::Value& clip, const ParamValues& pv,
                            const ModelConfig& cfg) {
  ad::Value x = clip;
  std::size_t in_c = kInputChannels;
  for (std::size_t i = 0; i < pv.encoder.size(); ++i) {
    ConvSpec spec;
    spec.out_channels = cfg.encoder_channels[i];
    spec.in_channels = in_c;
    spec.spatial_extent = 3;
    spec.stride = cfg.encoder_stride;
    spec.padding = Padding::same;
    x = tape.conv_spatial(x, pv.encoder[i].first, pv.encoder[i].second, spec);
    in_c = cfg.encoder_channels[i];
  }
  x = tape.avg_pool(x, {2, 3});  // C x T
  for (std::size_t i = 0; i < pv.temporal.size(); ++i) {
    ConvSpec spec;
    spec.out_channels = cfg.tcn_channels[i];
    spec.in_channels = in_c;
    spec.temporal_extent = cfg.tcn_temporal_extent;
    spec.dilation = cfg.tcn_dilations[i];
    spec.padding = Padding::causal;
    x = tape.sigmoid(tape.conv_temporal(x, pv.temporal[i].first, pv.temporal[i].second, spec));
    in_c = cfg.tcn_channels[i];
  }
  return tape.avg_pool(x, {1});
}

/// One R(2+1)D block: temporal conv + sigmoid, then spatial conv + sigmoid.
inline ad::Value r2plus1d_block(ad::Tape& tape, const ad::Value& x, const ParamValues::R2& b,
                                std::size_t in_c, std::size_t mid_c, std::size_t out_c,
                                const ModelConfig& cfg) {
  ConvSpec tspec;
  tspec.out_channels = mid_c;
  tspec.in_channels = in_c;
  tspec.temporal_extent = cfg.r2_temporal_extent;
  tspec.padding = Padding::same;
  ad::Value h = tape.sigmoid(tape.conv_temporal(x, b.tk, b.tb, tspec));
  ConvSpec sspec;
  sspec.out_channels = out_c;
  sspec.in_channels = mid_c;
  sspec.spatial_extent = cfg.r2_spatial_extent;
  sspec.stride = cfg.r2_spatial_stride;
  sspec.padding = Padding::same;
  return tape.sigmoid(tape.conv_spatial(h, b.sk, b.sb, sspec));
}

inline ad::Value r2plus1d_branch(ad::Tape& tape, const ad::Value& clip, const ParamValues& pv,
                                 const ModelConfig& cfg) {
  ad::Value x = clip;
  std::size_t in_c = kInputChannels;
  for (std::size_t i = 0; i < pv.r2_blocks.size(); ++i) {
    x = r2plus1d_block(tape, x, pv.r2_blocks[i], in_c, cfg.r2_mid_channels[i],
                       cfg.r2_channels[i], cfg);
    in_c = cfg.r2_channels[i];
  }
  return tape.avg_pool(x, {1, 2, 3});
}

/// Fixed fusion normalization ahead of the classifier: branch outputs live in
/// (0,1) with small between-class spread, so without centering and rescaling
/// the head's hidden sigmoids barely see the class signal.
inline constexpr double kFusionScale = 8.0;

/// Three fc layers: sigmoid after the first two, raw logits from the third.
inline ad::Value classifier_logits(ad::Tape& tape, const ad::Value& fused,
                                   const ParamValues& pv) {
  ad::Value centered = tape.add(fused, tape.leaf(Tensor(fused->value.shape(), -0.5)));
  ad::Value scaled = tape.scale(centered, kFusionScale);
  ad::Value h = tape.sigmoid(tape.linear(scaled, pv.fc[0].first, pv.fc[0].second));
  h = tape.sigmoid(tape.linear(h, pv.fc[1].first, pv.fc[1].second));
  return tape.linear(h, pv.fc[2].first, pv.fc[2].second);
}

inline ad::Value probs_from_logits(ad::Tape& tape, const ad::Value& logits,
                                   const ModelConfig& cfg) {
  if (!cfg.sigmoid_output) return tape.softmax(logits);
  // alternative head: per-class sigmoid, normalized to a distribution
  return tape.normalize(tape.sigmoid(logits));
}

/// Model forward to logits. For ablations the omitted branch contributes a
/// zero slice to the fused vector; fc dimensions are unchanged.
inline ad::Value model_logits(ad::Tape& tape, const ad::Value& clip, const ParamValues& pv,
                              const ModelConfig& cfg, Ablation ablation = Ablation::full) {
  ad::Value ytcn, yr2;
  if (ablation == Ablation::r2plus1d_only)
    ytcn = tape.leaf(Tensor(Shape{cfg.tcn_feature_dim()}, 0.0));
  else
    ytcn = tcn_branch(tape, clip, pv, cfg);
  if (ablation == Ablation::tcn_only)
    yr2 = tape.leaf(Tensor(Shape{cfg.r2_feature_dim()}, 0.0));
  else
    yr2 = r2plus1d_branch(tape, clip, pv, cfg);
  return classifier_logits(tape, tape.concat(ytcn, yr2), pv);
}

inline ad::Value model_probs(ad::Tape& tape, const ad::Value& clip, const ParamValues& pv,
                             const ModelConfig& cfg, Ablation ablation = Ablation::full) {
  return probs_from_logits(tape, model_logits(tape, clip, pv, cfg, ablation), cfg);
}

// ---------------------------------------------------------------------------
// Inference convenience
// ---------------------------------------------------------------------------

struct ClassScores {
  Tensor logits;  // 6
  Tensor probs;   // 6, positive, sums to 1

  /// argmax of probs, ties broken by lowest class code
  std::size_t predicted() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[best]) best = i;
    return best;
  }
};

inline ClassScores forward(const VideoClip& clip, const ModelParams& params,
                           const ModelConfig& cfg, Ablation ablation = Ablation::full) {
  if (clip.frames != cfg.frames || clip.height != cfg.height || clip.width != cfg.width)
    throw DimensionError("forward: clip dims do not match model config");
  ad::Tape tape;
  ParamValues pv = bind_params(tape, params, /*requires_grad=*/false);
  ad::Value x = tape.leaf(model_input(clip.to_cthw()));
  ad::Value logits = model_logits(tape, x, pv, cfg, ablation);
  ad::Value probs = probs_from_logits(tape, logits, cfg);
  return ClassScores{logits->value, probs->value};
}

// ---------------------------------------------------------------------------
// Checkpoint I/O: magic "TSFN", config block, tensors in fixed order
// (encoder, temporal stack, r2plus1d blocks, fc stack).
// ---------------------------------------------------------------------------

namespace detail {
inline void write_list(std::ostream& os, const std::vector<std::size_t>& v) {
  write_u32(os, static_cast<std::uint32_t>(v.size()));
  for (std::size_t e : v) write_u32(os, static_cast<std::uint32_t>(e));
}
inline std::vector<std::size_t> read_list(std::istream& is) {
  std::vector<std::size_t> v(read_u32(is));
  for (auto& e : v) e = read_u32(is);
  return v;
}
}  // namespace detail

inline void write_checkpoint(std::ostream& os, const ModelConfig& cfg, const ModelParams& p) {
  os.write("TSFN", 4);
  write_u32(os, static_cast<std::uint32_t>(cfg.frames));
  write_u32(os, static_cast<std::uint32_t>(cfg.height));
  write_u32(os, static_cast<std::uint32_t>(cfg.width));
  detail::write_list(os, cfg.encoder_channels);
  write_u32(os, static_cast<std::uint32_t>(cfg.encoder_stride));
  detail::write_list(os, cfg.tcn_channels);
  detail::write_list(os, cfg.tcn_dilations);
  write_u32(os, static_cast<std::uint32_t>(cfg.tcn_temporal_extent));
  detail::write_list(os, cfg.r2_channels);
  detail::write_list(os, cfg.r2_mid_channels);
  write_u32(os, static_cast<std::uint32_t>(cfg.r2_temporal_extent));
  write_u32(os, static_cast<std::uint32_t>(cfg.r2_spatial_extent));
  write_u32(os, static_cast<std::uint32_t>(cfg.r2_spatial_stride));
  detail::write_list(os, cfg.fc_widths);
  write_u32(os, cfg.sigmoid_output ? 1 : 0);
  write_u32(os, static_cast<std::uint32_t>(cfg.seed & 0xffffffffULL));
  write_u32(os, static_cast<std::uint32_t>(cfg.seed >> 32));
  p.for_each_tensor([&os](const Tensor& t) { write_tensor(os, t); });
  if (!os) throw IoError("checkpoint write failed");
}

inline std::pair<ModelConfig, ModelParams> read_checkpoint(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "TSFN") throw IoError("bad checkpoint magic, expected TSFN");
  ModelConfig cfg;
  cfg.frames = read_u32(is);
  cfg.height = read_u32(is);
  cfg.width = read_u32(is);
  cfg.encoder_channels = detail::read_list(is);
  cfg.encoder_stride = read_u32(is);
  cfg.tcn_channels = detail::read_list(is);
  cfg.tcn_dilations = detail::read_list(is);
  cfg.tcn_temporal_extent = read_u32(is);
  cfg.r2_channels = detail::read_list(is);
  cfg.r2_mid_channels = detail::read_list(is);
  cfg.r2_temporal_extent = read_u32(is);
  cfg.r2_spatial_extent = read_u32(is);
  cfg.r2_spatial_stride = read_u32(is);
  cfg.fc_widths = detail::read_list(is);
  cfg.sigmoid_output = read_u32(is) != 0;
  const std::uint64_t lo = read_u32(is), hi = read_u32(is);
  cfg.seed = lo | (hi << 32);
  cfg.validate();

  // template params carry the expected shapes; stream tensors must match
  ModelParams expect = init_params(cfg);
  ModelParams p = expect;
  bool ok = true;
  std::string detail_msg;
  p.for_each_tensor([&](Tensor& t) {
    Tensor loaded = read_tensor(is);
    if (loaded.shape() != t.shape()) {
      ok = false;
      if (detail_msg.empty())
        detail_msg = "expected " + shape_str(t.shape()) + ", found " + shape_str(loaded.shape());
    }
    t = std::move(loaded);
  });
  if (!ok) throw ConfigError("checkpoint incompatible with its config block: " + detail_msg);
  return {cfg, p};
}

inline void save_checkpoint_file(const std::string& path, const ModelConfig& cfg,
                                 const ModelParams& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  write_checkpoint(os, cfg, p);
}

inline std::pair<ModelConfig, ModelParams> load_checkpoint_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  return read_checkpoint(is);
}

}  // namespace tsfn
