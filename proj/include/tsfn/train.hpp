#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "tsfn/eval.hpp"
#include "tsfn/loss.hpp"
#include "tsfn/model.hpp"
#include "tsfn/rng.hpp"
#include "tsfn/synth.hpp"

namespace tsfn {

enum class OptimizerKind { sgd, sgd_momentum, adam };

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "sgd_momentum") return OptimizerKind::sgd_momentum;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer: " + s);
}

inline std::string optimizer_to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::sgd_momentum: return "sgd_momentum";
    case OptimizerKind::adam: return "adam";
  }
  return "?";
}

inline Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "tcn_only") return Ablation::tcn_only;
  if (s == "r2plus1d_only") return Ablation::r2plus1d_only;
  throw ConfigError("unknown ablation: " + s);
}

struct TrainConfig {
  double learning_rate = 3e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  OptimizerKind optimizer = OptimizerKind::adam;
  LossWeights loss_weights;
  std::uint64_t seed = 1;
  std::string checkpoint_path = "model.tsfn";
  std::string manifest = "data/manifest.json";
  std::string log_path;  // default: checkpoint_path + ".log.csv"
  Ablation ablation = Ablation::full;
  ModelConfig model;  // geometry is overridden from the dataset manifest

  void validate() const {
    if (learning_rate < 0) throw ConfigError("learning rate must be non-negative");
    if (batch_size < 1 || epochs < 1) throw ConfigError("batch_size and epochs must be >= 1");
    loss_weights.validate();
  }

  std::string effective_log_path() const {
    return log_path.empty() ? checkpoint_path + ".log.csv" : log_path;
  }
};

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
  if (j.contains("optimizer"))
    c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  if (j.contains("loss_weights")) {
    const auto& lw = j.at("loss_weights");
    if (lw.contains("alpha")) c.loss_weights.alpha = lw.at("alpha").get<double>();
    if (lw.contains("beta")) c.loss_weights.beta = lw.at("beta").get<double>();
    if (lw.contains("gamma")) c.loss_weights.gamma = lw.at("gamma").get<double>();
    if (lw.contains("views")) c.loss_weights.views = lw.at("views").get<std::size_t>();
  }
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("checkpoint_path")) c.checkpoint_path = j.at("checkpoint_path").get<std::string>();
  if (j.contains("manifest")) c.manifest = j.at("manifest").get<std::string>();
  if (j.contains("log_path")) c.log_path = j.at("log_path").get<std::string>();
  if (j.contains("ablation")) c.ablation = ablation_from_string(j.at("ablation").get<std::string>());
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

  void step(ModelParams& params) {
    std::size_t i = 0;
    ++t_;
    params.for_each_tensor([&](Tensor& t) {
      auto& g = t.grad();
      if (state_m_.size() <= i) {
        state_m_.emplace_back(t.size(), 0.0);
        state_v_.emplace_back(t.size(), 0.0);
      }
      auto& m = state_m_[i];
      auto& v = state_v_[i];
      switch (kind_) {
        case OptimizerKind::sgd:
          for (std::size_t k = 0; k < t.size(); ++k) t[k] -= lr_ * g[k];
          break;
        case OptimizerKind::sgd_momentum:
          for (std::size_t k = 0; k < t.size(); ++k) {
            m[k] = 0.9 * m[k] + g[k];
            t[k] -= lr_ * m[k];
          }
          break;
        case OptimizerKind::adam: {
          const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
          const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
          const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
          for (std::size_t k = 0; k < t.size(); ++k) {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            t[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
          }
          break;
        }
      }
      ++i;
    });
  }

 private:
  OptimizerKind kind_;
  double lr_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> state_m_, state_v_;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double total = 0, ce = 0, global_ctx = 0, dist = 0, robust = 0;
  double train_acc = 0;
};

/// Compact in-memory clip store (8-bit, same quantization as the clip files).
struct PackedClip {
  std::size_t t = 0, h = 0, w = 0;
  std::vector<unsigned char> bytes;

  static PackedClip pack(const VideoClip& c) {
    PackedClip p{c.frames, c.height, c.width, {}};
    p.bytes.resize(c.values.size());
    for (std::size_t i = 0; i < c.values.size(); ++i)
      p.bytes[i] = static_cast<unsigned char>(
          std::lround(std::clamp(c.values[i], 0.0, 1.0) * 255.0));
    return p;
  }
  VideoClip unpack() const {
    VideoClip c(t, h, w);
    for (std::size_t i = 0; i < bytes.size(); ++i)
      c.values[i] = static_cast<double>(bytes[i]) / 255.0;
    return c;
  }
};

struct TrainResult {
  ModelConfig model_config;
  ModelParams params;
  std::vector<EpochLog> log;
};

inline void write_train_log(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write training log: " + path);
  os << "epoch,total,ce,global,dist,robust,train_acc\n";
  for (const auto& e : log)
    os << e.epoch << "," << format_fixed(e.total, 6) << "," << format_fixed(e.ce, 6) << ","
       << format_fixed(e.global_ctx, 6) << "," << format_fixed(e.dist, 6) << ","
       << format_fixed(e.robust, 6) << "," << format_fixed(e.train_acc, 4) << "\n";
}

inline void abort_on_nonfinite(const ModelParams& params, const LossBreakdown& b) {
  if (std::isfinite(b.total)) return;
  std::string which = "loss total";
  std::size_t idx = 0;
  params.for_each_tensor([&](const Tensor& t) {
    if (which == "loss total" && !t.all_finite())
      which = "parameter tensor #" + std::to_string(idx) + " " + shape_str(t.shape());
    ++idx;
  });
  throw InvalidInput("non-finite loss encountered; first non-finite tensor: " + which);
}

/// Deterministic seeded training: fixed per-epoch shuffle, per-batch step on
/// the composite loss, per-epoch log row, final checkpoint.
inline TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  Manifest manifest = load_manifest(cfg.manifest);

  ModelConfig mc = cfg.model;
  mc.frames = manifest.config.t;
  mc.height = manifest.config.h;
  mc.width = manifest.config.w;
  mc.seed = cfg.seed;
  mc.validate();

  const auto rows = manifest.rows("train");
  if (rows.empty()) throw IoError("manifest has no training rows: " + cfg.manifest);

  std::vector<PackedClip> cache;
  std::vector<int> labels;
  std::vector<double> distances;
  std::vector<std::uint64_t> seeds;
  cache.reserve(rows.size());
  for (const auto* r : rows) {
    cache.push_back(PackedClip::pack(load_clip_file(
        (std::filesystem::path(manifest.dir) / r->file).string())));
    labels.push_back(r->class_code);
    distances.push_back(r->distance_m);
    seeds.push_back(r->seed);
  }

  TrainResult res;
  res.model_config = mc;
  res.params = init_params(mc);
  Optimizer opt(cfg.optimizer, cfg.learning_rate);

  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  // robustness views depend only on the sample, so compute them once and
  // reuse across epochs (packed 8-bit, same quantization as the clip files)
  const std::size_t n_views = cfg.loss_weights.gamma > 0 ? cfg.loss_weights.views : 0;
  std::vector<std::vector<PackedClip>> view_cache(rows.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0xe90c0 + epoch));
    shuffle_rng.shuffle(order);

    EpochLog el;
    el.epoch = epoch;
    std::size_t correct = 0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);

      res.params.for_each_tensor([](Tensor& t) { t.zero_grad(); });
      LossBreakdown bb;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t s = order[i];
        Sample sample;
        sample.clip = cache[s].unpack();
        sample.label = gesture_from_code(labels[s]);
        sample.distance = distances[s];
        sample.seed = seeds[s];
        std::vector<VideoClip> views;
        if (n_views > 0) {
          if (view_cache[s].empty())
            for (std::size_t j = 0; j < n_views; ++j)
              view_cache[s].push_back(
                  PackedClip::pack(make_view(sample, j, n_views, manifest.config)));
          for (const auto& pc : view_cache[s]) views.push_back(pc.unpack());
        }
        const LossBreakdown sb =
            sample_loss_backward(res.params, mc, sample, cfg.loss_weights, manifest.config,
                                 inv, cfg.ablation, n_views > 0 ? &views : nullptr);
        bb.ce += sb.ce * inv;
        bb.global_ctx += sb.global_ctx * inv;
        bb.dist += sb.dist * inv;
        bb.robust += sb.robust * inv;
        if (sb.predicted == labels[s]) ++correct;
      }
      bb.total = bb.ce + cfg.loss_weights.alpha * bb.global_ctx +
                 cfg.loss_weights.beta * bb.dist + cfg.loss_weights.gamma * bb.robust;
      abort_on_nonfinite(res.params, bb);
      opt.step(res.params);

      el.total += bb.total;
      el.ce += bb.ce;
      el.global_ctx += bb.global_ctx;
      el.dist += bb.dist;
      el.robust += bb.robust;
      ++batches;
    }

    const double invb = 1.0 / static_cast<double>(batches);
    el.total *= invb;
    el.ce *= invb;
    el.global_ctx *= invb;
    el.dist *= invb;
    el.robust *= invb;
    el.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    res.log.push_back(el);
  }

  save_checkpoint_file(cfg.checkpoint_path, mc, res.params);
  write_train_log(res.log, cfg.effective_log_path());
  return res;
}

}  // namespace tsfn
