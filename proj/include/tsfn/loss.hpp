#pragma once

#include <cmath>
#include <vector>

#include "tsfn/model.hpp"
#include "tsfn/synth.hpp"

namespace tsfn {

inline constexpr double kProbFloor = 1e-12;

struct LossWeights {
  double alpha = 0.1;   // global context
  double beta = 0.05;   // distance weighting
  double gamma = 0.1;   // robustness
  std::size_t views = 3;  // M degraded views per sample

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0)
      throw ConfigError("loss weights must be non-negative");
    if (gamma > 0 && views < 2)
      throw ConfigError("robustness loss needs at least 2 views (M >= 2)");
  }
};

struct Batch {
  std::vector<Sample> samples;

  void validate() const {
    if (samples.empty()) throw InvalidInput("batch must contain at least one sample");
    for (const auto& s : samples)
      if (s.distance < kMinDistance || s.distance > kMaxDistance)
        throw InvalidInput("sample distance outside [4,28] m");
  }
};

struct LossBreakdown {
  double total = 0, ce = 0, global_ctx = 0, dist = 0, robust = 0;
  int predicted = -1;  // argmax on the undegraded clip, when available
};

// ---------------------------------------------------------------------------
// Component formulas (numeric)
// ---------------------------------------------------------------------------

inline double cross_entropy_prob(double p) { return -std::log(std::max(p, kProbFloor)); }

/// -log of the true-class probability, clamped at 1e-12.
inline double cross_entropy(const ClassScores& scores, GestureClass y) {
  const std::size_t label = static_cast<std::size_t>(y);
  if (label >= scores.probs.size()) throw InvalidInput("label out of range");
  return cross_entropy_prob(scores.probs[label]);
}

/// (1/N) sum d_i * CE_i, with raw distances in meters.
inline double distance_loss(const Batch& batch, const std::vector<double>& per_sample_ce) {
  if (per_sample_ce.size() != batch.samples.size())
    throw DimensionError("distance_loss: CE list length does not match batch size");
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.samples.size(); ++i)
    acc += batch.samples[i].distance * per_sample_ce[i];
  return acc / static_cast<double>(batch.samples.size());
}

/// M equally spaced simulated distances spanning [4, 28].
inline std::vector<double> view_distances(std::size_t m) {
  if (m < 2) throw ConfigError("view count M must be at least 2");
  std::vector<double> d(m);
  for (std::size_t j = 0; j < m; ++j)
    d[j] = kMinDistance + (kMaxDistance - kMinDistance) * static_cast<double>(j) /
                              static_cast<double>(m - 1);
  return d;
}

/// The j-th degraded view of a sample; deterministic per (sample seed, j).
inline VideoClip make_view(const Sample& sample, std::size_t j, std::size_t m,
                           const SynthConfig& scfg) {
  return degrade(sample.clip, view_distances(m)[j], mix_seed(sample.seed, 1000 + j), scfg);
}

inline double population_variance_times_m(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return acc;
}

/// sum_j (CE(view_j) - mean CE over views)^2 for one sample.
inline double robustness_loss(const ModelParams& params, const ModelConfig& cfg,
                              const Sample& sample, const LossWeights& w,
                              const SynthConfig& scfg, Ablation abl = Ablation::full) {
  if (w.views < 2) throw ConfigError("robustness loss needs M >= 2");
  std::vector<double> ces;
  for (std::size_t j = 0; j < w.views; ++j) {
    const VideoClip v = make_view(sample, j, w.views, scfg);
    ces.push_back(cross_entropy(forward(v, params, cfg, abl), sample.label));
  }
  return population_variance_times_m(ces);
}

inline double sym_kl(const Tensor& p, const Tensor& q) {
  check_same_shape(p, q, "sym_kl");
  double v = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    v += (p[i] - q[i]) * (std::log(std::max(p[i], kProbFloor)) -
                          std::log(std::max(q[i], kProbFloor)));
  return v;
}

/// Symmetrized KL between predictions on the full clip and on a temporally
/// subsampled clip (stride 2, front-padded to full length).
inline double global_context_loss(const ModelParams& params, const ModelConfig& cfg,
                                  const Sample& sample, Ablation abl = Ablation::full) {
  if (sample.clip.frames < 4)
    throw InvalidInput("global context loss needs at least 4 frames");
  const ClassScores full = forward(sample.clip, params, cfg, abl);
  const ClassScores sub = forward(sample.clip.subsample_stride2(), params, cfg, abl);
  return sym_kl(full.probs, sub.probs);
}

/// L = L_CE + alpha*L_global + beta*L_dist + gamma*L_robust over a batch,
/// each term averaged over samples. Numeric (inference) evaluation.
inline LossBreakdown composite_loss(const ModelParams& params, const ModelConfig& cfg,
                                    const Batch& batch, const LossWeights& w,
                                    const SynthConfig& scfg, Ablation abl = Ablation::full) {
  batch.validate();
  w.validate();
  const double n = static_cast<double>(batch.samples.size());
  LossBreakdown b;
  std::vector<double> ces;
  for (const auto& s : batch.samples) {
    const double ce = cross_entropy(forward(s.clip, params, cfg, abl), s.label);
    ces.push_back(ce);
    b.ce += ce / n;
    if (w.alpha > 0) b.global_ctx += global_context_loss(params, cfg, s, abl) / n;
    if (w.gamma > 0) b.robust += robustness_loss(params, cfg, s, w, scfg, abl) / n;
  }
  b.dist = distance_loss(batch, ces);
  b.total = b.ce + w.alpha * b.global_ctx + w.beta * b.dist + w.gamma * b.robust;
  return b;
}

// ---------------------------------------------------------------------------
// Differentiable path: builds the per-sample loss on a tape and accumulates
// scaled gradients into the parameter tensors' grad buffers.
// ---------------------------------------------------------------------------

/// One sample's contribution to the batch loss, differentiated.
/// Gradients of (contribution / batch size) are ADDED to params' grad slots.
/// Returns the sample's unweighted components.
/// `precomputed_views`, when given, must hold the `w.views` clips that
/// make_view would produce; callers may cache them across epochs.
inline LossBreakdown sample_loss_backward(ModelParams& params, const ModelConfig& cfg,
                                          const Sample& sample, const LossWeights& w,
                                          const SynthConfig& scfg, double inv_batch,
                                          Ablation abl = Ablation::full,
                                          const std::vector<VideoClip>* precomputed_views =
                                              nullptr) {
  w.validate();
  ad::Tape tape;
  ParamValues pv = bind_params(tape, params);
  const std::size_t label = static_cast<std::size_t>(sample.label);

  ad::Value clip = tape.leaf(model_input(sample.clip.to_cthw()));
  ad::Value probs = model_probs(tape, clip, pv, cfg, abl);
  ad::Value ce = tape.cross_entropy(probs, label);
  ad::Value contrib = ce;

  LossBreakdown out;
  out.ce = ce->value.item();
  {
    const Tensor& pb = probs->value;
    std::size_t best = 0;
    for (std::size_t i = 1; i < pb.size(); ++i)
      if (pb[i] > pb[best]) best = i;
    out.predicted = static_cast<int>(best);
  }

  if (w.alpha > 0) {
    if (sample.clip.frames < 4)
      throw InvalidInput("global context loss needs at least 4 frames");
    ad::Value sub = tape.leaf(model_input(sample.clip.subsample_stride2().to_cthw()));
    ad::Value probs_sub = model_probs(tape, sub, pv, cfg, abl);
    ad::Value g = tape.sym_kl(probs, probs_sub);
    out.global_ctx = g->value.item();
    contrib = tape.add(contrib, tape.scale(g, w.alpha));
  }

  out.dist = sample.distance * out.ce;
  contrib = tape.add(contrib, tape.scale(ce, w.beta * sample.distance));

  if (w.gamma > 0) {
    if (precomputed_views && precomputed_views->size() != w.views)
      throw InvalidInput("precomputed view count does not match w.views");
    std::vector<ad::Value> view_ces;
    for (std::size_t j = 0; j < w.views; ++j) {
      ad::Value v = tape.leaf(model_input(precomputed_views
                                              ? (*precomputed_views)[j].to_cthw()
                                              : make_view(sample, j, w.views, scfg).to_cthw()));
      view_ces.push_back(tape.cross_entropy(model_probs(tape, v, pv, cfg, abl), label));
    }
    ad::Value sum = view_ces[0];
    for (std::size_t j = 1; j < view_ces.size(); ++j) sum = tape.add(sum, view_ces[j]);
    ad::Value mean = tape.scale(sum, 1.0 / static_cast<double>(w.views));
    ad::Value r;
    for (std::size_t j = 0; j < view_ces.size(); ++j) {
      ad::Value diff = tape.sub(view_ces[j], mean);
      ad::Value sq = tape.mul(diff, diff);
      r = r ? tape.add(r, sq) : sq;
    }
    out.robust = r->value.item();
    contrib = tape.add(contrib, tape.scale(r, w.gamma));
  }

  out.total = out.ce + w.alpha * out.global_ctx + w.beta * out.dist + w.gamma * out.robust;

  tape.backward(tape.scale(contrib, inv_batch));

  std::vector<ad::Value> nodes;
  pv.for_each([&nodes](const ad::Value& v) { nodes.push_back(v); });
  std::size_t i = 0;
  params.for_each_tensor([&](Tensor& t) {
    auto& g = t.grad();
    const auto& ng = nodes[i]->grad;
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += ng[k];
    ++i;
  });
  return out;
}

/// Full differentiable batch loss: accumulates parameter gradients and
/// returns the averaged component breakdown.
inline LossBreakdown batch_loss_backward(ModelParams& params, const ModelConfig& cfg,
                                         const Batch& batch, const LossWeights& w,
                                         const SynthConfig& scfg,
                                         Ablation abl = Ablation::full) {
  batch.validate();
  const double inv = 1.0 / static_cast<double>(batch.samples.size());
  LossBreakdown b;
  for (const auto& s : batch.samples) {
    const LossBreakdown si = sample_loss_backward(params, cfg, s, w, scfg, inv, abl);
    b.ce += si.ce * inv;
    b.global_ctx += si.global_ctx * inv;
    b.dist += si.dist * inv;
    b.robust += si.robust * inv;
  }
  b.total = b.ce + w.alpha * b.global_ctx + w.beta * b.dist + w.gamma * b.robust;
  return b;
}

}  // namespace tsfn
