#pragma once

// Brute-force reference implementations used to cross-check the fast paths.
// These deliberately share no code with ops.hpp: padding is materialized
// into an explicit buffer and every sum is written as plain nested loops.

#include <vector>

#include "tsfn/ops.hpp"
#include "tsfn/tensor.hpp"

namespace tsfn::oracle {

/// Nested-loop 1-D temporal convolution on C x T.
inline Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     const ConvSpec& spec) {
  const std::size_t C = input.extent(0), T = input.extent(1);
  const std::size_t K = kernel.extent(0), dt = kernel.extent(2);
  const std::size_t span = spec.dilation * (dt - 1) + 1;
  std::size_t left = 0, right = 0;
  if (spec.padding == Padding::causal) left = span - 1;
  if (spec.padding == Padding::same) {
    left = (span - 1) / 2;
    right = span - 1 - left;
  }
  const std::size_t tp = T + left + right;
  std::vector<std::vector<double>> padded(C, std::vector<double>(tp, 0.0));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t) padded[c][left + t] = input[c * T + t];
  const std::size_t t_out = (tp - span) / spec.stride + 1;
  Tensor out(Shape{K, t_out});
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t t = 0; t < t_out; ++t) {
      double acc = bias[k];
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < dt; ++i)
          acc += kernel[(k * C + c) * dt + i] * padded[c][t * spec.stride + i * spec.dilation];
      out[k * t_out + t] = acc;
    }
  return out;
}

/// Nested-loop 2-D convolution on C x H x W.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     const ConvSpec& spec) {
  const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
  const std::size_t K = kernel.extent(0), k = kernel.extent(2);
  std::size_t pad = 0;
  if (spec.padding == Padding::same) pad = (k - 1) / 2;
  const std::size_t hp = H + 2 * pad, wp = W + 2 * pad;
  std::vector<double> padded(C * hp * wp, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        padded[(c * hp + y + pad) * wp + x + pad] = input[(c * H + y) * W + x];
  const std::size_t ho = (hp - k) / spec.stride + 1, wo = (wp - k) / spec.stride + 1;
  Tensor out(Shape{K, ho, wo});
  for (std::size_t oc = 0; oc < K; ++oc)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x) {
        double acc = bias[oc];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t j = 0; j < k; ++j)
            for (std::size_t m = 0; m < k; ++m)
              acc += kernel[((oc * C + c) * k + j) * k + m] *
                     padded[(c * hp + y * spec.stride + j) * wp + x * spec.stride + m];
        out[(oc * ho + y) * wo + x] = acc;
      }
  return out;
}

/// Quadruple-loop 3-D convolution (valid, stride 1, no bias) on C x T x H x W.
inline Tensor conv3d(const Tensor& input, const Tensor& kernel) {
  const std::size_t C = input.extent(0), T = input.extent(1), H = input.extent(2),
                    W = input.extent(3);
  const std::size_t K = kernel.extent(0), dt = kernel.extent(2), k = kernel.extent(3);
  const std::size_t to = T - dt + 1, ho = H - k + 1, wo = W - k + 1;
  Tensor out(Shape{K, to, ho, wo});
  for (std::size_t oc = 0; oc < K; ++oc)
    for (std::size_t t = 0; t < to; ++t)
      for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t x = 0; x < wo; ++x) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < dt; ++i)
              for (std::size_t j = 0; j < k; ++j)
                for (std::size_t m = 0; m < k; ++m)
                  acc += kernel[(((oc * C + c) * dt + i) * k + j) * k + m] *
                         input[((c * T + t + i) * H + y + j) * W + x + m];
          out[((oc * to + t) * ho + y) * wo + x] = acc;
        }
  return out;
}

/// Brute-force average precision: enumerates precision at every positive
/// rank over the score-sorted list (ties by original index).
inline double average_precision(const std::vector<std::pair<double, bool>>& scored) {
  std::vector<std::size_t> order(scored.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  // selection sort by (score desc, index asc)
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const bool better = scored[order[j]].first > scored[order[i]].first ||
                          (scored[order[j]].first == scored[order[i]].first &&
                           order[j] < order[i]);
      if (better) std::swap(order[i], order[j]);
    }
  double ap = 0.0;
  std::size_t positives = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!scored[order[r]].second) continue;
    ++positives;
    std::size_t hits = 0;
    for (std::size_t q = 0; q <= r; ++q)
      if (scored[order[q]].second) ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return ap / static_cast<double>(positives);
}

/// Direct population-variance computation, times the view count.
inline double variance_times_m(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return acc;
}

}  // namespace tsfn::oracle
