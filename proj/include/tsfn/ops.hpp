#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "tsfn/tensor.hpp"

namespace tsfn {

enum class Padding { causal, same, valid };

/// Shared convolution descriptor. The temporal extent is the kernel depth
/// along the time axis; spatial extent is the square kernel side.
struct ConvSpec {
  std::size_t out_channels = 1;
  std::size_t in_channels = 1;
  std::size_t temporal_extent = 1;
  std::size_t spatial_extent = 1;
  std::size_t dilation = 1;  // temporal only
  std::size_t stride = 1;
  Padding padding = Padding::valid;

  void validate() const {
    if (out_channels == 0 || in_channels == 0 || temporal_extent == 0 ||
        spatial_extent == 0 || dilation == 0 || stride == 0)
      throw InvalidInput("ConvSpec: all counts must be positive");
  }
};

namespace detail {

struct PadOut {
  std::size_t left = 0, right = 0, out = 0;
};

inline PadOut time_padding(std::size_t t, const ConvSpec& spec) {
  const std::size_t span = spec.dilation * (spec.temporal_extent - 1) + 1;
  PadOut p;
  switch (spec.padding) {
    case Padding::causal:
      p.left = span - 1;
      p.right = 0;
      break;
    case Padding::same:
      p.left = (span - 1) / 2;
      p.right = span - 1 - p.left;
      break;
    case Padding::valid:
      break;
  }
  if (t + p.left + p.right < span)
    throw InvalidInput("temporal kernel span " + std::to_string(span) +
                       " exceeds padded time axis of length " + std::to_string(t));
  p.out = (t + p.left + p.right - span) / spec.stride + 1;
  return p;
}

inline PadOut space_padding(std::size_t n, const ConvSpec& spec) {
  const std::size_t k = spec.spatial_extent;
  PadOut p;
  switch (spec.padding) {
    case Padding::causal:
      throw InvalidInput("causal padding is only legal for temporal convolution");
    case Padding::same:
      if (k % 2 == 0)
        throw InvalidInput("same padding requires an odd spatial extent, got " + std::to_string(k));
      p.left = p.right = (k - 1) / 2;
      break;
    case Padding::valid:
      break;
  }
  if (n + p.left + p.right < k)
    throw InvalidInput("spatial kernel extent " + std::to_string(k) +
                       " exceeds padded input of length " + std::to_string(n));
  p.out = (n + p.left + p.right - k) / spec.stride + 1;
  return p;
}

inline void check_axis(std::size_t got, std::size_t want, const char* op, const char* axis) {
  if (got != want)
    throw DimensionError(std::string(op) + ": axis '" + axis + "' has extent " +
                         std::to_string(got) + ", expected " + std::to_string(want));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Temporal 1-D convolution, applied independently at every spatial site.
// input: C x T x S   kernel: K x C x d_t   bias: K   output: K x T_out x S
// (S = flattened spatial extent; S = 1 gives the plain C x T case.)
// ---------------------------------------------------------------------------

inline Tensor conv1d_over_sites(const Tensor& input, std::size_t channels, std::size_t time,
                                std::size_t sites, const Tensor& kernel, const Tensor& bias,
                                const ConvSpec& spec) {
  spec.validate();
  detail::check_axis(channels, spec.in_channels, "conv1d_temporal", "channel");
  detail::check_axis(kernel.extent(0), spec.out_channels, "conv1d_temporal", "kernel.out");
  detail::check_axis(kernel.extent(1), spec.in_channels, "conv1d_temporal", "kernel.in");
  detail::check_axis(kernel.extent(2), spec.temporal_extent, "conv1d_temporal", "kernel.taps");
  detail::check_axis(bias.size(), spec.out_channels, "conv1d_temporal", "bias");

  const auto p = detail::time_padding(time, spec);
  const std::size_t K = spec.out_channels, C = channels, dt = spec.temporal_extent;
  Tensor out(Shape{K, p.out, sites});
  const double* x = input.data();
  const double* w = kernel.data();
  double* y = out.data();
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t to = 0; to < p.out; ++to) {
      double* row = y + (k * p.out + to) * sites;
      const double b = bias[k];
      for (std::size_t s = 0; s < sites; ++s) row[s] = b;
      const long base = static_cast<long>(to * spec.stride) - static_cast<long>(p.left);
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < dt; ++i) {
          const long ti = base + static_cast<long>(i * spec.dilation);
          if (ti < 0 || ti >= static_cast<long>(time)) continue;
          const double wv = w[(k * C + c) * dt + i];
          const double* xr = x + (c * time + static_cast<std::size_t>(ti)) * sites;
          for (std::size_t s = 0; s < sites; ++s) row[s] += wv * xr[s];
        }
      }
    }
  }
  return out;
}

/// 1-D temporal convolution on a C x T sequence.
inline Tensor conv1d_temporal(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                              const ConvSpec& spec) {
  if (input.rank() != 2)
    throw DimensionError("conv1d_temporal: expected rank-2 input C x T, got " +
                         shape_str(input.shape()));
  Tensor out = conv1d_over_sites(input, input.extent(0), input.extent(1), 1, kernel, bias, spec);
  return Tensor::from({out.extent(0), out.extent(1)}, out.values());
}

// ---------------------------------------------------------------------------
// Spatial 2-D convolution (cross-correlation), one frame.
// input: C x H x W   kernel: K x C x k x k   bias: K   output: K x H_out x W_out
// ---------------------------------------------------------------------------

inline void conv2d_frame_into(const double* x, std::size_t C, std::size_t H, std::size_t W,
                              const double* w, const double* b, const ConvSpec& spec,
                              const detail::PadOut& ph, const detail::PadOut& pw, double* y) {
  const std::size_t K = spec.out_channels, k = spec.spatial_extent, s = spec.stride;
  for (std::size_t oc = 0; oc < K; ++oc) {
    for (std::size_t ho = 0; ho < ph.out; ++ho) {
      double* row = y + (oc * ph.out + ho) * pw.out;
      for (std::size_t wo = 0; wo < pw.out; ++wo) row[wo] = b[oc];
      const long hbase = static_cast<long>(ho * s) - static_cast<long>(ph.left);
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < k; ++j) {
          const long hi = hbase + static_cast<long>(j);
          if (hi < 0 || hi >= static_cast<long>(H)) continue;
          const double* xr = x + (c * H + static_cast<std::size_t>(hi)) * W;
          const double* wr = w + ((oc * C + c) * k + j) * k;
          for (std::size_t wo = 0; wo < pw.out; ++wo) {
            const long wbase = static_cast<long>(wo * s) - static_cast<long>(pw.left);
            double acc = 0.0;
            for (std::size_t m = 0; m < k; ++m) {
              const long wi = wbase + static_cast<long>(m);
              if (wi < 0 || wi >= static_cast<long>(W)) continue;
              acc += wr[m] * xr[static_cast<std::size_t>(wi)];
            }
            row[wo] += acc;
          }
        }
      }
    }
  }
}

/// 2-D spatial convolution on a C x H x W frame.
inline Tensor conv2d_spatial(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                             const ConvSpec& spec) {
  spec.validate();
  if (input.rank() != 3)
    throw DimensionError("conv2d_spatial: expected rank-3 input C x H x W, got " +
                         shape_str(input.shape()));
  detail::check_axis(input.extent(0), spec.in_channels, "conv2d_spatial", "channel");
  detail::check_axis(kernel.extent(0), spec.out_channels, "conv2d_spatial", "kernel.out");
  detail::check_axis(kernel.extent(1), spec.in_channels, "conv2d_spatial", "kernel.in");
  detail::check_axis(kernel.extent(2), spec.spatial_extent, "conv2d_spatial", "kernel.h");
  detail::check_axis(kernel.extent(3), spec.spatial_extent, "conv2d_spatial", "kernel.w");
  detail::check_axis(bias.size(), spec.out_channels, "conv2d_spatial", "bias");

  const std::size_t H = input.extent(1), W = input.extent(2);
  const auto ph = detail::space_padding(H, spec);
  const auto pw = detail::space_padding(W, spec);
  Tensor out(Shape{spec.out_channels, ph.out, pw.out});
  conv2d_frame_into(input.data(), input.extent(0), H, W, kernel.data(), bias.data(), spec, ph, pw,
                    out.data());
  return out;
}

// ---------------------------------------------------------------------------
// Reference 3-D convolution: valid padding, stride 1, literal quadruple sum.
// input: C x T x H x W   kernel: K x C x d_t x k x k
// ---------------------------------------------------------------------------

inline Tensor conv3d_reference(const Tensor& input, const Tensor& kernel, const ConvSpec& spec) {
  spec.validate();
  if (spec.padding != Padding::valid || spec.stride != 1 || spec.dilation != 1)
    throw InvalidInput("conv3d_reference supports valid padding, stride 1, dilation 1 only");
  if (input.rank() != 4)
    throw DimensionError("conv3d_reference: expected rank-4 input C x T x H x W, got " +
                         shape_str(input.shape()));
  detail::check_axis(input.extent(0), spec.in_channels, "conv3d_reference", "channel");
  detail::check_axis(kernel.extent(0), spec.out_channels, "conv3d_reference", "kernel.out");
  detail::check_axis(kernel.extent(1), spec.in_channels, "conv3d_reference", "kernel.in");
  detail::check_axis(kernel.extent(2), spec.temporal_extent, "conv3d_reference", "kernel.d_t");
  detail::check_axis(kernel.extent(3), spec.spatial_extent, "conv3d_reference", "kernel.h");
  detail::check_axis(kernel.extent(4), spec.spatial_extent, "conv3d_reference", "kernel.w");

  const std::size_t C = input.extent(0), T = input.extent(1), H = input.extent(2),
                    W = input.extent(3);
  const std::size_t K = spec.out_channels, dt = spec.temporal_extent, k = spec.spatial_extent;
  if (T < dt || H < k || W < k)
    throw InvalidInput("conv3d_reference: kernel larger than input");
  const std::size_t To = T - dt + 1, Ho = H - k + 1, Wo = W - k + 1;
  Tensor out(Shape{K, To, Ho, Wo});
  const double* x = input.data();
  const double* w = kernel.data();
  double* y = out.data();
  for (std::size_t oc = 0; oc < K; ++oc)
    for (std::size_t t = 0; t < To; ++t)
      for (std::size_t h = 0; h < Ho; ++h)
        for (std::size_t wo = 0; wo < Wo; ++wo) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < dt; ++i)
              for (std::size_t j = 0; j < k; ++j)
                for (std::size_t m = 0; m < k; ++m)
                  acc += w[(((oc * C + c) * dt + i) * k + j) * k + m] *
                         x[((c * T + t + i) * H + h + j) * W + wo + m];
          y[((oc * To + t) * Ho + h) * Wo + wo] = acc;
        }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise / reduction ops
// ---------------------------------------------------------------------------

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
  return y;
}

/// Stable softmax over a length-n vector.
inline Tensor softmax(const Tensor& x) {
  if (x.rank() != 1) throw DimensionError("softmax: expected a vector, got " + shape_str(x.shape()));
  Tensor y(x.shape());
  double mx = x[0];
  for (std::size_t i = 1; i < x.size(); ++i) mx = std::max(mx, x[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    sum += y[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) y[i] /= sum;
  return y;
}

/// Arithmetic mean over the named axes; output keeps the remaining axes in order.
inline Tensor global_avg_pool(const Tensor& x, const std::vector<std::size_t>& axes) {
  if (axes.empty()) throw InvalidInput("global_avg_pool: empty axis list");
  std::vector<bool> pooled(x.rank(), false);
  for (std::size_t a : axes) {
    if (a >= x.rank())
      throw InvalidInput("global_avg_pool: axis " + std::to_string(a) + " out of range for " +
                         shape_str(x.shape()));
    pooled[a] = true;
  }
  Shape out_shape;
  for (std::size_t a = 0; a < x.rank(); ++a)
    if (!pooled[a]) out_shape.push_back(x.extent(a));
  if (out_shape.empty()) out_shape.push_back(1);

  Tensor out(out_shape, 0.0);
  // strides of x
  std::vector<std::size_t> stride(x.rank(), 1);
  for (std::size_t a = x.rank(); a-- > 1;) stride[a - 1] = stride[a] * x.extent(a);
  std::size_t count = 1;
  for (std::size_t a = 0; a < x.rank(); ++a)
    if (pooled[a]) count *= x.extent(a);

  std::vector<std::size_t> idx(x.rank(), 0);
  for (std::size_t flat = 0; flat < x.size(); ++flat) {
    std::size_t rem = flat, oflat = 0;
    for (std::size_t a = 0; a < x.rank(); ++a) {
      idx[a] = rem / stride[a];
      rem %= stride[a];
    }
    for (std::size_t a = 0; a < x.rank(); ++a)
      if (!pooled[a]) oflat = oflat * x.extent(a) + idx[a];
    out[oflat] += x[flat];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= static_cast<double>(count);
  return out;
}

/// weight (m x n) * input (n) + bias (m)
inline Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 1 || weight.rank() != 2)
    throw DimensionError("linear: expected vector input and matrix weight");
  const std::size_t m = weight.extent(0), n = weight.extent(1);
  detail::check_axis(input.size(), n, "linear", "input");
  detail::check_axis(bias.size(), m, "linear", "bias");
  Tensor y(Shape{m});
  const double* w = weight.data();
  for (std::size_t r = 0; r < m; ++r) {
    double acc = bias[r];
    const double* wr = w + r * n;
    for (std::size_t c = 0; c < n; ++c) acc += wr[c] * input[c];
    y[r] = acc;
  }
  return y;
}

inline Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1)
    throw DimensionError("concat: expected two vectors");
  std::vector<double> v = a.values();
  v.insert(v.end(), b.values().begin(), b.values().end());
  return Tensor::from({a.size() + b.size()}, std::move(v));
}

}  // namespace tsfn
