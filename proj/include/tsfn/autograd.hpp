#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "tsfn/ops.hpp"
#include "tsfn/tensor.hpp"

namespace tsfn::ad {

struct Node;
using Value = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  std::vector<double> grad;  // allocated on first backward
  bool requires_grad = false;
  std::vector<Value> parents;
  std::function<void(Node&)> back;  // accumulates into parents' grad

  double* g() { return grad.data(); }
};

/// Reverse-mode tape. Records every operation in forward order; backward()
/// walks the record in reverse, so each node is visited exactly once.
/// Gradients ACCUMULATE across backward() calls on the same tape; use a
/// fresh tape (or reset_grads) for an independent pass. A tape is confined
/// to a single thread.
class Tape {
 public:
  Value leaf(Tensor v, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    nodes_.push_back(n);
    return n;
  }

  Value param(const Tensor& v) { return leaf(v, true); }

  std::size_t node_count() const { return nodes_.size(); }

  void reset_grads() {
    for (auto& n : nodes_) n->grad.assign(n->grad.size(), 0.0);
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  void backward(const Value& loss) {
    if (!loss->value.is_scalar())
      throw InvalidInput("backward: loss must be scalar, got " + shape_str(loss->value.shape()));
    for (auto& n : nodes_) {
      // interior grads are per-pass scratch; leaf grads accumulate
      if (n->grad.size() != n->value.size() || !n->parents.empty())
        n->grad.assign(n->value.size(), 0.0);
    }
    loss->grad[0] += 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = *nodes_[i];
      if (n.back && n.requires_grad) n.back(n);
    }
  }

  // -------------------------------------------------------------------
  // ops
  // -------------------------------------------------------------------

  /// Temporal 1-D convolution. x: C x T (rank 2) or C x T x H x W (rank 4);
  /// the convolution runs along T independently at each spatial site.
  Value conv_temporal(const Value& x, const Value& k, const Value& b, ConvSpec spec) {
    const Tensor& xv = x->value;
    std::size_t C, T, S;
    Shape out_shape;
    if (xv.rank() == 2) {
      C = xv.extent(0); T = xv.extent(1); S = 1;
    } else if (xv.rank() == 4) {
      C = xv.extent(0); T = xv.extent(1); S = xv.extent(2) * xv.extent(3);
    } else {
      throw DimensionError("conv_temporal: expected rank 2 or 4 input, got " +
                           shape_str(xv.shape()));
    }
    Tensor out = conv1d_over_sites(xv, C, T, S, k->value, b->value, spec);
    if (xv.rank() == 2)
      out = Tensor::from({out.extent(0), out.extent(1)}, out.values());
    else
      out = Tensor::from({out.extent(0), out.extent(1), xv.extent(2), xv.extent(3)}, out.values());

    const auto p = detail::time_padding(T, spec);
    Node* xn = x.get(); Node* kn = k.get(); Node* bn = b.get();
    return record(std::move(out), {x, k, b}, [xn, kn, bn, spec, C, T, S, p](Node& self) {
      const std::size_t K = spec.out_channels, dt = spec.temporal_extent;
      const double* gy = self.g();
      const double* xd = xn->value.data();
      const double* wd = kn->value.data();
      double* gx = xn->grad.data();
      double* gw = kn->grad.data();
      double* gb = bn->grad.data();
      for (std::size_t k2 = 0; k2 < K; ++k2) {
        for (std::size_t to = 0; to < p.out; ++to) {
          const double* grow = gy + (k2 * p.out + to) * S;
          double acc_b = 0.0;
          for (std::size_t s = 0; s < S; ++s) acc_b += grow[s];
          gb[k2] += acc_b;
          const long base = static_cast<long>(to * spec.stride) - static_cast<long>(p.left);
          for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t i = 0; i < dt; ++i) {
              const long ti = base + static_cast<long>(i * spec.dilation);
              if (ti < 0 || ti >= static_cast<long>(T)) continue;
              const std::size_t xoff = (c * T + static_cast<std::size_t>(ti)) * S;
              const double wv = wd[(k2 * C + c) * dt + i];
              double acc_w = 0.0;
              double* gxr = gx + xoff;
              const double* xr = xd + xoff;
              for (std::size_t s = 0; s < S; ++s) {
                gxr[s] += wv * grow[s];
                acc_w += xr[s] * grow[s];
              }
              gw[(k2 * C + c) * dt + i] += acc_w;
            }
          }
        }
      }
    });
  }

  /// Spatial 2-D convolution applied independently per frame.
  /// x: C x H x W (rank 3, one frame) or C x T x H x W (rank 4).
  Value conv_spatial(const Value& x, const Value& k, const Value& b, ConvSpec spec) {
    spec.validate();
    const Tensor& xv = x->value;
    std::size_t C, T, H, W;
    if (xv.rank() == 3) {
      C = xv.extent(0); T = 1; H = xv.extent(1); W = xv.extent(2);
    } else if (xv.rank() == 4) {
      C = xv.extent(0); T = xv.extent(1); H = xv.extent(2); W = xv.extent(3);
    } else {
      throw DimensionError("conv_spatial: expected rank 3 or 4 input, got " +
                           shape_str(xv.shape()));
    }
    detail::check_axis(C, spec.in_channels, "conv_spatial", "channel");
    detail::check_axis(k->value.extent(0), spec.out_channels, "conv_spatial", "kernel.out");
    detail::check_axis(k->value.extent(1), spec.in_channels, "conv_spatial", "kernel.in");
    detail::check_axis(b->value.size(), spec.out_channels, "conv_spatial", "bias");
    const auto ph = detail::space_padding(H, spec);
    const auto pw = detail::space_padding(W, spec);
    const std::size_t K = spec.out_channels, ke = spec.spatial_extent, st = spec.stride;

    Shape out_shape = (xv.rank() == 3) ? Shape{K, ph.out, pw.out} : Shape{K, T, ph.out, pw.out};
    Tensor out(out_shape);
    {
      const double* xd = xv.data();
      const double* wd = k->value.data();
      const double* bd = b->value.data();
      double* y = out.data();
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t oc = 0; oc < K; ++oc)
          for (std::size_t ho = 0; ho < ph.out; ++ho) {
            double* row = y + ((oc * T + t) * ph.out + ho) * pw.out;
            for (std::size_t wo = 0; wo < pw.out; ++wo) row[wo] = bd[oc];
            const long hbase = static_cast<long>(ho * st) - static_cast<long>(ph.left);
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t j = 0; j < ke; ++j) {
                const long hi = hbase + static_cast<long>(j);
                if (hi < 0 || hi >= static_cast<long>(H)) continue;
                const double* xr = xd + ((c * T + t) * H + static_cast<std::size_t>(hi)) * W;
                const double* wr = wd + ((oc * C + c) * ke + j) * ke;
                for (std::size_t wo = 0; wo < pw.out; ++wo) {
                  const long wbase = static_cast<long>(wo * st) - static_cast<long>(pw.left);
                  double acc = 0.0;
                  for (std::size_t m = 0; m < ke; ++m) {
                    const long wi = wbase + static_cast<long>(m);
                    if (wi < 0 || wi >= static_cast<long>(W)) continue;
                    acc += wr[m] * xr[static_cast<std::size_t>(wi)];
                  }
                  row[wo] += acc;
                }
              }
          }
    }

    Node* xn = x.get(); Node* kn = k.get(); Node* bn = b.get();
    return record(std::move(out), {x, k, b},
                  [xn, kn, bn, spec, C, T, H, W, ph, pw](Node& self) {
      const std::size_t K = spec.out_channels, ke = spec.spatial_extent, st = spec.stride;
      const double* gy = self.g();
      const double* xd = xn->value.data();
      const double* wd = kn->value.data();
      double* gx = xn->grad.data();
      double* gw = kn->grad.data();
      double* gb = bn->grad.data();
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t oc = 0; oc < K; ++oc)
          for (std::size_t ho = 0; ho < ph.out; ++ho) {
            const double* grow = gy + ((oc * T + t) * ph.out + ho) * pw.out;
            double acc_b = 0.0;
            for (std::size_t wo = 0; wo < pw.out; ++wo) acc_b += grow[wo];
            gb[oc] += acc_b;
            const long hbase = static_cast<long>(ho * st) - static_cast<long>(ph.left);
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t j = 0; j < ke; ++j) {
                const long hi = hbase + static_cast<long>(j);
                if (hi < 0 || hi >= static_cast<long>(H)) continue;
                const std::size_t xoff = ((c * T + t) * H + static_cast<std::size_t>(hi)) * W;
                const double* xr = xd + xoff;
                double* gxr = gx + xoff;
                const double* wr = wd + ((oc * C + c) * ke + j) * ke;
                double* gwr = gw + ((oc * C + c) * ke + j) * ke;
                for (std::size_t wo = 0; wo < pw.out; ++wo) {
                  const long wbase = static_cast<long>(wo * st) - static_cast<long>(pw.left);
                  const double gv = grow[wo];
                  for (std::size_t m = 0; m < ke; ++m) {
                    const long wi = wbase + static_cast<long>(m);
                    if (wi < 0 || wi >= static_cast<long>(W)) continue;
                    gxr[static_cast<std::size_t>(wi)] += wr[m] * gv;
                    gwr[m] += xr[static_cast<std::size_t>(wi)] * gv;
                  }
                }
              }
          }
    });
  }

  Value sigmoid(const Value& x) {
    Tensor y = tsfn::sigmoid(x->value);
    Node* xn = x.get();
    return record(std::move(y), {x}, [xn](Node& self) {
      const double* yv = self.value.data();
      const double* gy = self.g();
      double* gx = xn->grad.data();
      for (std::size_t i = 0; i < self.value.size(); ++i)
        gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
    });
  }

  Value softmax(const Value& x) {
    Tensor y = tsfn::softmax(x->value);
    Node* xn = x.get();
    return record(std::move(y), {x}, [xn](Node& self) {
      const double* yv = self.value.data();
      const double* gy = self.g();
      double* gx = xn->grad.data();
      double dot = 0.0;
      const std::size_t n = self.value.size();
      for (std::size_t i = 0; i < n; ++i) dot += yv[i] * gy[i];
      for (std::size_t i = 0; i < n; ++i) gx[i] += yv[i] * (gy[i] - dot);
    });
  }

  Value avg_pool(const Value& x, std::vector<std::size_t> axes) {
    Tensor y = tsfn::global_avg_pool(x->value, axes);
    const Shape xshape = x->value.shape();
    Node* xn = x.get();
    return record(std::move(y), {x}, [xn, xshape, axes](Node& self) {
      std::vector<bool> pooled(xshape.size(), false);
      for (std::size_t a : axes) pooled[a] = true;
      std::vector<std::size_t> stride(xshape.size(), 1);
      for (std::size_t a = xshape.size(); a-- > 1;) stride[a - 1] = stride[a] * xshape[a];
      std::size_t count = 1;
      for (std::size_t a = 0; a < xshape.size(); ++a)
        if (pooled[a]) count *= xshape[a];
      const double inv = 1.0 / static_cast<double>(count);
      const double* gy = self.g();
      double* gx = xn->grad.data();
      const std::size_t n = xn->value.size();
      std::vector<std::size_t> idx(xshape.size(), 0);
      for (std::size_t flat = 0; flat < n; ++flat) {
        std::size_t rem = flat, oflat = 0;
        for (std::size_t a = 0; a < xshape.size(); ++a) {
          idx[a] = rem / stride[a];
          rem %= stride[a];
        }
        for (std::size_t a = 0; a < xshape.size(); ++a)
          if (!pooled[a]) oflat = oflat * xshape[a] + idx[a];
        gx[flat] += gy[oflat] * inv;
      }
    });
  }

  Value linear(const Value& x, const Value& w, const Value& b) {
    Tensor y = tsfn::linear(x->value, w->value, b->value);
    Node* xn = x.get(); Node* wn = w.get(); Node* bn = b.get();
    return record(std::move(y), {x, w, b}, [xn, wn, bn](Node& self) {
      const std::size_t m = wn->value.extent(0), n = wn->value.extent(1);
      const double* gy = self.g();
      const double* wd = wn->value.data();
      const double* xd = xn->value.data();
      double* gx = xn->grad.data();
      double* gw = wn->grad.data();
      double* gb = bn->grad.data();
      for (std::size_t r = 0; r < m; ++r) {
        const double gv = gy[r];
        gb[r] += gv;
        const double* wr = wd + r * n;
        double* gwr = gw + r * n;
        for (std::size_t c = 0; c < n; ++c) {
          gx[c] += wr[c] * gv;
          gwr[c] += xd[c] * gv;
        }
      }
    });
  }

  Value concat(const Value& a, const Value& b) {
    Tensor y = tsfn::concat(a->value, b->value);
    Node* an = a.get(); Node* bn = b.get();
    return record(std::move(y), {a, b}, [an, bn](Node& self) {
      const double* gy = self.g();
      const std::size_t na = an->value.size();
      for (std::size_t i = 0; i < na; ++i) an->grad[i] += gy[i];
      for (std::size_t i = 0; i < bn->value.size(); ++i) bn->grad[i] += gy[na + i];
    });
  }

  Value add(const Value& a, const Value& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor y = a->value;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b->value[i];
    Node* an = a.get(); Node* bn = b.get();
    return record(std::move(y), {a, b}, [an, bn](Node& self) {
      const double* gy = self.g();
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        an->grad[i] += gy[i];
        bn->grad[i] += gy[i];
      }
    });
  }

  Value sub(const Value& a, const Value& b) {
    check_same_shape(a->value, b->value, "sub");
    Tensor y = a->value;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b->value[i];
    Node* an = a.get(); Node* bn = b.get();
    return record(std::move(y), {a, b}, [an, bn](Node& self) {
      const double* gy = self.g();
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        an->grad[i] += gy[i];
        bn->grad[i] -= gy[i];
      }
    });
  }

  Value mul(const Value& a, const Value& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor y = a->value;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b->value[i];
    Node* an = a.get(); Node* bn = b.get();
    return record(std::move(y), {a, b}, [an, bn](Node& self) {
      const double* gy = self.g();
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        an->grad[i] += bn->value[i] * gy[i];
        bn->grad[i] += an->value[i] * gy[i];
      }
    });
  }

  Value scale(const Value& a, double c) {
    Tensor y = a->value;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= c;
    Node* an = a.get();
    return record(std::move(y), {a}, [an, c](Node& self) {
      const double* gy = self.g();
      for (std::size_t i = 0; i < self.value.size(); ++i) an->grad[i] += c * gy[i];
    });
  }

  Value sum_all(const Value& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x->value.size(); ++i) s += x->value[i];
    Node* xn = x.get();
    return record(Tensor::scalar(s), {x}, [xn](Node& self) {
      const double gv = self.grad[0];
      for (std::size_t i = 0; i < xn->value.size(); ++i) xn->grad[i] += gv;
    });
  }

  /// y = x / sum(x); requires a strictly positive sum.
  Value normalize(const Value& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x->value.size(); ++i) s += x->value[i];
    if (s <= 0.0) throw InvalidInput("normalize: non-positive sum");
    Tensor y = x->value;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] /= s;
    Node* xn = x.get();
    return record(std::move(y), {x}, [xn, s](Node& self) {
      const double* gy = self.g();
      const double* yv = self.value.data();
      double dot = 0.0;
      const std::size_t n = self.value.size();
      for (std::size_t i = 0; i < n; ++i) dot += gy[i] * yv[i];
      for (std::size_t i = 0; i < n; ++i) xn->grad[i] += (gy[i] - dot) / s;
    });
  }

  static constexpr double kProbFloor = 1e-12;

  /// -log(max(probs[label], 1e-12))
  Value cross_entropy(const Value& probs, std::size_t label) {
    if (label >= probs->value.size())
      throw InvalidInput("cross_entropy: label " + std::to_string(label) + " out of range");
    const double p = probs->value[label];
    const double pc = std::max(p, kProbFloor);
    Node* pn = probs.get();
    return record(Tensor::scalar(-std::log(pc)), {probs}, [pn, label](Node& self) {
      const double p = pn->value[label];
      if (p > kProbFloor) pn->grad[label] += -self.grad[0] / p;
    });
  }

  /// Symmetrized KL divergence sum_i (p_i - q_i) * (log p_i - log q_i),
  /// with both probabilities clamped at 1e-12 inside the logs.
  Value sym_kl(const Value& p, const Value& q) {
    check_same_shape(p->value, q->value, "sym_kl");
    const std::size_t n = p->value.size();
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double pc = std::max(p->value[i], kProbFloor);
      const double qc = std::max(q->value[i], kProbFloor);
      v += (p->value[i] - q->value[i]) * (std::log(pc) - std::log(qc));
    }
    Node* pn = p.get(); Node* qn = q.get();
    return record(Tensor::scalar(v), {p, q}, [pn, qn, n](Node& self) {
      const double gv = self.grad[0];
      for (std::size_t i = 0; i < n; ++i) {
        const double pv = pn->value[i], qv = qn->value[i];
        const double pc = std::max(pv, kProbFloor), qc = std::max(qv, kProbFloor);
        const double dlog = std::log(pc) - std::log(qc);
        double dp = dlog, dq = -dlog;
        if (pv > kProbFloor) dp += (pv - qv) / pc;
        if (qv > kProbFloor) dq -= (pv - qv) / qc;
        pn->grad[i] += gv * dp;
        qn->grad[i] += gv * dq;
      }
    });
  }

 private:
  Value record(Tensor out, std::vector<Value> parents, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->value = std::move(out);
    for (const auto& p : parents)
      if (p->requires_grad) n->requires_grad = true;
    n->parents = std::move(parents);
    if (n->requires_grad) n->back = std::move(back);
    nodes_.push_back(n);
    return n;
  }

  std::vector<Value> nodes_;
};

}  // namespace tsfn::ad
