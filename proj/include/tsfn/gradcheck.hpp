#pragma once

#include <functional>

#include "tsfn/model.hpp"

namespace tsfn {

/// Central-difference gradient verification. `loss_fn` must be a
/// deterministic pure function of the parameters; `grad_fn` fills the
/// parameters' grad slots with analytic gradients of the same loss.
/// Samples up to `max_per_tensor` entries of every parameter tensor and
/// returns max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
inline double grad_check(const std::function<double(const ModelParams&)>& loss_fn,
                         const std::function<void(ModelParams&)>& grad_fn, ModelParams params,
                         double step = 1e-5, std::size_t max_per_tensor = 8) {
  grad_fn(params);

  double max_err = 0.0;
  std::vector<Tensor*> tensors;
  params.for_each_tensor([&tensors](Tensor& t) { tensors.push_back(&t); });

  for (Tensor* t : tensors) {
    const std::size_t n = t->size();
    const std::size_t count = std::min(n, max_per_tensor);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t idx = k * n / count;
      const double w = (*t)[idx];
      const double h = step * std::max(1.0, std::abs(w));
      (*t)[idx] = w + h;
      const double up = loss_fn(params);
      (*t)[idx] = w - h;
      const double down = loss_fn(params);
      (*t)[idx] = w;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = t->grad()[idx];
      // The floor keeps the relative error meaningful for near-zero
      // gradients, where central differences are dominated by rounding noise
      // (~eps*|L|/h) rather than by the quantity being checked.
      const double err = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-5});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace tsfn
