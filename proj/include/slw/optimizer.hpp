#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slw/tensor/dense.hpp"

namespace slw {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  /// Decoupled (AdamW) decay when true; otherwise wd*theta is folded into the gradient.
  bool decoupled_weight_decay = true;

  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  AdamConfig hyper;
  std::vector<Matrix> m;  // first moment, one buffer per parameter tensor
  std::vector<Matrix> v;  // second moment, elementwise >= 0
  std::int64_t t = 0;

  static AdamState zeros_like(std::span<const NamedMatrix<double>> params, const AdamConfig& hyper);
};

struct VarianceStats {
  double var_l1 = 0;   // sum of sqrt(v)
  double var_max = 0;  // max of sqrt(v)
  double mom_l1 = 0;   // sum of |m|
};

struct ClipResult {
  double pre_norm = 0;
  bool clipped = false;
};

/// Global L2 norm over every gradient tensor, accumulated in tensor then element order.
double global_norm(std::span<const Matrix> grads);

/// Rescales all gradients by max_norm / norm when the global norm exceeds max_norm.
/// Throws NonFiniteError naming the first tensor holding a NaN or Inf.
ClipResult clip_global_norm(std::span<Matrix> grads, double max_norm, std::span<const std::string> names = {});

/// One bias-corrected Adam update; increments state.t.
void adam_step(std::span<NamedMatrix<double>> params, std::span<const Matrix> grads, AdamState& state, double lr);

VarianceStats variance_stats(const AdamState& state);

}  // namespace slw
