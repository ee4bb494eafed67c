#include "slw/optimizer.hpp"

#include <cmath>

#include "slw/errors.hpp"

namespace slw {

AdamState AdamState::zeros_like(std::span<const NamedMatrix<double>> params, const AdamConfig& hyper) {
  AdamState s;
  s.hyper = hyper;
  for (const auto& p : params) {
    s.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    s.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
  return s;
}

double global_norm(std::span<const Matrix> grads) {
  double sq = 0;
  for (const auto& g : grads) {
    const double* d = g.data();
    for (Index i = 0; i < g.size(); ++i) sq += d[i] * d[i];
  }
  return std::sqrt(sq);
}

ClipResult clip_global_norm(std::span<Matrix> grads, double max_norm, std::span<const std::string> names) {
  if (!(max_norm > 0)) throw ContractError("clip_global_norm: max_norm must be > 0");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].allFinite()) {
      const std::string name = i < names.size() ? names[i] : "#" + std::to_string(i);
      throw NonFiniteError("non-finite gradient in parameter " + name, name);
    }
  }
  ClipResult r;
  r.pre_norm = global_norm(grads);
  if (r.pre_norm > max_norm) {
    const double factor = max_norm / r.pre_norm;
    for (auto& g : grads) g *= factor;
    r.clipped = true;
  }
  return r;
}

void adam_step(std::span<NamedMatrix<double>> params, std::span<const Matrix> grads, AdamState& state, double lr) {
  if (!(lr >= 0)) throw ConfigError("adam_step: learning rate must be >= 0, got " + std::to_string(lr));
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  }
  const AdamConfig& h = state.hyper;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& theta = params[k].value;
    const Matrix& g = grads[k];
    if (g.rows() != theta.rows() || g.cols() != theta.cols()) {
      throw DimensionError("adam_step: gradient " + shape_string(g) + " for parameter " + params[k].name + " " +
                           shape_string(theta));
    }
    double* th = theta.data();
    const double* gd = g.data();
    double* m = state.m[k].data();
    double* v = state.v[k].data();
    for (Index i = 0; i < theta.size(); ++i) {
      double gi = gd[i];
      if (!h.decoupled_weight_decay) gi += h.weight_decay * th[i];
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      double step = lr * (m_hat / (std::sqrt(v_hat) + h.eps));
      if (h.decoupled_weight_decay) step += lr * h.weight_decay * th[i];
      th[i] -= step;
    }
  }
}

VarianceStats variance_stats(const AdamState& state) {
  VarianceStats s;
  for (std::size_t k = 0; k < state.v.size(); ++k) {
    const double* v = state.v[k].data();
    for (Index i = 0; i < state.v[k].size(); ++i) {
      const double r = std::sqrt(v[i]);
      s.var_l1 += r;
      if (r > s.var_max) s.var_max = r;
    }
    const double* m = state.m[k].data();
    for (Index i = 0; i < state.m[k].size(); ++i) s.mom_l1 += std::abs(m[i]);
  }
  return s;
}

}  // namespace slw
