#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "slw/tensor/ops.hpp"

namespace slw::test {

inline Matrix uniform_matrix(Index rows, Index cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

struct GradCheck {
  double max_rel_error = 0;
  std::string worst;  // "input i, element e"
  Index elements = 0;
};

/// Compares reverse-mode gradients of `fn` against central differences of the
/// same function evaluated at scalar type Oracle. `fn` is a generic callable
/// (Graph<S>&, std::vector<Var<S>>&) -> Var<S> returning a 1x1 loss.
template <typename Oracle = double, typename Fn>
GradCheck grad_check(Fn&& fn, const std::vector<Matrix>& inputs, double h = 1e-5) {
  Graph<double> g;
  std::vector<Var<double>> vars;
  for (const auto& x : inputs) vars.push_back(g.parameter(x));
  Var<double> loss = fn(g, vars);
  g.backward(loss);

  auto eval = [&](std::size_t which, Index element, Oracle delta) {
    Graph<Oracle> go;
    std::vector<Var<Oracle>> ov;
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      MatrixX<Oracle> m = inputs[j].template cast<Oracle>();
      if (j == which) m.data()[element] += delta;
      ov.push_back(go.constant(std::move(m)));
    }
    return fn(go, ov).value()(0, 0);
  };

  GradCheck out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Matrix analytic = vars[i].grad();
    for (Index e = 0; e < inputs[i].size(); ++e) {
      const Oracle hh = static_cast<Oracle>(h);
      const Oracle numeric = (eval(i, e, hh) - eval(i, e, -hh)) / (Oracle(2) * hh);
      const double a = analytic.data()[e];
      const double rel = std::abs(a - static_cast<double>(numeric)) / (std::abs(a) + 1e-8);
      ++out.elements;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = "input " + std::to_string(i) + ", element " + std::to_string(e) + ": analytic " +
                    std::to_string(a) + " numeric " + std::to_string(static_cast<double>(numeric));
      }
    }
  }
  return out;
}

/// Scalar probe loss sum(y .* w) for a fixed weight matrix w, so every output
/// element contributes with its own sign and size.
template <typename S>
Var<S> weighted_sum(Graph<S>& g, Var<S> y, const Matrix& w) {
  return sum(mul(y, g.constant(w.template cast<S>())));
}

}  // namespace slw::test
