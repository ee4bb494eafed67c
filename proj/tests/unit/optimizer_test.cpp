#include <cmath>
#include <random>

#include "doctest.h"
#include "slw/errors.hpp"
#include "slw/optimizer.hpp"
#include "support.hpp"

using namespace slw;

namespace {

std::vector<NamedMatrix<double>> scalar_param(double value) { return {{"theta", Matrix::Constant(1, 1, value)}}; }

double norm_oracle(const std::vector<Matrix>& grads) {
  long double s = 0;
  for (const auto& g : grads) {
    for (Index i = 0; i < g.size(); ++i) s += static_cast<long double>(g.data()[i]) * g.data()[i];
  }
  return static_cast<double>(std::sqrt(s));
}

}  // namespace

TEST_CASE("clip_global_norm scales only above the limit") {
  std::vector<Matrix> grads = {Matrix::Constant(1, 4, 1.0)};  // norm 2
  auto r = clip_global_norm(grads, 1.0);
  CHECK(r.clipped);
  CHECK(r.pre_norm == 2.0);
  CHECK(grads[0] == Matrix::Constant(1, 4, 0.5));

  std::vector<Matrix> small = {Matrix::Constant(1, 4, 0.25)};  // norm 0.5
  r = clip_global_norm(small, 1.0);
  CHECK_FALSE(r.clipped);
  CHECK(small[0] == Matrix::Constant(1, 4, 0.25));
}

TEST_CASE("clip_global_norm matches a recomputed norm on random gradients") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> scale(0.01, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Matrix> grads = {test::uniform_matrix(3, 7, rng), test::uniform_matrix(1, 5, rng),
                                 test::uniform_matrix(4, 4, rng)};
    const double s = scale(rng);
    for (auto& g : grads) g *= s;
    const double before = norm_oracle(grads);
    const auto r = clip_global_norm(grads, 1.0);
    CHECK(std::abs(r.pre_norm - before) <= 1e-12 * before);
    CHECK(std::abs(norm_oracle(grads) - std::min(before, 1.0)) < 1e-9);
  }
}

TEST_CASE("clip_global_norm names the tensor holding a non-finite value") {
  std::vector<Matrix> grads = {Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  grads[1](1, 0) = std::nan("");
  const std::vector<std::string> names = {"wte", "wpe"};
  try {
    clip_global_norm(grads, 1.0, names);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.parameter() == "wpe");
  }
}

TEST_CASE("adam first step by hand") {
  auto params = scalar_param(0.0);
  AdamConfig hyper;
  hyper.weight_decay = 0;
  auto state = AdamState::zeros_like(params, hyper);
  const std::vector<Matrix> grads = {Matrix::Constant(1, 1, 1.0)};
  adam_step(params, grads, state, 0.1);
  CHECK(state.t == 1);
  CHECK(state.m[0](0, 0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(state.v[0](0, 0) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(params[0].value(0, 0) == doctest::Approx(-0.1 / (1 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("adam with zero gradient and no decay leaves everything in place") {
  std::mt19937_64 rng(2);
  std::vector<NamedMatrix<double>> params = {{"a", test::uniform_matrix(3, 3, rng)}};
  const Matrix before = params[0].value;
  AdamConfig hyper;
  hyper.weight_decay = 0;
  auto state = AdamState::zeros_like(params, hyper);
  const std::vector<Matrix> grads = {Matrix::Zero(3, 3)};
  adam_step(params, grads, state, 0.1);
  CHECK(params[0].value == before);
  CHECK(state.v[0] == Matrix::Zero(3, 3));
}

TEST_CASE("adam weight decay: decoupled and coupled") {
  auto params = scalar_param(2.0);
  AdamConfig hyper;
  hyper.weight_decay = 0.5;
  auto state = AdamState::zeros_like(params, hyper);
  const std::vector<Matrix> zero = {Matrix::Zero(1, 1)};
  adam_step(params, zero, state, 0.1);
  CHECK(params[0].value(0, 0) == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0).epsilon(1e-15));

  auto coupled = scalar_param(2.0);
  hyper.decoupled_weight_decay = false;
  auto cstate = AdamState::zeros_like(coupled, hyper);
  adam_step(coupled, zero, cstate, 0.1);
  // Gradient becomes wd * theta = 1, so the step equals the unit-gradient first step.
  CHECK(coupled[0].value(0, 0) == doctest::Approx(2.0 - 0.1 / (1 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("adam is deterministic and keeps v non-negative") {
  std::mt19937_64 rng(3);
  std::vector<NamedMatrix<double>> a = {{"w", test::uniform_matrix(4, 5, rng)}};
  auto b = a;
  AdamConfig hyper;
  auto sa = AdamState::zeros_like(a, hyper);
  auto sb = AdamState::zeros_like(b, hyper);
  for (int step = 0; step < 20; ++step) {
    const std::vector<Matrix> g = {test::uniform_matrix(4, 5, rng, -3, 3)};
    adam_step(a, g, sa, 0.01);
    adam_step(b, g, sb, 0.01);
    CHECK(sa.v[0].minCoeff() >= 0);
  }
  CHECK(a[0].value == b[0].value);
  CHECK(sa.m[0] == sb.m[0]);
  CHECK(sa.v[0] == sb.v[0]);
}

TEST_CASE("adam step size is bounded by the bias-corrected ratio") {
  std::mt19937_64 rng(4);
  std::vector<NamedMatrix<double>> p = {{"w", test::uniform_matrix(2, 6, rng)}};
  AdamConfig hyper;
  hyper.weight_decay = 0;
  auto state = AdamState::zeros_like(p, hyper);
  const double lr = 0.05;
  for (int step = 0; step < 30; ++step) {
    const Matrix before = p[0].value;
    const std::vector<Matrix> g = {test::uniform_matrix(2, 6, rng, -2, 2)};
    adam_step(p, g, state, lr);
    const double c1 = 1 - std::pow(hyper.beta1, static_cast<double>(state.t));
    const double c2 = 1 - std::pow(hyper.beta2, static_cast<double>(state.t));
    for (Index i = 0; i < before.size(); ++i) {
      const double bound = lr * std::abs(state.m[0].data()[i] / c1) / (std::sqrt(state.v[0].data()[i] / c2) + hyper.eps);
      CHECK(std::abs(p[0].value.data()[i] - before.data()[i]) <= bound * (1 + 1e-12));
    }
  }
}

TEST_CASE("adam rejects a negative learning rate") {
  auto params = scalar_param(0.0);
  auto state = AdamState::zeros_like(params, AdamConfig{});
  const std::vector<Matrix> g = {Matrix::Zero(1, 1)};
  CHECK_THROWS_AS(adam_step(params, g, state, -1e-3), ConfigError);
}

TEST_CASE("variance_stats examples") {
  std::vector<NamedMatrix<double>> params = {{"a", Matrix::Zero(1, 2)}};
  auto state = AdamState::zeros_like(params, AdamConfig{});
  auto s = variance_stats(state);
  CHECK(s.var_l1 == 0);
  CHECK(s.var_max == 0);
  CHECK(s.mom_l1 == 0);

  state.v[0] << 4, 9;
  state.m[0] << -1, 0.5;
  s = variance_stats(state);
  CHECK(s.var_l1 == 5);
  CHECK(s.var_max == 3);
  CHECK(s.mom_l1 == 1.5);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    state.v[0] = test::uniform_matrix(1, 2, rng, 0, 10);
    s = variance_stats(state);
    CHECK(s.var_max <= s.var_l1);
  }
}
