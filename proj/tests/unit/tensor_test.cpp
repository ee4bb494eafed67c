#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "slw/tensor/ops.hpp"
#include "support.hpp"

using namespace slw;
using slw::test::grad_check;
using slw::test::uniform_matrix;
using slw::test::weighted_sum;

namespace {

Matrix from(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

// Textbook triple loop, k innermost.
Matrix naive_product(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      double acc = 0;
      for (Index p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      c(i, j) = acc;
    }
  }
  return c;
}

constexpr double kGradTolerance = 1e-4;

}  // namespace

TEST_CASE("matmul examples") {
  Graph<double> g;
  const Matrix a = from({{1, 2}, {3, 4}});
  CHECK(matmul(g.constant(Matrix::Identity(2, 2)), g.constant(a)).value() == a);
  CHECK(matmul(g.constant(Matrix::Zero(2, 2)), g.constant(a)).value() == Matrix::Zero(2, 2));
  CHECK(matmul(g.constant(a), g.constant(from({{5, 6}, {7, 8}}))).value() == from({{19, 22}, {43, 50}}));
}

TEST_CASE("matmul rejects mismatched shapes and names both") {
  Graph<double> g;
  try {
    matmul(g.constant(Matrix::Zero(2, 3)), g.constant(Matrix::Zero(2, 3)));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("gemm equals the serial triple loop bit for bit on ragged shapes") {
  std::mt19937_64 rng(7);
  for (auto [m, k, n] : {std::tuple<Index, Index, Index>{1, 1, 1}, {5, 3, 7}, {13, 17, 40}, {6, 32, 64}, {33, 9, 8}}) {
    const Matrix a = uniform_matrix(m, k, rng);
    const Matrix b = uniform_matrix(k, n, rng);
    CHECK(kernels::product(a, b) == naive_product(a, b));
    Matrix acc = uniform_matrix(m, n, rng);
    Matrix expect = acc + naive_product(a, b);
    kernels::add_product(acc, a, b);
    CHECK(acc == expect);
  }
}

TEST_CASE("gemm rows do not depend on how many rows or columns are computed") {
  std::mt19937_64 rng(11);
  const Matrix a = uniform_matrix(29, 24, rng);
  const Matrix b = uniform_matrix(24, 37, rng);
  const Matrix full = kernels::product(a, b);
  for (Index rows : {1, 4, 6, 7, 13, 28}) {
    for (Index cols : {1, 8, 16, 17, 36}) {
      const Matrix part = kernels::product(a.topRows(rows), b.leftCols(cols));
      CHECK(part == full.topLeftCorner(rows, cols));
    }
  }
}

TEST_CASE("softmax examples") {
  Graph<double> g;
  Matrix uniform = softmax(g.constant(Matrix::Zero(1, 3))).value();
  for (Index j = 0; j < 3; ++j) CHECK(uniform(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-15));

  Matrix two = softmax(g.constant(from({{0, std::log(3.0)}}))).value();
  CHECK(two(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(two(0, 1) == doctest::Approx(0.75).epsilon(1e-15));

  std::mt19937_64 rng(3);
  const Matrix x = uniform_matrix(4, 9, rng, -5, 5);
  const Matrix p = softmax(g.constant(x)).value();
  const Matrix shifted = softmax(g.constant((x.array() + 2.5).matrix())).value();
  CHECK((p - shifted).cwiseAbs().maxCoeff() < 1e-15);
  for (Index r = 0; r < p.rows(); ++r) {
    CHECK(p.row(r).minCoeff() >= 0);
    CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-12);
  }
  const Matrix pc = softmax(g.constant(x), 0).value();
  for (Index c = 0; c < pc.cols(); ++c) CHECK(std::abs(pc.col(c).sum() - 1.0) < 1e-12);
}

TEST_CASE("layer_norm examples") {
  Graph<double> g;
  auto ones = g.constant(Matrix::Ones(1, 2));
  auto zeros = g.constant(Matrix::Zero(1, 2));
  const Matrix y = layer_norm(g.constant(from({{1, 3}})), ones, zeros, 0.0).value();
  CHECK(y(0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(y(0, 1) == doctest::Approx(1.0).epsilon(1e-15));

  auto ones4 = g.constant(Matrix::Ones(1, 4));
  const Matrix flat = layer_norm(g.constant(Matrix::Constant(2, 4, 7.0)), ones4, g.constant(Matrix::Zero(1, 4))).value();
  CHECK(flat == Matrix::Zero(2, 4));

  std::mt19937_64 rng(5);
  const Matrix bias = uniform_matrix(1, 6, rng);
  const Matrix z = layer_norm(g.constant(uniform_matrix(3, 6, rng)), g.constant(Matrix::Ones(1, 6)), g.constant(bias)).value();
  for (Index r = 0; r < 3; ++r) CHECK(z.row(r).mean() == doctest::Approx(bias.mean()).epsilon(1e-12));
}

TEST_CASE("cross_entropy examples") {
  Graph<double> g;
  const std::vector<std::int32_t> t0 = {0};
  CHECK(cross_entropy(g.constant(Matrix::Zero(1, 4)), t0).value()(0, 0) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(cross_entropy(g.constant(from({{0, std::log(3.0)}})), t0).value()(0, 0) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(cross_entropy(g.constant(from({{800, 0, 0}})), t0).value()(0, 0) < 1e-300);
  const std::vector<std::int32_t> bad = {4};
  CHECK_THROWS_AS(cross_entropy(g.constant(Matrix::Zero(1, 4)), bad), IndexError);
}

TEST_CASE("backward basics") {
  std::mt19937_64 rng(9);
  const Matrix x = uniform_matrix(3, 4, rng);
  {
    Graph<double> g;
    auto v = g.parameter(x);
    g.backward(sum(v));
    CHECK(v.grad() == Matrix::Ones(3, 4));
  }
  {
    Graph<double> g;
    auto v = g.parameter(from({{1.5}}));
    g.backward(mul(v, v));
    CHECK(v.grad()(0, 0) == 3.0);
  }
  {
    Graph<double> g;
    auto v = g.parameter(x);
    CHECK_THROWS_AS(g.backward(v), ContractError);
  }
}

TEST_CASE("backward twice gives identical gradients") {
  std::mt19937_64 rng(13);
  Graph<double> g;
  auto a = g.parameter(uniform_matrix(8, 6, rng));
  auto b = g.parameter(uniform_matrix(6, 12, rng));
  auto y = gelu(matmul(a, b));
  auto loss = sum(mul(softmax(y), y));
  g.backward(loss);
  const Matrix ga = a.grad();
  const Matrix gb = b.grad();
  g.backward(loss);
  CHECK(a.grad() == ga);
  CHECK(b.grad() == gb);
}

TEST_CASE("finite-difference checks for every differentiable op") {
  std::mt19937_64 rng(21);
  auto check = [](const char* name, auto fn, const std::vector<Matrix>& inputs) {
    const auto r = grad_check(fn, inputs);
    INFO(name << " worst at " << r.worst);
    CHECK(r.max_rel_error < kGradTolerance);
  };
  const Matrix w34 = uniform_matrix(3, 4, rng);
  const Matrix w35 = uniform_matrix(3, 5, rng);

  check("matmul", [&](auto& g, auto& v) { return weighted_sum(g, matmul(v[0], v[1]), w35); },
        {uniform_matrix(3, 4, rng), uniform_matrix(4, 5, rng)});
  check("add", [&](auto& g, auto& v) { return weighted_sum(g, add(v[0], v[1]), w34); },
        {uniform_matrix(3, 4, rng), uniform_matrix(3, 4, rng)});
  check("add_bias", [&](auto& g, auto& v) { return weighted_sum(g, add_bias(v[0], v[1]), w34); },
        {uniform_matrix(3, 4, rng), uniform_matrix(1, 4, rng)});
  check("scale", [&](auto& g, auto& v) { return weighted_sum(g, scale(v[0], decltype(v[0].value()(0, 0))(-1.7)), w34); },
        {uniform_matrix(3, 4, rng)});
  check("mul", [&](auto& g, auto& v) { return weighted_sum(g, mul(v[0], v[1]), w34); },
        {uniform_matrix(3, 4, rng), uniform_matrix(3, 4, rng)});
  check("transpose", [&](auto& g, auto& v) { return weighted_sum(g, transpose(v[0]), w34); },
        {uniform_matrix(4, 3, rng)});
  check("reshape", [&](auto& g, auto& v) { return weighted_sum(g, reshape(v[0], 3, 4), w34); },
        {uniform_matrix(6, 2, rng)});
  check("softmax rows", [&](auto& g, auto& v) { return weighted_sum(g, softmax(v[0], 1), w34); },
        {uniform_matrix(3, 4, rng)});
  check("softmax columns", [&](auto& g, auto& v) { return weighted_sum(g, softmax(v[0], 0), w34); },
        {uniform_matrix(3, 4, rng)});
  check("layer_norm", [&](auto& g, auto& v) { return weighted_sum(g, layer_norm(v[0], v[1], v[2]), w34); },
        {uniform_matrix(3, 4, rng), uniform_matrix(1, 4, rng), uniform_matrix(1, 4, rng)});
  check("gelu", [&](auto& g, auto& v) { return weighted_sum(g, gelu(v[0]), w34); }, {uniform_matrix(3, 4, rng)});

  const std::vector<std::int32_t> ids = {2, 0, 2};
  check("embedding", [&](auto& g, auto& v) { return weighted_sum(g, embedding(v[0], ids), w34); },
        {uniform_matrix(5, 4, rng)});
  const std::vector<std::int32_t> targets = {1, 4, 0};
  check("cross_entropy", [&](auto&, auto& v) { return cross_entropy(v[0], targets); }, {uniform_matrix(3, 5, rng)});

  const Index batch = 2;
  const Index length = 5;
  const Matrix watt = uniform_matrix(batch * length, 8, rng);
  check("causal_self_attention",
        [&](auto& g, auto& v) { return weighted_sum(g, causal_self_attention(v[0], batch, length, 2), watt); },
        {uniform_matrix(batch * length, 24, rng)});
}
