#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <type_traits>
#include <limits>

#include "slw/errors.hpp"
#include "slw/tensor/dense.hpp"

namespace slw::kernels {

// Every output element of gemm() is accumulated as
//   acc = 0; for p in [0, k): acc = acc + a(i, p) * b(p, j)
// regardless of which micro-tile the element falls in, so a row of the result
// never depends on how many other rows or columns the product has. The build
// disables floating-point contraction so the tiled and scalar paths round alike.

namespace detail {

#if defined(__AVX512F__)
inline constexpr int kVectorBytes = 64;
#else
inline constexpr int kVectorBytes = 32;
#endif

template <typename Scalar>
inline constexpr bool kHasVector = std::is_same_v<Scalar, double> || std::is_same_v<Scalar, float>;

template <typename Scalar>
struct Lanes {
  static constexpr int width = kVectorBytes / static_cast<int>(sizeof(Scalar));
  typedef Scalar type __attribute__((vector_size(kVectorBytes)));
};

// MR rows x (NV vectors) columns; lane q of every accumulator sees the same
// sequence of rounded multiplies and adds as the scalar loop below.
template <typename Scalar, int MR, int NV>
inline void gemm_tile(const Scalar* a, Index lda, const Scalar* b, Index ldb, Scalar* c, Index ldc,
                      Index k, bool accumulate) {
  using V = typename Lanes<Scalar>::type;
  constexpr int W = Lanes<Scalar>::width;
  V acc[MR][NV];
  for (int r = 0; r < MR; ++r) {
    for (int q = 0; q < NV; ++q) acc[r][q] = V{};
  }
  for (Index p = 0; p < k; ++p) {
    V bv[NV];
    for (int q = 0; q < NV; ++q) std::memcpy(&bv[q], b + p * ldb + q * W, sizeof(V));
    for (int r = 0; r < MR; ++r) {
      const V av = V{} + a[r * lda + p];
      for (int q = 0; q < NV; ++q) acc[r][q] += av * bv[q];
    }
  }
  for (int r = 0; r < MR; ++r) {
    for (int q = 0; q < NV; ++q) {
      Scalar* dst = c + r * ldc + q * W;
      if (accumulate) {
        V cur;
        std::memcpy(&cur, dst, sizeof(V));
        cur += acc[r][q];
        std::memcpy(dst, &cur, sizeof(V));
      } else {
        std::memcpy(dst, &acc[r][q], sizeof(V));
      }
    }
  }
}

template <typename Scalar>
inline void gemm_scalar(const Scalar* a, const Scalar* b, Index ldb, Scalar* c, Index k, bool accumulate) {
  Scalar acc = 0;
  for (Index p = 0; p < k; ++p) acc += a[p] * b[p * ldb];
  if (accumulate) {
    *c += acc;
  } else {
    *c = acc;
  }
}

template <typename Scalar, int MR>
inline void gemm_rows(const Scalar* a, Index lda, const Scalar* b, Index ldb, Scalar* c, Index ldc, Index k,
                      Index n, bool accumulate) {
  Index j = 0;
  if constexpr (kHasVector<Scalar>) {
    constexpr int W = Lanes<Scalar>::width;
    for (; j + 2 * W <= n; j += 2 * W) gemm_tile<Scalar, MR, 2>(a, lda, b + j, ldb, c + j, ldc, k, accumulate);
    for (; j + W <= n; j += W) gemm_tile<Scalar, MR, 1>(a, lda, b + j, ldb, c + j, ldc, k, accumulate);
  }
  for (; j < n; ++j) {
    for (Index r = 0; r < MR; ++r) gemm_scalar(a + r * lda, b + j, ldb, c + r * ldc + j, k, accumulate);
  }
}

}  // namespace detail

/// C (m x n) = A (m x k) * B (k x n), or C += A * B when accumulate is set.
/// All operands row-major with the given leading dimensions.
template <typename Scalar>
void gemm(const Scalar* a, Index lda, const Scalar* b, Index ldb, Scalar* c, Index ldc, Index m,
          Index k, Index n, bool accumulate = false) {
  constexpr int MR = 6;
  Index i = 0;
  for (; i + MR <= m; i += MR) {
    detail::gemm_rows<Scalar, MR>(a + i * lda, lda, b, ldb, c + i * ldc, ldc, k, n, accumulate);
  }
  for (; i < m; ++i) detail::gemm_rows<Scalar, 1>(a + i * lda, lda, b, ldb, c + i * ldc, ldc, k, n, accumulate);
}

/// Deterministic matrix product of two Eigen expressions. Operands that are not
/// already row-major with unit inner stride are evaluated into temporaries.
template <typename DA, typename DB>
MatrixX<typename DA::Scalar> product(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  static_assert(std::is_same_v<Scalar, typename DB::Scalar>, "mixed scalar product");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a) + " x " +
                         shape_string(b));
  }
  const Eigen::Ref<const MatrixX<Scalar>, 0, Eigen::OuterStride<>> ra(a.derived());
  const Eigen::Ref<const MatrixX<Scalar>, 0, Eigen::OuterStride<>> rb(b.derived());
  MatrixX<Scalar> c(a.rows(), b.cols());
  gemm(ra.data(), ra.outerStride(), rb.data(), rb.outerStride(), c.data(), c.cols(), a.rows(),
       a.cols(), b.cols());
  return c;
}

/// Eigen's blocked product. Repeatable for a fixed shape but its rounding can
/// depend on the operand sizes, so it is only used for gradients, never for
/// values that must match across batch or sequence shapes.
template <typename DA, typename DB>
MatrixX<typename DA::Scalar> fast_product(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a) + " x " + shape_string(b));
  }
  MatrixX<typename DA::Scalar> c(a.rows(), b.cols());
  c.noalias() = a * b;
  return c;
}

/// dst += a * b with the same accumulation contract as product().
template <typename DA, typename DB, typename Scalar>
void add_product(MatrixX<Scalar>& dst, const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.cols() != b.rows() || dst.rows() != a.rows() || dst.cols() != b.cols()) {
    throw DimensionError("add_product: " + shape_string(dst) + " += " + shape_string(a) + " x " +
                         shape_string(b));
  }
  const Eigen::Ref<const MatrixX<Scalar>, 0, Eigen::OuterStride<>> ra(a.derived());
  const Eigen::Ref<const MatrixX<Scalar>, 0, Eigen::OuterStride<>> rb(b.derived());
  gemm(ra.data(), ra.outerStride(), rb.data(), rb.outerStride(), dst.data(), dst.cols(), a.rows(),
       a.cols(), b.cols(), true);
}

/// Serial left-to-right sum.
template <typename Scalar>
Scalar serial_sum(const Scalar* x, Index n) {
  Scalar s = 0;
  for (Index i = 0; i < n; ++i) s += x[i];
  return s;
}

template <typename Derived>
typename Derived::Scalar serial_sum(const Eigen::DenseBase<Derived>& x) {
  typename Derived::Scalar s = 0;
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index c = 0; c < x.cols(); ++c) s += x(r, c);
  }
  return s;
}

/// Column sums accumulated over rows in order; used for bias gradients.
template <typename Scalar>
MatrixX<Scalar> column_sums(const MatrixX<Scalar>& x) {
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(1, x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar* row = x.data() + r * x.cols();
    Scalar* o = out.data();
    for (Index c = 0; c < x.cols(); ++c) o[c] += row[c];
  }
  return out;
}

/// In-place softmax over the first `n` entries of a row, leaving the rest
/// untouched. Max-subtracted; sums run left to right.
template <typename Scalar>
void softmax_prefix(Scalar* row, Index n) {
  Scalar mx = row[0];
  for (Index j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  Scalar total = 0;
  for (Index j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    total += row[j];
  }
  const Scalar inv = Scalar(1) / total;
  for (Index j = 0; j < n; ++j) row[j] *= inv;
}

/// Row-wise log-sum-exp with max subtraction.
template <typename Scalar>
Scalar log_sum_exp(const Scalar* row, Index n) {
  Scalar mx = row[0];
  for (Index j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  Scalar total = 0;
  for (Index j = 0; j < n; ++j) total += std::exp(row[j] - mx);
  return mx + std::log(total);
}

}  // namespace slw::kernels
