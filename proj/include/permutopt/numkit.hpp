#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "permutopt/error.hpp"
#include "permutopt/rng.hpp"

namespace permutopt {

using Index = Eigen::Index;

/// Row-major storage everywhere: flattening a matrix parameter is a plain
/// view of its data, so coordinate indices seen by the permutation operator
/// match row-major order.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using DenseMatrix = MatrixX<double>;
using Vector = VectorX<double>;

std::string shape_string(Index rows, Index cols);

template <typename Derived>
std::string shape_string(const Eigen::MatrixBase<Derived>& m) {
  return shape_string(m.rows(), m.cols());
}

/// Checked matrix product.
template <typename A, typename B>
MatrixX<typename A::Scalar> mat_mul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("mat_mul: cannot multiply " + shape_string(a) + " by " + shape_string(b));
  }
  return a * b;
}

template <typename Derived>
typename Derived::Scalar frobenius_norm(const Eigen::MatrixBase<Derived>& m) {
  return m.norm();
}

/// Entry-wise max(0, x). Returns an expression; it borrows `m`.
template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& m) {
  return m.cwiseMax(typename Derived::Scalar(0));
}

/// 0/1 mask of strictly positive entries (ReLU subgradient, 0 at the kink).
template <typename Derived>
auto relu_gate(const Eigen::MatrixBase<Derived>& m) {
  using S = typename Derived::Scalar;
  return m.unaryExpr([](S v) { return v > S(0) ? S(1) : S(0); });
}

/// sign(x) with sign(0) = 0.
template <typename Derived>
auto sign_or_zero(const Eigen::MatrixBase<Derived>& m) {
  using S = typename Derived::Scalar;
  return m.unaryExpr([](S v) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
}

/// Euclidean norm whose value depends only on the multiset of entries: the
/// squares are summed in ascending order. Any reordering of `v` yields the
/// identical double.
double order_invariant_norm(std::span<const double> v);

template <typename Derived>
double order_invariant_norm(const Eigen::DenseBase<Derived>& v) {
  const Vector tmp = v.derived().template cast<double>().reshaped();
  return order_invariant_norm(std::span<const double>(tmp.data(), static_cast<std::size_t>(tmp.size())));
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().allFinite();
}

DenseMatrix random_uniform_matrix(Index rows, Index cols, SeededRng& rng, double lo = 0.0, double hi = 1.0);
DenseMatrix random_normal_matrix(Index rows, Index cols, SeededRng& rng, double scale = 1.0);

/// Plain numeric CSV, one matrix row per line. With `has_header` the first line
/// is skipped. Ragged rows or non-numeric cells raise ParseError with row/col.
DenseMatrix read_csv_matrix(std::istream& in, bool has_header = false);
DenseMatrix load_csv_matrix(const std::string& path, bool has_header = false);
void write_csv_matrix(std::ostream& out, const DenseMatrix& m);

/// Shortest decimal text that round-trips `v`.
std::string format_double(double v);

}  // namespace permutopt
