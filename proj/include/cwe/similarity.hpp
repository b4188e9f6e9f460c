#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "cwe/errors.hpp"

namespace cwe {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using VectorMapF = Eigen::Map<const Vector<float>>;

/// Inner product accumulated in double over eight interleaved lanes.
///
/// Lane j sums the products at indices i with i % 8 == j in increasing i, and
/// the lanes are combined in a fixed order. The result is therefore a pure
/// function of the inputs, independent of SIMD width and call site.
template <typename DerivedA, typename DerivedB>
double dot64(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  constexpr Eigen::Index kLanes = 8;
  const Eigen::Index n = a.size();
  eigen_assert(b.size() == n);
  Eigen::Array<double, kLanes, 1> acc = Eigen::Array<double, kLanes, 1>::Zero();
  Eigen::Index i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    acc += a.template segment<kLanes>(i).template cast<double>().array() *
           b.template segment<kLanes>(i).template cast<double>().array();
  }
  for (Eigen::Index j = 0; i < n; ++i, ++j) {
    acc[j] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename Derived>
double norm64(const Eigen::MatrixBase<Derived>& a) {
  return std::sqrt(dot64(a, a));
}

/// Cosine of the already-computed inner product, clamped to [-1, 1].
inline double cosine_from_dot(double dot, double norm_a, double norm_b) {
  return std::clamp(dot / (norm_a * norm_b), -1.0, 1.0);
}

/// a.b / (|a| |b|), clamped to [-1, 1]. Throws DomainError on a size mismatch
/// or a zero-norm input.
template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw DomainError("cosine_similarity: dimension mismatch");
  const double na = norm64(a);
  const double nb = norm64(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw DomainError("cosine_similarity: zero-norm vector");
  return cosine_from_dot(dot64(a, b), na, nb);
}

}  // namespace cwe
