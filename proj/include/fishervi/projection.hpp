#pragma once

#include "fishervi/types.hpp"

#include <algorithm>
#include <vector>

namespace fishervi {

/// Euclidean projection onto the scaled simplex {p >= 0, sum p = total} by
/// sort-and-threshold. Idempotent; output sums to total within 1e-12.
template <typename Derived>
Eigen::VectorX<typename Derived::Scalar> project_simplex(
    const Eigen::MatrixBase<Derived>& v,
    typename Derived::Scalar total = typename Derived::Scalar(1)) {
  using S = typename Derived::Scalar;
  const Eigen::Index n = v.size();
  if (n == 0) throw DomainError("project_simplex: empty vector");
  if (!(total > S(0))) throw DomainError("project_simplex: total must be positive");
  if (!v.allFinite()) throw DomainError("project_simplex: nonfinite input");

  std::vector<S> u(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) u[static_cast<std::size_t>(i)] = v[i];
  std::sort(u.begin(), u.end(), std::greater<S>());

  // threshold of the largest support whose entries stay positive;
  // the j = 0 candidate always qualifies since total > 0
  S cumulative = S(0);
  S tau = u[0] - total;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumulative += u[static_cast<std::size_t>(j)];
    const S candidate = (cumulative - total) / S(j + 1);
    if (u[static_cast<std::size_t>(j)] - candidate > S(0)) tau = candidate;
  }

  Eigen::VectorX<S> out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = std::max(S(0), v[i] - tau);
  return out;
}

/// Projection onto the budget surface {x >= 0, sum_k p_k x_k = budget} via
/// the change of variables y_k = p_k x_k: project y onto the simplex scaled
/// by the budget, then divide by prices. Euclidean in y-space.
template <typename DerivedX, typename DerivedP>
Eigen::VectorX<typename DerivedX::Scalar> project_budget(
    const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedP>& p,
    typename DerivedX::Scalar budget) {
  using S = typename DerivedX::Scalar;
  if (x.size() != p.size()) throw DomainError("project_budget: size mismatch");
  if (p.minCoeff() <= S(0)) throw DomainError("project_budget: prices must be positive");
  if (!(budget > S(0))) throw DomainError("project_budget: budget must be positive");
  const Eigen::VectorX<S> y = project_simplex((x.array() * p.array()).matrix(), budget);
  return (y.array() / p.array()).matrix();
}

/// V(x | x*) = sum_{nk} x*_nk ln(x*_nk / x_nk), the Lyapunov divergence of
/// the replicator limit. Terms with x*_nk = 0 contribute nothing.
template <typename DerivedX, typename DerivedS>
typename DerivedX::Scalar kl_divergence(const Eigen::MatrixBase<DerivedS>& x_star,
                                        const Eigen::MatrixBase<DerivedX>& x) {
  using S = typename DerivedX::Scalar;
  if (x.rows() != x_star.rows() || x.cols() != x_star.cols())
    throw DomainError("kl_divergence: shape mismatch");
  S v = S(0);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const S s = x_star(i, j);
      if (s <= S(0)) continue;
      if (x(i, j) <= S(0))
        throw DomainError("kl_divergence: x vanishes where reference is positive");
      v += s * std::log(s / x(i, j));
    }
  return v;
}

}  // namespace fishervi
