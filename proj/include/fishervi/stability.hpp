#pragma once

#include "fishervi/vi.hpp"

#include <cmath>
#include <cstdint>

namespace fishervi {

// Strict definiteness cannot be certified at machine precision without a margin.
inline constexpr Scalar kCertMargin = 1e-10;

/// Pseudo-Jacobian of the VI map at a point: NK x NK block matrix whose
/// ((n,k),(m,l)) entry is (1/2) dF_nk/dx_ml. Row/column flattening is
/// n * K + k.
struct PseudoJacobian {
  Index dim = 0;
  Mat entries;
  Mat evaluation_point;
};

enum class MonotonicityVerdict { StrictlyMonotoneAtPoint, Inconclusive };

/// Point-sampled monotonicity certificate: negative definiteness of
/// H + H^T at the sampled points implies F is strictly monotone there, and
/// hence that the variational equilibrium is unique and stable. The test is
/// point-wise sampled, not a global proof.
struct MonotonicityCertificate {
  Scalar lambda_max = 0;  // largest eigenvalue of H + H^T (worst sample)
  MonotonicityVerdict verdict = MonotonicityVerdict::Inconclusive;
  Index sample_points = 0;
};

const char* verdict_name(MonotonicityVerdict v);

/// Central finite differences of vi_map in every coordinate direction.
/// Requires x interior: every entry >= 10 * fd_step (DomainError otherwise).
PseudoJacobian assemble_h(const MarketInstance& market, const Mat& x,
                          Scalar fd_step = 1e-6);

/// Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations;
/// sweeps until every off-diagonal magnitude is below off_tol.
/// Throws EigensolverStalled past max_sweeps.
template <typename Derived>
typename Derived::Scalar jacobi_lambda_max(const Eigen::MatrixBase<Derived>& input,
                                           typename Derived::Scalar off_tol = 1e-12,
                                           int max_sweeps = 100) {
  using S = typename Derived::Scalar;
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> a = input;
  const Eigen::Index n = a.rows();
  if (n != a.cols()) throw DomainError("jacobi_lambda_max: matrix not square");
  if (!a.allFinite()) throw DomainError("jacobi_lambda_max: nonfinite entries");
  if (n == 1) return a(0, 0);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    S off = S(0);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) off = std::max(off, std::abs(a(i, j)));
    if (off < off_tol) {
      S lam = a(0, 0);
      for (Eigen::Index i = 1; i < n; ++i) lam = std::max(lam, a(i, i));
      return lam;
    }
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (std::abs(a(i, j)) < off_tol) continue;
        const S theta = (a(j, j) - a(i, i)) / (S(2) * a(i, j));
        const S t = (theta >= S(0) ? S(1) : S(-1)) /
                    (std::abs(theta) + std::sqrt(theta * theta + S(1)));
        const S c = S(1) / std::sqrt(t * t + S(1));
        const S s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const S aik = a(i, k);
          const S ajk = a(j, k);
          a(i, k) = c * aik - s * ajk;
          a(j, k) = s * aik + c * ajk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const S aki = a(k, i);
          const S akj = a(k, j);
          a(k, i) = c * aki - s * akj;
          a(k, j) = s * aki + c * akj;
        }
      }
  }
  throw EigensolverStalled("jacobi rotations did not converge");
}

/// Verdict is StrictlyMonotoneAtPoint iff lambda_max(H + H^T) < -kCertMargin.
MonotonicityCertificate certify_monotone(const PseudoJacobian& h);

/// Evaluates certify_monotone at n_samples seeded interior feasible points
/// and reports the worst (largest) lambda_max; the verdict is strict only
/// when every sample passes.
MonotonicityCertificate sample_certificate(const MarketInstance& market, Index n_samples,
                                           std::uint64_t seed);

}  // namespace fishervi
