#pragma once

#include "fishervi/market.hpp"

#include <functional>

namespace fishervi {

/// Residuals of the combined equilibrium KKT system at (x, p), with the
/// recovered dual multipliers gamma_nk = max(0, p_k - F_nk(x)).
/// A point is certified as a competitive equilibrium when total is small.
struct KktReport {
  Scalar stationarity_residual = 0;    // inf-norm, active coords + gamma complementarity
  Scalar complementarity_residual = 0; // max_k |p_k (sum_n x_nk - 1)|
  Scalar feasibility_residual = 0;     // max_k (sum_n x_nk - 1)^+
  Mat multipliers_gamma;               // N x K, entrywise >= 0
  Scalar total = 0;                    // max of the three residuals
};

/// One row of the VI map: budget * g / <g, x_row>. Invariant to positive
/// rescaling of g. Throws SingularDenominator when <g, x_row> <= kDenomFloor.
Vec vi_row(Scalar budget, const Vec& grad, const Vec& x_row);

/// The normalized marginal-utility field
///   F_nk(x) = B_n dU_n/dx_nk / sum_k' (dU_n/dx_nk') x_nk',
/// which satisfies sum_k F_nk x_nk = B_n identically. Expects x already
/// clamped to >= kXFloor.
Mat vi_map(const MarketInstance& market, const Mat& x);

KktReport kkt_residual(const MarketInstance& market, const Mat& x, const Vec& p);

/// Exact merit value max_{y in C} <F(x), y - x> over the per-good capacity
/// polytope C = {y >= 0 : sum_n y_nk <= 1}. The per-good maximizer puts unit
/// mass on argmax_n F_nk when positive, else nothing, so the gap is
/// sum_k (max_n F_nk)^+ - <F(x), x>. Always >= 0 for feasible x.
Scalar vi_gap(const MarketInstance& market, const Mat& x);

/// Handle to a fixed-price Nash solver: (market, p) -> demand matrix.
/// Must be reentrant; excess_demand may be evaluated concurrently at
/// distinct prices.
using InnerSolver = std::function<Mat(const MarketInstance&, const Vec&)>;

/// Aggregate excess demand z_k(p) = sum_n x*_nk(p) - 1, where x* solves the
/// fixed-price game via `inner`. Prices must be strictly positive.
Vec excess_demand(const MarketInstance& market, const Vec& p, const InnerSolver& inner);

/// Buyer n's KKT residual for the fixed-price problem max U_n s.t.
/// <p, x_n> = B_n, in the same scale-free units as kkt_residual.
Scalar best_response_residual(const MarketInstance& market, Index n, const Mat& x,
                              const Vec& p);

}  // namespace fishervi
