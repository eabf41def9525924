#pragma once

#include "fishervi/projection.hpp"
#include "fishervi/vi.hpp"

#include <utility>
#include <vector>

namespace fishervi {

// Converged runs must additionally certify a KKT residual at or below this
// before reporting converged; iterate stalling alone is not an equilibrium
// certificate.
inline constexpr Scalar kKktAccept = 1e-3;

// Cap on |F - p| innovations inside the learning loops. Fractional-power
// gradients explode when an iterate overshoots to the boundary and gets
// clamped at x_floor; the cap bounds the resulting jump. Inactive near
// equilibrium, where |F - p| << 1.
inline constexpr Scalar kInnovationClip = 10.0;

struct SolverConfig {
  Index max_iters = 200000;
  Scalar epsilon = 1e-6;        // stopping tolerance on the iterate-change norm
  Scalar alpha_exponent = 0.6;  // buyer step 1/(t+1)^alpha_exponent
  Scalar beta_exponent = 0.9;   // auctioneer step 1/(t+1)^beta_exponent
  Scalar bid_floor = 1e-9;      // multiplicative updates cannot recover from 0
  Index record_every = 10;
  Scalar epsilon_accept = kKktAccept;

  /// Exponent range checks common to both algorithms (both in (0.5, 1] so
  /// sum alpha_t diverges while sum alpha_t^2 converges).
  void validate() const;

  /// Additionally requires beta_exponent > alpha_exponent so that
  /// beta_t / alpha_t -> 0 (the two-timescale ordering).
  void validate_tatonnement() const;

  bool operator==(const SolverConfig&) const = default;
};

struct SolverTrace {
  Index iterations = 0;
  std::vector<std::pair<Index, Vec>> price_history;
  std::vector<std::pair<Index, Scalar>> change_norms;    // ||x(t) - x(t-1)||_2
  std::vector<std::pair<Index, Scalar>> kkt_history;     // kkt_residual total
  std::vector<std::pair<Index, Scalar>> lyapunov_history;  // trading post only
  bool converged = false;
};

struct MaxItersExceeded : Error {
  SolverTrace trace;
  Mat allocation;
  Vec prices;
  MaxItersExceeded(const std::string& what, SolverTrace trace_, Mat allocation_,
                   Vec prices_)
      : Error(what),
        trace(std::move(trace_)),
        allocation(std::move(allocation_)),
        prices(std::move(prices_)) {}
};

struct SolveResult {
  Mat allocation;
  Vec prices;
  SolverTrace trace;
};

/// 1/(t+1)^exponent.
Scalar step_schedule(Index t, Scalar exponent);

/// Largest lambda in (0, 1] with x + lambda d >= 0.005 x componentwise, the
/// interior safeguard used by the ascent line searches.
Scalar fraction_to_boundary(const Vec& x, const Vec& d);

/// Nash equilibrium of the fixed-price game by simultaneous projected
/// gradient ascent: each buyer ascends the gradient of their own utility
/// (with backtracking on the step) and is projected back onto the budget
/// surface. Stops when the joint iterate change is <= cfg.epsilon and every
/// buyer's best-response KKT residual is <= 10 * cfg.epsilon.
Mat solve_inner_ne(const MarketInstance& market, const Vec& p, const SolverConfig& cfg);

/// Wraps solve_inner_ne with a fixed config as a reentrant handle.
InnerSolver make_inner_solver(SolverConfig cfg);

/// Two-timescale tatonnement: buyers take gradient-like steps
///   x_nk <- [x_nk + alpha_t (F_nk(x) - p_k)]^+
/// on the fast schedule while the auctioneer moves prices by the observed
/// excess demand on the slow one, p <- Pi_P[p + beta_t z]. Stops on
/// ||x(t) - x(t-1)||_2 <= epsilon with the KKT residual certified.
SolveResult solve_tatonnement(const MarketInstance& market, const SolverConfig& cfg);

/// Bid/price/allocation state of the trading post mechanism. Allocations
/// are bid shares, so every allocation column sums to one exactly.
struct TradingPostState {
  Mat bids;
  Vec prices;  // p_k = sum_n b_nk
  Mat allocation;
};

/// Every buyer opens by spreading their budget evenly over the goods.
TradingPostState trading_post_init(const MarketInstance& market);

/// One bid update b_nk <- b_nk + alpha b_nk (F_nk(x) - p_k) with the bid
/// floor applied, followed by the price and allocation reads.
void trading_post_step(const MarketInstance& market, TradingPostState& state,
                       Scalar alpha, Scalar bid_floor);

/// Trading post learning: bids follow the multiplicative rule above on the
/// alpha_t schedule. Stops on ||p(t) - p(t-1)||_2 <= epsilon with the KKT
/// residual certified. When lyapunov_ref is supplied the trace records the
/// KL divergence to it.
SolveResult solve_trading_post(const MarketInstance& market, const SolverConfig& cfg,
                               const Mat* lyapunov_ref = nullptr);

/// V(x | x*) = sum_nk x*_nk ln(x*_nk / x_nk); zero at x = x*.
Scalar lyapunov_kl(const Mat& x, const Mat& x_star);

/// Continuous-time limit of the trading-post bid dynamics in allocation
/// space: R_nk = x_nk (F_nk(x) - sum_m F_mk(x) x_mk).
Mat replicator_field(const MarketInstance& market, const Mat& x);

}  // namespace fishervi
