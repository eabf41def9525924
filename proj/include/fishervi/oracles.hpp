#pragma once

#include "fishervi/solvers.hpp"

namespace fishervi {

enum class OracleMethod { EisenbergGale, ClosedForm, BruteForce };

const char* oracle_method_name(OracleMethod m);

/// Ground-truth equilibrium from an independent route. certified_kkt always
/// holds kkt_residual(allocation, prices).total, stored for audit.
struct OracleResult {
  Mat allocation;
  Vec prices;
  OracleMethod method = OracleMethod::ClosedForm;
  Scalar certified_kkt = 0;
};

/// Cobb-Douglas markets clear at p_k = sum_n B_n a_nk with demands
/// x_nk = B_n a_nk / p_k. The result is audited through kkt_residual
/// (must be <= 1e-10) before it is returned.
OracleResult closed_form_cobb_douglas(const MarketInstance& market);

/// Eisenberg-Gale program for CCH markets without social influence:
/// maximize sum_n B_n log U_n(x_n) over the per-good capacity polytope by
/// projected gradient ascent with backtracking. Prices are recovered as the
/// max of F_nk over buyers active on good k.
OracleResult solve_eg(const MarketInstance& market, const SolverConfig& cfg);

/// sum_n B_n log U_n(x_n) with interior clamping, the EG objective.
Scalar eg_objective(const MarketInstance& market, const Mat& x);

/// Exhaustive search over feasible grid allocations minimizing vi_gap,
/// followed by local pattern-search refinement. Desk-scale only: requires
/// n_buyers * n_goods <= 4 and grid >= 50. Grid evaluation is threaded;
/// the argmin is deterministic (ties break on the lowest flat index).
OracleResult brute_force_ve(const MarketInstance& market, Index grid);

}  // namespace fishervi
