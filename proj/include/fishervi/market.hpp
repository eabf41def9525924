#pragma once

#include "fishervi/types.hpp"

#include <cstdint>
#include <random>
#include <variant>
#include <vector>

namespace fishervi {

/// Multi-resource contest utility: U_n = q_n / sum_m q_m with effort
/// q_n(x_n) = sum_k a_nk * x_nk^rho_nk. Depends on all buyers' allocations.
struct Tullock {
  Vec a;    // weights, 0 < a_k < 1, sum_k a_k = 1
  Vec rho;  // curvatures, 0 < rho_k < 1
};

/// U_n = prod_k x_nk^a_nk with sum_k a_nk = 1 (homogeneous of degree one).
struct CobbDouglas {
  Vec a;
};

/// U_n = v . x_n, v >= 0 with at least one strictly positive entry.
struct Linear {
  Vec v;
};

using UtilityModel = std::variant<Tullock, CobbDouglas, Linear>;

enum class Family { Tullock, CobbDouglas, Linear };

Family family_of(const UtilityModel& u);
const char* family_name(Family f);

/// A generalized Fisher market: N buyers with unit-sum budgets competing for
/// K goods of unit capacity. Immutable after construction; all operations on
/// it are pure functions, safe to evaluate concurrently.
struct MarketInstance {
  Index n_buyers = 0;
  Index n_goods = 0;
  Vec budgets;                          // length N, positive, sums to 1
  std::vector<UtilityModel> utilities;  // one per buyer

  /// Throws InvariantViolation on any violated type invariant
  /// (budget normalization, parameter ranges, dimension mismatches).
  void validate() const;

  /// True when every buyer is CobbDouglas or Linear (the CCH families
  /// without social influence, where the Eisenberg-Gale program applies).
  bool all_cch() const;

  bool all_family(Family f) const;
};

/// U_n(x_n, x_{-n}) evaluated at the full allocation matrix.
/// Throws DegenerateMarket when a Tullock denominator vanishes.
Scalar utility_value(const MarketInstance& market, Index n, const Mat& x);

/// Gradient of U_n with respect to buyer n's own row of x.
/// Fractional-power variants require x_nk >= kXFloor on row n (DomainError).
Vec utility_gradient(const MarketInstance& market, Index n, const Mat& x);

/// Deterministic seeded instance generation. Tullock/Cobb-Douglas weight
/// rows are drawn on the interior of the simplex, rho uniform on [0.1, 0.9].
/// Budgets are uniform 1/N unless random_budgets is set, in which case they
/// are drawn positive and normalized to sum 1.
MarketInstance random_instance(std::uint64_t seed, Index n_buyers, Index n_goods,
                               Family family, bool random_budgets = false);

/// Strictly positive allocation with every column sum <= 1 (interior of C).
Mat random_interior_allocation(Index n_buyers, Index n_goods, std::mt19937_64& rng);

/// Entrywise max(x, kXFloor).
Mat clamp_interior(const Mat& x);

/// Nonnegative and per-good column sums <= 1 + 1e-9 (constraint set C).
bool is_feasible(const Mat& x);

}  // namespace fishervi
