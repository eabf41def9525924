#include "fishervi/market.hpp"

#include <cmath>
#include <cstdio>

namespace fishervi {

namespace {

void check_simplex_row(const Vec& a, Index n, const char* what, bool strict_upper) {
  if (a.size() == 0) throw InvariantViolation(std::string(what) + " row empty");
  const Scalar upper = strict_upper ? 1.0 : 1.0 + 1e-12;
  for (Index k = 0; k < a.size(); ++k) {
    if (!(a[k] > 0.0 && a[k] < upper))
      throw InvariantViolation(std::string(what) + " entry out of (0,1) for buyer " +
                               std::to_string(n));
  }
  if (std::abs(a.sum() - 1.0) > 1e-12)
    throw InvariantViolation(std::string(what) + " row does not sum to 1 for buyer " +
                             std::to_string(n));
}

}  // namespace

Family family_of(const UtilityModel& u) {
  if (std::holds_alternative<Tullock>(u)) return Family::Tullock;
  if (std::holds_alternative<CobbDouglas>(u)) return Family::CobbDouglas;
  return Family::Linear;
}

const char* family_name(Family f) {
  switch (f) {
    case Family::Tullock: return "tullock";
    case Family::CobbDouglas: return "cobb_douglas";
    case Family::Linear: return "linear";
  }
  return "?";
}

void MarketInstance::validate() const {
  if (n_buyers < 1 || n_goods < 1)
    throw InvariantViolation("market needs at least one buyer and one good");
  if (budgets.size() != n_buyers)
    throw InvariantViolation("budget vector length != n_buyers");
  if (static_cast<Index>(utilities.size()) != n_buyers)
    throw InvariantViolation("one utility model required per buyer");
  for (Index n = 0; n < n_buyers; ++n)
    if (!(budgets[n] > 0.0))
      throw InvariantViolation("budget of buyer " + std::to_string(n) + " not positive");
  if (std::abs(budgets.sum() - 1.0) > 1e-12)
    throw InvariantViolation("budgets must sum to 1");

  // The contest denominator sums efforts over every buyer, so Tullock
  // markets cannot mix in other families.
  bool any_tullock = false;
  for (const auto& u : utilities) any_tullock |= family_of(u) == Family::Tullock;
  if (any_tullock && !all_family(Family::Tullock))
    throw InvariantViolation("tullock buyers require an all-tullock market");

  for (Index n = 0; n < n_buyers; ++n) {
    const UtilityModel& u = utilities[n];
    if (const auto* t = std::get_if<Tullock>(&u)) {
      if (t->a.size() != n_goods || t->rho.size() != n_goods)
        throw InvariantViolation("tullock parameter length != n_goods");
      check_simplex_row(t->a, n, "tullock a", /*strict_upper=*/true);
      for (Index k = 0; k < n_goods; ++k)
        if (!(t->rho[k] > 0.0 && t->rho[k] < 1.0))
          throw InvariantViolation("tullock rho out of (0,1) for buyer " + std::to_string(n));
    } else if (const auto* cd = std::get_if<CobbDouglas>(&u)) {
      if (cd->a.size() != n_goods)
        throw InvariantViolation("cobb-douglas parameter length != n_goods");
      check_simplex_row(cd->a, n, "cobb-douglas a", /*strict_upper=*/false);
    } else {
      const auto& lin = std::get<Linear>(u);
      if (lin.v.size() != n_goods)
        throw InvariantViolation("linear parameter length != n_goods");
      if (lin.v.minCoeff() < 0.0)
        throw InvariantViolation("linear values must be nonnegative");
      if (lin.v.maxCoeff() <= 0.0)
        throw InvariantViolation("linear utility needs one strictly positive value");
    }
  }
}

bool MarketInstance::all_cch() const {
  for (const auto& u : utilities)
    if (family_of(u) == Family::Tullock) return false;
  return true;
}

bool MarketInstance::all_family(Family f) const {
  for (const auto& u : utilities)
    if (family_of(u) != f) return false;
  return true;
}

namespace {

// Contest efforts q_m(x_m) for every buyer; entries are nonnegative.
Vec tullock_efforts(const MarketInstance& market, const Mat& x) {
  Vec q = Vec::Zero(market.n_buyers);
  for (Index m = 0; m < market.n_buyers; ++m) {
    const auto& t = std::get<Tullock>(market.utilities[m]);
    Scalar s = 0.0;
    for (Index k = 0; k < market.n_goods; ++k)
      s += t.a[k] * std::pow(x(m, k), t.rho[k]);
    q[m] = s;
  }
  return q;
}

void check_shape(const MarketInstance& market, Index n, const Mat& x) {
  if (x.rows() != market.n_buyers || x.cols() != market.n_goods)
    throw DomainError("allocation shape mismatch");
  if (n < 0 || n >= market.n_buyers) throw DomainError("buyer index out of range");
}

}  // namespace

Scalar utility_value(const MarketInstance& market, Index n, const Mat& x) {
  check_shape(market, n, x);
  if (x.minCoeff() < 0.0) throw DomainError("allocation must be entrywise nonnegative");

  const UtilityModel& u = market.utilities[n];
  if (std::holds_alternative<Tullock>(u)) {
    const Vec q = tullock_efforts(market, x);
    const Scalar s = q.sum();
    if (s <= 0.0) throw DegenerateMarket("all contest efforts are zero");
    return q[n] / s;
  }
  if (const auto* cd = std::get_if<CobbDouglas>(&u)) {
    Scalar log_u = 0.0;
    for (Index k = 0; k < market.n_goods; ++k) {
      if (x(n, k) <= 0.0) return 0.0;
      log_u += cd->a[k] * std::log(x(n, k));
    }
    return std::exp(log_u);
  }
  return std::get<Linear>(u).v.dot(x.row(n));
}

Vec utility_gradient(const MarketInstance& market, Index n, const Mat& x) {
  check_shape(market, n, x);

  const UtilityModel& u = market.utilities[n];
  if (const auto* t = std::get_if<Tullock>(&u)) {
    for (Index k = 0; k < market.n_goods; ++k)
      if (x(n, k) < kXFloor)
        throw DomainError("tullock gradient needs x_nk >= x_floor on own row");
    const Vec q = tullock_efforts(market, x);
    const Scalar s = q.sum();
    if (s <= 0.0) throw DegenerateMarket("all contest efforts are zero");
    // dU_n/dx_nk = a_k rho_k x_nk^(rho_k - 1) * (S - q_n) / S^2
    const Scalar outer = (s - q[n]) / (s * s);
    Vec g(market.n_goods);
    for (Index k = 0; k < market.n_goods; ++k)
      g[k] = t->a[k] * t->rho[k] * std::pow(x(n, k), t->rho[k] - 1.0) * outer;
    return g;
  }
  if (const auto* cd = std::get_if<CobbDouglas>(&u)) {
    for (Index k = 0; k < market.n_goods; ++k)
      if (x(n, k) < kXFloor)
        throw DomainError("cobb-douglas gradient needs x_nk >= x_floor on own row");
    const Scalar val = utility_value(market, n, x);
    Vec g(market.n_goods);
    for (Index k = 0; k < market.n_goods; ++k) g[k] = cd->a[k] * val / x(n, k);
    return g;
  }
  return std::get<Linear>(u).v;
}

MarketInstance random_instance(std::uint64_t seed, Index n_buyers, Index n_goods,
                               Family family, bool random_budgets) {
  if (n_buyers < 1 || n_goods < 1)
    throw DomainError("random_instance needs n_buyers >= 1 and n_goods >= 1");

  std::mt19937_64 rng(seed);
  // The lower bound keeps normalized weights away from 0; near-degenerate
  // weights put equilibrium coordinates on the boundary, where the additive
  // buyer update of the tatonnement loop turns stiff.
  std::uniform_real_distribution<Scalar> unit(0.2, 1.0);
  std::uniform_real_distribution<Scalar> rho_range(0.1, 0.9);

  MarketInstance market;
  market.n_buyers = n_buyers;
  market.n_goods = n_goods;

  if (random_budgets) {
    Vec b(n_buyers);
    for (Index n = 0; n < n_buyers; ++n) b[n] = unit(rng);
    market.budgets = b / b.sum();
  } else {
    market.budgets = Vec::Constant(n_buyers, 1.0 / static_cast<Scalar>(n_buyers));
  }

  auto draw_simplex_row = [&]() {
    Vec a(n_goods);
    for (Index k = 0; k < n_goods; ++k) a[k] = unit(rng);
    a /= a.sum();
    return a;
  };

  market.utilities.reserve(static_cast<std::size_t>(n_buyers));
  for (Index n = 0; n < n_buyers; ++n) {
    switch (family) {
      case Family::Tullock: {
        Tullock t;
        t.a = draw_simplex_row();
        t.rho = Vec(n_goods);
        for (Index k = 0; k < n_goods; ++k) t.rho[k] = rho_range(rng);
        market.utilities.emplace_back(std::move(t));
        break;
      }
      case Family::CobbDouglas:
        market.utilities.emplace_back(CobbDouglas{draw_simplex_row()});
        break;
      case Family::Linear: {
        Vec v(n_goods);
        for (Index k = 0; k < n_goods; ++k) v[k] = unit(rng);
        market.utilities.emplace_back(Linear{std::move(v)});
        break;
      }
    }
  }
  market.validate();
  return market;
}

Mat random_interior_allocation(Index n_buyers, Index n_goods, std::mt19937_64& rng) {
  std::uniform_real_distribution<Scalar> weight(0.05, 1.0);
  std::uniform_real_distribution<Scalar> fill(0.4, 0.95);
  Mat x(n_buyers, n_goods);
  for (Index k = 0; k < n_goods; ++k) {
    Vec col(n_buyers);
    for (Index n = 0; n < n_buyers; ++n) col[n] = weight(rng);
    x.col(k) = col * (fill(rng) / col.sum());
  }
  return x;
}

Mat clamp_interior(const Mat& x) { return x.cwiseMax(kXFloor); }

bool is_feasible(const Mat& x) {
  if (x.minCoeff() < 0.0) return false;
  return (x.colwise().sum().array() <= 1.0 + 1e-9).all();
}

}  // namespace fishervi
