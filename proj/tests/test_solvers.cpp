#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fishervi/oracles.hpp"
#include "fishervi/solvers.hpp"

#include <cmath>

using namespace fishervi;

namespace {

MarketInstance single_good_market() {
  MarketInstance m;
  m.n_buyers = 3;
  m.n_goods = 1;
  Vec b(3);
  b << 0.2, 0.3, 0.5;
  m.budgets = b;
  m.utilities = {CobbDouglas{Vec::Ones(1)}, CobbDouglas{Vec::Ones(1)},
                 CobbDouglas{Vec::Ones(1)}};
  m.validate();
  return m;
}

// Identical contest parameters for every buyer; with uniform budgets the
// unique equilibrium splits every good evenly.
MarketInstance symmetric_tullock(Index n_buyers, const Vec& budgets) {
  MarketInstance m;
  m.n_buyers = n_buyers;
  m.n_goods = 2;
  m.budgets = budgets;
  Vec a(2), rho(2);
  a << 0.4, 0.6;
  rho << 0.5, 0.7;
  for (Index n = 0; n < n_buyers; ++n) m.utilities.push_back(Tullock{a, rho});
  m.validate();
  return m;
}

}  // namespace

TEST_CASE("step schedule") {
  CHECK(step_schedule(0, 0.6) == 1.0);
  CHECK(step_schedule(0, 0.9) == 1.0);
  // independent power computation of 6^(-0.6)
  CHECK(step_schedule(5, 0.6) ==
        doctest::Approx(std::exp(-0.6 * std::log(6.0))).epsilon(1e-14));
  CHECK(step_schedule(5, 0.6) == doctest::Approx(0.3413).epsilon(1e-4));
}

TEST_CASE("config validation") {
  SolverConfig cfg;
  CHECK_NOTHROW(cfg.validate_tatonnement());

  cfg.beta_exponent = 0.5;  // violates both the range and the ordering
  CHECK_THROWS_AS(cfg.validate_tatonnement(), ValidationError);

  cfg.beta_exponent = 0.55;  // valid range but slower than alpha
  CHECK_THROWS_AS(cfg.validate_tatonnement(), ValidationError);
  CHECK_NOTHROW(cfg.validate());

  cfg.alpha_exponent = 1.2;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("inner solver: single good demand is pinned by the budget") {
  const MarketInstance m = single_good_market();
  SolverConfig cfg;
  const Mat x = solve_inner_ne(m, Vec::Ones(1), cfg);
  for (Index n = 0; n < 3; ++n)
    CHECK(x(n, 0) == doctest::Approx(m.budgets[n]).epsilon(1e-9));
}

TEST_CASE("inner solver: cobb-douglas demand has the closed form B a / p") {
  const MarketInstance m = random_instance(33, 3, 3, Family::CobbDouglas, true);
  Vec p(3);
  p << 0.5, 0.2, 0.3;
  SolverConfig cfg;
  cfg.epsilon = 1e-7;
  const Mat x = solve_inner_ne(m, p, cfg);
  for (Index n = 0; n < 3; ++n) {
    const Vec expect =
        m.budgets[n] * std::get<CobbDouglas>(m.utilities[n]).a.cwiseQuotient(p);
    CHECK((x.row(n).transpose() - expect).cwiseAbs().maxCoeff() < 1e-5);
    CHECK(best_response_residual(m, n, x, p) <= 10.0 * cfg.epsilon);
  }
}

TEST_CASE("inner solver: symmetric duopoly returns identical demands") {
  const MarketInstance m = symmetric_tullock(2, Vec::Constant(2, 0.5));
  SolverConfig cfg;
  const Mat x = solve_inner_ne(m, Vec::Constant(2, 0.5), cfg);
  CHECK((x.row(0) - x.row(1)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("tatonnement: single-good market converges to p = 1, x_n = B_n") {
  const MarketInstance m = single_good_market();
  SolverConfig cfg;
  const SolveResult r = solve_tatonnement(m, cfg);
  CHECK(r.trace.converged);
  CHECK(r.prices[0] == doctest::Approx(1.0).epsilon(1e-10));
  for (Index n = 0; n < 3; ++n)
    CHECK(r.allocation(n, 0) == doctest::Approx(m.budgets[n]).epsilon(1e-4));
}

TEST_CASE("tatonnement: cobb-douglas run matches the closed form") {
  const MarketInstance m = random_instance(44, 4, 3, Family::CobbDouglas, true);
  const OracleResult oracle = closed_form_cobb_douglas(m);
  SolverConfig cfg;
  const SolveResult r = solve_tatonnement(m, cfg);
  CHECK(r.trace.converged);
  CHECK((r.allocation - oracle.allocation).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("tatonnement: seeded tullock run clears the market") {
  const MarketInstance m = random_instance(7, 5, 3, Family::Tullock);
  SolverConfig cfg;
  const SolveResult r = solve_tatonnement(m, cfg);
  CHECK(r.trace.converged);
  CHECK(kkt_residual(m, r.allocation, r.prices).total <= 1e-3);

  // final prices lie in the simplex, and excess demand at them is small
  CHECK(std::abs(r.prices.sum() - 1.0) <= 1e-10);
  CHECK(r.prices.minCoeff() >= 0.0);
  SolverConfig inner;
  inner.epsilon = 1e-7;
  const Vec z = excess_demand(m, r.prices, make_inner_solver(inner));
  CHECK(z.cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("tatonnement: every recorded price vector stays in the simplex") {
  const MarketInstance m = random_instance(3, 5, 3, Family::Tullock);
  SolverConfig cfg;
  const SolveResult r = solve_tatonnement(m, cfg);
  for (const auto& [t, p] : r.trace.price_history) {
    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-10);
  }
}

TEST_CASE("trace layout: row count follows floor(iterations / record_every) + 1") {
  const MarketInstance m = random_instance(3, 5, 3, Family::Tullock);
  SolverConfig cfg;
  cfg.record_every = 7;
  const SolveResult tat = solve_tatonnement(m, cfg);
  const auto expected_rows = [](const SolverTrace& trace, Index record_every) {
    return trace.iterations / record_every + 1;
  };
  CHECK(static_cast<Index>(tat.trace.change_norms.size()) ==
        expected_rows(tat.trace, cfg.record_every));
  CHECK(tat.trace.change_norms.back().first == tat.trace.iterations);
  CHECK(tat.trace.change_norms.back().second <= cfg.epsilon);

  const SolveResult tp = solve_trading_post(m, cfg);
  CHECK(static_cast<Index>(tp.trace.change_norms.size()) ==
        expected_rows(tp.trace, cfg.record_every));
  CHECK(tp.trace.change_norms.back().second <= cfg.epsilon);
}

TEST_CASE("trading post: single-good prices recover the unit budget mass") {
  const MarketInstance m = single_good_market();
  SolverConfig cfg;
  const SolveResult r = solve_trading_post(m, cfg);
  CHECK(r.trace.converged);
  CHECK(r.prices[0] == doctest::Approx(1.0).epsilon(1e-4));
  for (Index n = 0; n < 3; ++n)
    CHECK(r.allocation(n, 0) == doctest::Approx(m.budgets[n]).epsilon(1e-4));
}

TEST_CASE("trading post: cobb-douglas run matches the closed form") {
  const MarketInstance m = random_instance(44, 4, 3, Family::CobbDouglas, true);
  const OracleResult oracle = closed_form_cobb_douglas(m);
  SolverConfig cfg;
  cfg.epsilon_accept = 2e-5;
  const SolveResult r = solve_trading_post(m, cfg);
  CHECK(r.trace.converged);
  CHECK((r.allocation - oracle.allocation).cwiseAbs().maxCoeff() <= 1e-3);
  // p_k = sum_n B_n a_nk
  CHECK((r.prices - oracle.prices).cwiseAbs().maxCoeff() <= 1e-3);
  // bids (= spend) return each budget
  const Vec spend = r.allocation.cwiseProduct(
      r.prices.transpose().replicate(m.n_buyers, 1)).rowwise().sum();
  CHECK((spend - m.budgets).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("trading post: symmetric market splits every good evenly") {
  const MarketInstance m = symmetric_tullock(4, Vec::Constant(4, 0.25));
  SolverConfig cfg;
  const SolveResult r = solve_trading_post(m, cfg);
  CHECK(r.trace.converged);
  CHECK((r.allocation.array() - 0.25).abs().maxCoeff() <= 1e-4);
}

TEST_CASE("trading post conservation and nonnegativity along the trajectory") {
  const MarketInstance m = random_instance(5, 4, 3, Family::Tullock);
  TradingPostState state = trading_post_init(m);
  SolverConfig cfg;
  for (Index t = 0; t < 500; ++t) {
    trading_post_step(m, state, step_schedule(t, cfg.alpha_exponent), cfg.bid_floor);
    CHECK(state.bids.minCoeff() >= cfg.bid_floor);
    CHECK(state.allocation.minCoeff() >= 0.0);
    const Vec colsums = state.allocation.colwise().sum().transpose();
    CHECK((colsums - Vec::Ones(3)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("one trading-post step matches the replicator field to O(alpha)") {
  // budget asymmetry keeps the trajectory away from its fixed point
  Vec budgets(3);
  budgets << 0.1, 0.3, 0.6;
  const MarketInstance m = symmetric_tullock(3, budgets);
  TradingPostState state = trading_post_init(m);
  SolverConfig cfg;
  Scalar strongest_field = 0.0;
  for (Index t = 0; t < 150; ++t) {
    const Scalar alpha = step_schedule(t, cfg.alpha_exponent);
    const Mat x_before = state.allocation;
    trading_post_step(m, state, alpha, cfg.bid_floor);
    if (t < 20) continue;  // settle into the small-alpha regime
    const Mat discrete = (state.allocation - x_before) / alpha;
    const Mat field = replicator_field(m, x_before);
    strongest_field = std::max(strongest_field, field.cwiseAbs().maxCoeff());
    CHECK((discrete - field).cwiseAbs().maxCoeff() <= 5.0 * alpha);
  }
  CHECK(strongest_field > 1e-3);  // the window saw genuine motion
}

TEST_CASE("lyapunov divergence: zero at the reference, positive elsewhere") {
  Mat x(2, 2), y(2, 2);
  x << 0.5, 0.5, 0.5, 0.5;
  y << 0.8, 0.2, 0.2, 0.8;
  CHECK(lyapunov_kl(x, x) == 0.0);
  CHECK(lyapunov_kl(x, y) > 0.0);
  Mat z = x;
  z(1, 1) = 0.0;
  CHECK_THROWS_AS(lyapunov_kl(z, y), DomainError);
}

TEST_CASE("lyapunov value decays along the trading-post run") {
  Vec budgets(3);
  budgets << 0.1, 0.3, 0.6;
  const MarketInstance m = symmetric_tullock(3, budgets);
  SolverConfig cfg;
  cfg.epsilon_accept = 2e-5;
  cfg.record_every = 1;

  // first pass fixes the equilibrium, second pass records V against it
  const Mat x_star = solve_trading_post(m, cfg).allocation;
  const SolveResult r = solve_trading_post(m, cfg, &x_star);
  REQUIRE(!r.trace.lyapunov_history.empty());

  Scalar v_at_10 = -1.0;
  for (const auto& [t, v] : r.trace.lyapunov_history)
    if (t == 10) v_at_10 = v;
  REQUIRE(v_at_10 >= 0.0);
  const Scalar v_final = r.trace.lyapunov_history.back().second;
  CHECK(v_final <= v_at_10);
  CHECK(v_final < v_at_10);  // the run genuinely moves
}

TEST_CASE("max-iters failure carries the trace and final iterates") {
  const MarketInstance m = random_instance(3, 5, 3, Family::Tullock);
  SolverConfig cfg;
  cfg.max_iters = 25;
  cfg.record_every = 10;
  try {
    solve_tatonnement(m, cfg);
    FAIL("expected MaxItersExceeded");
  } catch (const MaxItersExceeded& e) {
    CHECK(e.trace.iterations == 25);
    CHECK(!e.trace.converged);
    CHECK(e.trace.change_norms.back().first == 25);
    CHECK(static_cast<Index>(e.trace.change_norms.size()) == 25 / 10 + 1);
    CHECK(e.allocation.rows() == 5);
    CHECK(e.prices.size() == 3);
  }
}

TEST_CASE("cross-algorithm agreement on a seeded tullock instance") {
  const MarketInstance m = random_instance(2, 5, 3, Family::Tullock);
  SolverConfig tat_cfg;
  SolverConfig tp_cfg;
  tp_cfg.epsilon_accept = 2e-5;
  const SolveResult tat = solve_tatonnement(m, tat_cfg);
  const SolveResult tp = solve_trading_post(m, tp_cfg);
  CHECK((tat.allocation - tp.allocation).cwiseAbs().maxCoeff() <= 1e-3);
}
