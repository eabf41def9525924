// Acceptance suite: end-to-end checks of the solver library against its
// oracles, printed one verdict line per criterion.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fishervi/io.hpp"
#include "fishervi/oracles.hpp"
#include "fishervi/solvers.hpp"
#include "fishervi/stability.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace fishervi;
namespace fs = std::filesystem;

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void verdict(bool ok, const char* tag, const std::string& detail) {
  std::printf("[%s] %s %s\n", ok ? "PASS" : "FAIL", tag, detail.c_str());
  std::fflush(stdout);
}

struct LearnedRun {
  MarketInstance market;
  SolveResult tatonnement;
  SolveResult trading_post;
};

// The trading post's price-change stop fires while the iterate is still
// coarse, so its certificate gate is tightened; the tatonnement's
// allocation-change stop is already strict at the default gate.
SolverConfig tatonnement_config() { return SolverConfig{}; }
SolverConfig trading_post_config() {
  SolverConfig cfg;
  cfg.epsilon_accept = 2e-5;
  return cfg;
}

// 20 seeded 5x3 Tullock markets solved by both algorithms, shared across
// the uniqueness, certification, and determinism criteria.
const std::vector<LearnedRun>& tullock_runs() {
  static const std::vector<LearnedRun> runs = [] {
    std::vector<LearnedRun> out;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const MarketInstance m = random_instance(seed, 5, 3, Family::Tullock);
      out.push_back(LearnedRun{m, solve_tatonnement(m, tatonnement_config()),
                               solve_trading_post(m, trading_post_config())});
    }
    return out;
  }();
  return runs;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("C1 oracle equivalence on cobb-douglas markets") {
  const auto t0 = std::chrono::steady_clock::now();
  Scalar worst = 0.0;
  bool all_ok = true;
  for (std::uint64_t seed = 101; seed <= 120; ++seed) {
    const Index buyers = 2 + static_cast<Index>(seed % 4);  // N <= 5
    const Index goods = 2 + static_cast<Index>(seed % 3);   // K <= 4
    const MarketInstance m = random_instance(seed, buyers, goods, Family::CobbDouglas, true);
    try {
      const OracleResult cf = closed_form_cobb_douglas(m);
      const OracleResult eg = solve_eg(m, SolverConfig{});
      const SolveResult tat = solve_tatonnement(m, tatonnement_config());
      const SolveResult tp = solve_trading_post(m, trading_post_config());
      const Mat* allocations[4] = {&tat.allocation, &tp.allocation, &eg.allocation,
                                   &cf.allocation};
      for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
          worst = std::max(worst,
                           (*allocations[i] - *allocations[j]).cwiseAbs().maxCoeff());
    } catch (const Error&) {
      all_ok = false;
    }
  }
  const double elapsed = seconds_since(t0);
  const bool ok = all_ok && worst <= 1e-3 && elapsed < 60.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "20 instances x 4 methods: worst pairwise gap %.2e (<= 1e-3), %.1fs (< 60s)",
                worst, elapsed);
  verdict(ok, "C1 oracle-equivalence", buf);
  CHECK(ok);
}

TEST_CASE("C2 uniqueness: both algorithms converge and agree") {
  bool all_converged = true;
  Scalar worst_gap = 0.0;
  Scalar worst_change = 0.0;
  Index worst_iters = 0;
  for (const LearnedRun& run : tullock_runs()) {
    all_converged = all_converged && run.tatonnement.trace.converged &&
                    run.trading_post.trace.converged;
    worst_change = std::max({worst_change,
                             run.tatonnement.trace.change_norms.back().second,
                             run.trading_post.trace.change_norms.back().second});
    worst_iters = std::max({worst_iters, run.tatonnement.trace.iterations,
                            run.trading_post.trace.iterations});
    worst_gap = std::max(worst_gap, (run.tatonnement.allocation -
                                     run.trading_post.allocation).cwiseAbs().maxCoeff());
  }
  const bool ok =
      all_converged && worst_change <= 1e-6 && worst_iters <= 200000 && worst_gap <= 1e-3;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "20 tullock 5x3 instances: change %.2e (<= 1e-6), iters %lld (<= 2e5), "
                "allocation gap %.2e (<= 1e-3)",
                worst_change, static_cast<long long>(worst_iters), worst_gap);
  verdict(ok, "C2 uniqueness-agreement", buf);
  CHECK(ok);
}

TEST_CASE("C3 every converged run carries a KKT certificate and clears the market") {
  Scalar worst_kkt = 0.0;
  Scalar worst_z = 0.0;
  SolverConfig inner;
  inner.epsilon = 1e-7;
  const InnerSolver handle = make_inner_solver(inner);
  for (const LearnedRun& run : tullock_runs()) {
    for (const SolveResult* r : {&run.tatonnement, &run.trading_post}) {
      REQUIRE(r->trace.converged);
      worst_kkt = std::max(worst_kkt,
                           kkt_residual(run.market, r->allocation, r->prices).total);
      if (r->prices.minCoeff() <= 1e-6) continue;  // zero-priced good: unsold, no NE read
      const Vec z = excess_demand(run.market, r->prices, handle);
      const Vec demanded = r->allocation.colwise().sum().transpose();
      for (Index k = 0; k < run.market.n_goods; ++k)
        if (demanded[k] >= 0.999) worst_z = std::max(worst_z, std::abs(z[k]));
    }
  }
  const bool ok = worst_kkt <= 1e-3 && worst_z <= 1e-3;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "40 converged runs: kkt %.2e (<= 1e-3), excess demand %.2e (<= 1e-3)",
                worst_kkt, worst_z);
  verdict(ok, "C3 kkt-certification", buf);
  CHECK(ok);
}

TEST_CASE("C4 stability certificate over sampled interior points") {
  Scalar worst_lambda = -std::numeric_limits<Scalar>::infinity();
  bool all_strict = true;
  for (std::uint64_t seed = 301; seed <= 310; ++seed) {
    const MarketInstance m = random_instance(seed, 5, 3, Family::Tullock);
    const MonotonicityCertificate cert = sample_certificate(m, 50, seed);
    worst_lambda = std::max(worst_lambda, cert.lambda_max);
    all_strict =
        all_strict && cert.verdict == MonotonicityVerdict::StrictlyMonotoneAtPoint;
  }
  const bool ok = all_strict && worst_lambda < 0.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "10 instances x 50 samples: worst lambda_max(H+H^T) %.3e (< 0)",
                worst_lambda);
  verdict(ok, "C4 stability-certificate", buf);
  CHECK(ok);
}

TEST_CASE("C5 monotonicity of the map and of excess demand") {
  Scalar worst_map = -std::numeric_limits<Scalar>::infinity();
  std::mt19937_64 rng(404);
  for (std::uint64_t seed = 401; seed <= 404; ++seed) {
    const MarketInstance m = random_instance(seed, 5, 3, Family::Tullock);
    for (int pair = 0; pair < 50; ++pair) {
      const Mat x1 = random_interior_allocation(m.n_buyers, m.n_goods, rng);
      const Mat x2 = random_interior_allocation(m.n_buyers, m.n_goods, rng);
      worst_map = std::max(
          worst_map, (vi_map(m, x1) - vi_map(m, x2)).cwiseProduct(x1 - x2).sum());
    }
  }

  Scalar worst_z = -std::numeric_limits<Scalar>::infinity();
  {
    const MarketInstance m = random_instance(405, 5, 3, Family::Tullock);
    SolverConfig inner;
    inner.epsilon = 1e-7;
    const InnerSolver handle = make_inner_solver(inner);
    std::uniform_real_distribution<Scalar> price(0.2, 1.5);
    for (int pair = 0; pair < 50; ++pair) {
      Vec p1(m.n_goods), p2(m.n_goods);
      for (Index k = 0; k < m.n_goods; ++k) {
        p1[k] = price(rng);
        p2[k] = price(rng);
      }
      const Vec z1 = excess_demand(m, p1, handle);
      const Vec z2 = excess_demand(m, p2, handle);
      worst_z = std::max(worst_z, (z1 - z2).dot(p1 - p2));
    }
  }
  const bool ok = worst_map <= 1e-9 && worst_z <= 1e-6;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "200 allocation pairs: %.2e (<= 1e-9); 50 price pairs: %.2e (<= 1e-6)",
                worst_map, worst_z);
  verdict(ok, "C5 monotonicity-suites", buf);
  CHECK(ok);
}

TEST_CASE("C6 solvers land within one grid cell of the brute-force VE") {
  const auto t0 = std::chrono::steady_clock::now();
  const Index grid = 200;
  Scalar worst = 0.0;
  for (std::uint64_t seed = 501; seed <= 505; ++seed) {
    const MarketInstance m = random_instance(seed, 2, 2, Family::Tullock);
    const OracleResult bf = brute_force_ve(m, grid);
    const SolveResult tat = solve_tatonnement(m, tatonnement_config());
    const SolveResult tp = solve_trading_post(m, trading_post_config());
    worst = std::max(worst, (tat.allocation - bf.allocation).cwiseAbs().maxCoeff());
    worst = std::max(worst, (tp.allocation - bf.allocation).cwiseAbs().maxCoeff());
  }
  const double elapsed = seconds_since(t0);
  const bool ok = worst <= 1.0 / static_cast<Scalar>(grid) && elapsed < 120.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "5 tullock 2x2 instances: worst distance %.2e (<= %.1e), %.1fs (< 120s)",
                worst, 1.0 / static_cast<Scalar>(grid), elapsed);
  verdict(ok, "C6 brute-force-agreement", buf);
  CHECK(ok);
}

TEST_CASE("C7 numerical hygiene: gradients and the simplex projection") {
  Scalar worst_grad = 0.0;
  for (Family family : {Family::Tullock, Family::CobbDouglas, Family::Linear}) {
    const MarketInstance m = random_instance(601, 4, 3, family);
    std::mt19937_64 rng(606);
    int checked = 0;
    while (checked < 100) {
      const Mat x = random_interior_allocation(m.n_buyers, m.n_goods, rng);
      for (Index n = 0; n < m.n_buyers && checked < 100; ++n, ++checked) {
        const Vec g = utility_gradient(m, n, x);
        Vec fd(m.n_goods);
        Mat probe = x;
        for (Index k = 0; k < m.n_goods; ++k) {
          probe(n, k) = x(n, k) + 1e-6;
          const Scalar up = utility_value(m, n, probe);
          probe(n, k) = x(n, k) - 1e-6;
          const Scalar down = utility_value(m, n, probe);
          probe(n, k) = x(n, k);
          fd[k] = (up - down) / 2e-6;
        }
        worst_grad = std::max(worst_grad, (g - fd).cwiseAbs().maxCoeff() /
                                              std::max(1e-12, g.cwiseAbs().maxCoeff()));
      }
    }
  }

  Scalar worst_proj = 0.0;
  {
    std::mt19937_64 rng(607);
    std::uniform_real_distribution<Scalar> coord(-1.0, 2.0);
    const int steps = 1000;
    for (int trial = 0; trial < 50; ++trial) {
      Vec v(3);
      for (Index i = 0; i < 3; ++i) v[i] = coord(rng);
      const Vec p = project_simplex(v);
      Vec best = Vec::Zero(3);
      Scalar best_dist = std::numeric_limits<Scalar>::infinity();
      for (int i = 0; i <= steps; ++i)
        for (int j = 0; i + j <= steps; ++j) {
          Vec grid_point(3);
          grid_point << static_cast<Scalar>(i) / steps, static_cast<Scalar>(j) / steps,
              static_cast<Scalar>(steps - i - j) / steps;
          const Scalar d = (grid_point - v).squaredNorm();
          if (d < best_dist) {
            best_dist = d;
            best = grid_point;
          }
        }
      worst_proj = std::max(worst_proj, (p - best).cwiseAbs().maxCoeff());
    }
  }
  const bool ok = worst_grad <= 1e-5 && worst_proj <= 2e-3;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "gradient rel err %.2e (<= 1e-5); projection vs grid %.2e (<= 2e-3)",
                worst_grad, worst_proj);
  verdict(ok, "C7 numerical-hygiene", buf);
  CHECK(ok);
}

TEST_CASE("C8 lyapunov trend and the replicator limit of the bid dynamics") {
  // identical contest parameters; mild budget spread keeps the start away
  // from the fixed point so the trajectory actually moves
  auto symmetric_market = [](const Vec& budgets) {
    MarketInstance m;
    m.n_buyers = budgets.size();
    m.n_goods = 2;
    m.budgets = budgets;
    Vec a(2), rho(2);
    a << 0.4, 0.6;
    rho << 0.5, 0.7;
    for (Index n = 0; n < m.n_buyers; ++n) m.utilities.push_back(Tullock{a, rho});
    m.validate();
    return m;
  };

  bool ok = true;
  std::string detail;

  {  // uniform budgets: the symmetric equilibrium, V stays at its floor
    const MarketInstance m = symmetric_market(Vec::Constant(3, 1.0 / 3.0));
    SolverConfig cfg = trading_post_config();
    cfg.record_every = 1;
    const Mat x_star = solve_trading_post(m, cfg).allocation;
    const SolveResult r = solve_trading_post(m, cfg, &x_star);
    Scalar v10 = -1.0, vfinal = r.trace.lyapunov_history.back().second;
    for (const auto& [t, v] : r.trace.lyapunov_history)
      if (t == 10) v10 = v;
    ok = ok && v10 >= 0.0 && vfinal <= v10;
    char buf[80];
    std::snprintf(buf, sizeof(buf), "symmetric: V(final) %.2e <= V(10) %.2e;", vfinal, v10);
    detail += buf;
  }

  {  // spread budgets: strictly decreasing divergence along a moving run
    Vec budgets(3);
    budgets << 0.1, 0.3, 0.6;
    const MarketInstance m = symmetric_market(budgets);
    SolverConfig cfg = trading_post_config();
    cfg.record_every = 1;
    const Mat x_star = solve_trading_post(m, cfg).allocation;
    const SolveResult r = solve_trading_post(m, cfg, &x_star);
    Scalar v10 = -1.0, vfinal = r.trace.lyapunov_history.back().second;
    for (const auto& [t, v] : r.trace.lyapunov_history)
      if (t == 10) v10 = v;
    ok = ok && v10 > 0.0 && vfinal < v10;

    // replicator-field check on the small-alpha stretch of the same run
    TradingPostState state = trading_post_init(m);
    Scalar worst_ratio = 0.0;
    Scalar strongest_field = 0.0;
    for (Index t = 0; t < 150; ++t) {
      const Scalar alpha = step_schedule(t, cfg.alpha_exponent);
      const Mat x_before = state.allocation;
      trading_post_step(m, state, alpha, cfg.bid_floor);
      if (t < 20) continue;
      const Mat field = replicator_field(m, x_before);
      strongest_field = std::max(strongest_field, field.cwiseAbs().maxCoeff());
      const Scalar err =
          ((state.allocation - x_before) / alpha - field).cwiseAbs().maxCoeff();
      worst_ratio = std::max(worst_ratio, err / alpha);
    }
    ok = ok && worst_ratio <= 5.0 && strongest_field > 1e-3;
    char buf[140];
    std::snprintf(buf, sizeof(buf),
                  " spread: V(final) %.2e < V(10) %.2e; field err %.2e*alpha (<= 5)",
                  vfinal, v10, worst_ratio);
    detail += buf;
  }
  verdict(ok, "C8 lyapunov-replicator", detail);
  CHECK(ok);
}

TEST_CASE("C9 identical seed and config produce byte-identical CSVs") {
  ExperimentConfig cfg;
  cfg.instance.seed = 7;
  cfg.instance.buyers = 5;
  cfg.instance.goods = 3;
  cfg.instance.family = Family::Tullock;
  cfg.algorithm = Algorithm::All;  // 5x3 excludes the brute-force oracle
  cfg.solver.epsilon_accept = 2e-5;

  const fs::path root("acceptance_out");
  fs::remove_all(root);
  ExperimentConfig first = cfg;
  first.output_dir = (root / "a").string();
  ExperimentConfig second = cfg;
  second.output_dir = (root / "b").string();
  run_experiment(first);
  run_experiment(second);

  bool ok = true;
  int compared = 0;
  for (const char* algo : {"tatonnement", "trading_post"})
    for (const char* file : {"price_trace.csv", "error_trace.csv", "kkt_trace.csv"}) {
      const std::string a = slurp(root / "a" / algo / file);
      const std::string b = slurp(root / "b" / algo / file);
      ok = ok && !a.empty() && a == b;
      ++compared;
    }
  const std::string cert_a = slurp(root / "a" / "certificate.csv");
  const std::string cert_b = slurp(root / "b" / "certificate.csv");
  ok = ok && !cert_a.empty() && cert_a == cert_b;
  ++compared;

  char buf[80];
  std::snprintf(buf, sizeof(buf), "%d artifacts byte-identical across reruns", compared);
  verdict(ok, "C9 determinism", buf);
  CHECK(ok);
}
