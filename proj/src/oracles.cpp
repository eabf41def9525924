#include "fishervi/oracles.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <thread>

namespace fishervi {

const char* oracle_method_name(OracleMethod m) {
  switch (m) {
    case OracleMethod::EisenbergGale: return "eisenberg_gale";
    case OracleMethod::ClosedForm: return "closed_form";
    case OracleMethod::BruteForce: return "brute_force";
  }
  return "?";
}

namespace {

Vec recover_prices(const MarketInstance& market, const Mat& x) {
  const Mat f = vi_map(market, clamp_interior(x));
  Vec p = Vec::Zero(market.n_goods);
  for (Index k = 0; k < market.n_goods; ++k) {
    bool any_active = false;
    for (Index n = 0; n < market.n_buyers; ++n) {
      if (x(n, k) <= kActiveTol) continue;
      p[k] = any_active ? std::max(p[k], f(n, k)) : f(n, k);
      any_active = true;
    }
    if (p[k] < 0.0) p[k] = 0.0;
  }
  return p;
}

// Exact projection onto {y >= 0, sum y <= 1} per good: clamp, and project
// onto the unit simplex only where the clamped column still overflows.
Mat project_capacity(const Mat& x) {
  Mat out = x.cwiseMax(0.0);
  for (Index k = 0; k < x.cols(); ++k)
    if (out.col(k).sum() > 1.0) out.col(k) = project_simplex(x.col(k));
  return out;
}

}  // namespace

OracleResult closed_form_cobb_douglas(const MarketInstance& market) {
  if (!market.all_family(Family::CobbDouglas))
    throw WrongFamily("closed form requires an all-Cobb-Douglas market");

  Vec p = Vec::Zero(market.n_goods);
  for (Index n = 0; n < market.n_buyers; ++n)
    p += market.budgets[n] * std::get<CobbDouglas>(market.utilities[n]).a;

  Mat x(market.n_buyers, market.n_goods);
  for (Index n = 0; n < market.n_buyers; ++n)
    x.row(n) = (market.budgets[n] *
                std::get<CobbDouglas>(market.utilities[n]).a.cwiseQuotient(p))
                   .transpose();

  OracleResult result{std::move(x), std::move(p), OracleMethod::ClosedForm, 0.0};
  result.certified_kkt = kkt_residual(market, result.allocation, result.prices).total;
  if (result.certified_kkt > 1e-10)
    throw InvariantViolation("closed-form Cobb-Douglas failed its KKT audit");
  return result;
}

Scalar eg_objective(const MarketInstance& market, const Mat& x) {
  const Mat xc = clamp_interior(x);
  Scalar obj = 0.0;
  for (Index n = 0; n < market.n_buyers; ++n) {
    const Scalar u = utility_value(market, n, xc);
    if (u <= 0.0) return -std::numeric_limits<Scalar>::infinity();
    obj += market.budgets[n] * std::log(u);
  }
  return obj;
}

OracleResult solve_eg(const MarketInstance& market, const SolverConfig& cfg) {
  if (!market.all_cch())
    throw WrongFamily("Eisenberg-Gale requires CCH utilities without social influence");
  cfg.validate();

  Mat x = Mat::Constant(market.n_buyers, market.n_goods,
                        1.0 / static_cast<Scalar>(market.n_buyers));
  Scalar step = 1.0;
  const Scalar armijo = 1e-4;

  for (Index t = 0; t < cfg.max_iters; ++t) {
    const Mat xc = clamp_interior(x);
    Mat grad(market.n_buyers, market.n_goods);
    for (Index n = 0; n < market.n_buyers; ++n) {
      const Scalar u = utility_value(market, n, xc);
      grad.row(n) = (market.budgets[n] / u) * utility_gradient(market, n, xc).transpose();
    }

    const Scalar base = eg_objective(market, x);
    Mat candidate;
    for (int halvings = 0; halvings < 60; ++halvings) {
      const Mat projected = project_capacity(x + step * grad);
      // interior safeguard, shared with the learning solvers
      Scalar lambda = 1.0;
      for (Index n = 0; n < market.n_buyers; ++n)
        lambda = std::min(lambda,
                          fraction_to_boundary(x.row(n).transpose(),
                                               (projected - x).row(n).transpose()));
      candidate = x + lambda * (projected - x);
      const Scalar predicted = grad.cwiseProduct(candidate - x).sum();
      if (eg_objective(market, candidate) >= base + armijo * predicted) break;
      step *= 0.5;
    }

    const Scalar change = (candidate - x).norm();
    x = candidate;
    step = std::min(step * 1.6, 1e6);

    if (change <= cfg.epsilon) {
      const Vec p = recover_prices(market, x);
      const Scalar kkt = kkt_residual(market, x, p).total;
      if (kkt <= 1e-4)
        return OracleResult{x, p, OracleMethod::EisenbergGale, kkt};
    }
  }
  SolverTrace trace;
  trace.iterations = cfg.max_iters;
  throw MaxItersExceeded("Eisenberg-Gale ascent exceeded max_iters", std::move(trace), x,
                         recover_prices(market, x));
}

namespace {

// Per-(buyer, good) lookup tables over the grid values i / grid, so the
// exhaustive scan does no pow/log calls in its inner loop.
struct GapTables {
  const MarketInstance* market = nullptr;
  Index n_buyers = 0, n_goods = 0;
  Scalar budget_sum = 1.0;
  bool has_tullock = false;
  std::vector<Family> family;                      // per buyer
  std::vector<std::vector<Vec>> effort;            // tullock: a x^rho
  std::vector<std::vector<Vec>> effort_slope;      // tullock: a rho x^(rho-1)
  std::vector<std::vector<Vec>> log_term;          // cobb-douglas: a log x
  std::vector<std::vector<Vec>> cd_slope_factor;   // cobb-douglas: a / x
  std::vector<Vec> linear_v;                       // linear: values
  Vec grid_value;                                  // i -> i / grid

  GapTables(const MarketInstance& m, Index grid) : market(&m) {
    n_buyers = m.n_buyers;
    n_goods = m.n_goods;
    budget_sum = m.budgets.sum();
    grid_value.resize(grid + 1);
    for (Index i = 0; i <= grid; ++i)
      grid_value[i] = static_cast<Scalar>(i) / static_cast<Scalar>(grid);

    family.resize(static_cast<std::size_t>(n_buyers));
    effort.resize(static_cast<std::size_t>(n_buyers));
    effort_slope.resize(static_cast<std::size_t>(n_buyers));
    log_term.resize(static_cast<std::size_t>(n_buyers));
    cd_slope_factor.resize(static_cast<std::size_t>(n_buyers));
    linear_v.resize(static_cast<std::size_t>(n_buyers));

    for (Index n = 0; n < n_buyers; ++n) {
      const auto& u = m.utilities[static_cast<std::size_t>(n)];
      family[static_cast<std::size_t>(n)] = family_of(u);
      if (const auto* t = std::get_if<Tullock>(&u)) {
        has_tullock = true;
        auto& ev = effort[static_cast<std::size_t>(n)];
        auto& es = effort_slope[static_cast<std::size_t>(n)];
        ev.resize(static_cast<std::size_t>(n_goods));
        es.resize(static_cast<std::size_t>(n_goods));
        for (Index k = 0; k < n_goods; ++k) {
          Vec v(grid + 1), s(grid + 1);
          for (Index i = 0; i <= grid; ++i) {
            const Scalar xv = grid_value[i];
            v[i] = t->a[k] * std::pow(xv, t->rho[k]);
            s[i] = t->a[k] * t->rho[k] * std::pow(std::max(xv, kXFloor), t->rho[k] - 1.0);
          }
          ev[static_cast<std::size_t>(k)] = std::move(v);
          es[static_cast<std::size_t>(k)] = std::move(s);
        }
      } else if (const auto* cd = std::get_if<CobbDouglas>(&u)) {
        auto& lt = log_term[static_cast<std::size_t>(n)];
        auto& sf = cd_slope_factor[static_cast<std::size_t>(n)];
        lt.resize(static_cast<std::size_t>(n_goods));
        sf.resize(static_cast<std::size_t>(n_goods));
        for (Index k = 0; k < n_goods; ++k) {
          Vec l(grid + 1), s(grid + 1);
          for (Index i = 0; i <= grid; ++i) {
            const Scalar xv = std::max(grid_value[i], kXFloor);
            l[i] = cd->a[k] * std::log(xv);
            s[i] = cd->a[k] / xv;
          }
          lt[static_cast<std::size_t>(k)] = std::move(l);
          sf[static_cast<std::size_t>(k)] = std::move(s);
        }
      } else {
        linear_v[static_cast<std::size_t>(n)] = std::get<Linear>(u).v;
      }
    }
  }

  // Gap at the grid point given per-(n,k) grid indices, +inf on the
  // degenerate set where F is undefined.
  Scalar gap_at(const std::array<int, 4>& idx) const {
    std::array<Scalar, 4> grad{};
    std::array<Scalar, 4> colmax{};
    for (Index k = 0; k < n_goods; ++k) colmax[static_cast<std::size_t>(k)] = 0.0;

    std::array<Scalar, 4> q{};
    Scalar s = 0.0;
    if (has_tullock) {
      for (Index n = 0; n < n_buyers; ++n) {
        Scalar qn = 0.0;
        for (Index k = 0; k < n_goods; ++k)
          qn += effort[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)]
                      [idx[static_cast<std::size_t>(n * n_goods + k)]];
        q[static_cast<std::size_t>(n)] = qn;
        s += qn;
      }
      if (s <= 0.0) return std::numeric_limits<Scalar>::infinity();
    }

    for (Index n = 0; n < n_buyers; ++n) {
      Scalar denom = 0.0;
      const Family fam = family[static_cast<std::size_t>(n)];
      if (fam == Family::Tullock) {
        const Scalar outer = (s - q[static_cast<std::size_t>(n)]) / (s * s);
        for (Index k = 0; k < n_goods; ++k) {
          const int i = idx[static_cast<std::size_t>(n * n_goods + k)];
          const Scalar g = effort_slope[static_cast<std::size_t>(n)]
                               [static_cast<std::size_t>(k)][i] * outer;
          grad[static_cast<std::size_t>(k)] = g;
          denom += g * grid_value[i];
        }
      } else if (fam == Family::CobbDouglas) {
        Scalar logsum = 0.0;
        for (Index k = 0; k < n_goods; ++k)
          logsum += log_term[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)]
                            [idx[static_cast<std::size_t>(n * n_goods + k)]];
        const Scalar u = std::exp(logsum);
        for (Index k = 0; k < n_goods; ++k) {
          const int i = idx[static_cast<std::size_t>(n * n_goods + k)];
          const Scalar g = u * cd_slope_factor[static_cast<std::size_t>(n)]
                                   [static_cast<std::size_t>(k)][i];
          grad[static_cast<std::size_t>(k)] = g;
          denom += g * grid_value[i];
        }
      } else {
        for (Index k = 0; k < n_goods; ++k) {
          const Scalar g = linear_v[static_cast<std::size_t>(n)][k];
          grad[static_cast<std::size_t>(k)] = g;
          denom += g * grid_value[idx[static_cast<std::size_t>(n * n_goods + k)]];
        }
      }
      if (denom <= kDenomFloor) return std::numeric_limits<Scalar>::infinity();
      const Scalar scale = market->budgets[n] / denom;
      for (Index k = 0; k < n_goods; ++k) {
        const Scalar f = scale * grad[static_cast<std::size_t>(k)];
        if (f > colmax[static_cast<std::size_t>(k)]) colmax[static_cast<std::size_t>(k)] = f;
      }
    }

    Scalar gap = -budget_sum;  // <F(x), x> = sum_n B_n identically
    for (Index k = 0; k < n_goods; ++k) gap += colmax[static_cast<std::size_t>(k)];
    return gap;
  }
};

// All per-good columns (i_1, ..., i_N) with sum <= grid.
std::vector<std::array<int, 4>> feasible_columns(Index n_buyers, Index grid) {
  std::vector<std::array<int, 4>> cols;
  std::array<int, 4> c{};
  const auto emit = [&](auto&& self, Index n, int remaining) -> void {
    if (n == n_buyers) {
      cols.push_back(c);
      return;
    }
    for (int i = 0; i <= remaining; ++i) {
      c[static_cast<std::size_t>(n)] = i;
      self(self, n + 1, remaining - i);
    }
  };
  emit(emit, 0, static_cast<int>(grid));
  return cols;
}

Scalar safe_gap(const MarketInstance& market, const Mat& x) {
  try {
    return vi_gap(market, x);
  } catch (const SingularDenominator&) {
    return std::numeric_limits<Scalar>::infinity();
  } catch (const DegenerateMarket&) {
    return std::numeric_limits<Scalar>::infinity();
  }
}

// Local pattern search: full +/-w factorial around the incumbent, halving w
// whenever no neighbor improves. Only ever moves to strictly better points.
Mat refine_minimizer(const MarketInstance& market, const Mat& start, Scalar width) {
  Mat best = start;
  Scalar best_gap = safe_gap(market, best);
  const Index cells = market.n_buyers * market.n_goods;
  const long n_offsets = static_cast<long>(std::pow(3.0, static_cast<double>(cells)));

  Scalar w = width;
  for (int round = 0; round < 400 && w > 1e-10; ++round) {
    bool improved = false;
    for (long code = 0; code < n_offsets; ++code) {
      long rem = code;
      Mat candidate = best;
      bool any = false;
      for (Index n = 0; n < market.n_buyers; ++n)
        for (Index k = 0; k < market.n_goods; ++k) {
          const int digit = static_cast<int>(rem % 3) - 1;
          rem /= 3;
          if (digit != 0) {
            candidate(n, k) += w * digit;
            any = true;
          }
        }
      if (!any) continue;
      candidate = project_capacity(candidate);
      const Scalar g = safe_gap(market, candidate);
      if (g < best_gap) {
        best_gap = g;
        best = candidate;
        improved = true;
      }
    }
    if (!improved) w *= 0.5;
  }
  return best;
}

}  // namespace

OracleResult brute_force_ve(const MarketInstance& market, Index grid) {
  if (market.n_buyers * market.n_goods > 4)
    throw TooLarge("brute_force_ve handles at most n_buyers * n_goods = 4");
  if (grid < 50) throw DomainError("brute_force_ve needs grid >= 50");

  const Index n_buyers = market.n_buyers;
  const Index n_goods = market.n_goods;
  const GapTables tables(market, grid);
  const auto columns = feasible_columns(n_buyers, grid);
  const long n_columns = static_cast<long>(columns.size());

  long inner_total = 1;
  for (Index k = 1; k < n_goods; ++k) inner_total *= n_columns;

  struct ChunkBest {
    Scalar gap = std::numeric_limits<Scalar>::infinity();
    long flat = -1;
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const long n_chunks = std::min<long>(static_cast<long>(hw), n_columns);
  std::vector<ChunkBest> chunk_best(static_cast<std::size_t>(n_chunks));

  auto scan = [&](long chunk) {
    ChunkBest best;
    std::array<int, 4> idx{};
    std::vector<long> digit(static_cast<std::size_t>(n_goods), 0);
    for (long c0 = chunk; c0 < n_columns; c0 += n_chunks) {
      for (Index n = 0; n < n_buyers; ++n)
        idx[static_cast<std::size_t>(n * n_goods)] =
            columns[static_cast<std::size_t>(c0)][static_cast<std::size_t>(n)];
      // odometer over the remaining goods' columns
      std::fill(digit.begin(), digit.end(), 0L);
      long inner = 0;
      while (true) {
        for (Index k = 1; k < n_goods; ++k) {
          const auto& col = columns[static_cast<std::size_t>(digit[static_cast<std::size_t>(k)])];
          for (Index n = 0; n < n_buyers; ++n)
            idx[static_cast<std::size_t>(n * n_goods + k)] =
                col[static_cast<std::size_t>(n)];
        }
        const Scalar g = tables.gap_at(idx);
        const long flat = c0 * inner_total + inner;
        if (g < best.gap || (g == best.gap && flat < best.flat)) {
          best.gap = g;
          best.flat = flat;
        }
        ++inner;
        Index k = 1;
        for (; k < n_goods; ++k) {
          if (++digit[static_cast<std::size_t>(k)] < n_columns) break;
          digit[static_cast<std::size_t>(k)] = 0;
        }
        if (k == n_goods) break;  // odometer wrapped (or K = 1)
      }
    }
    chunk_best[static_cast<std::size_t>(chunk)] = best;
  };

  if (n_chunks == 1) {
    scan(0);
  } else {
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(n_chunks));
    for (long c = 0; c < n_chunks; ++c) workers.emplace_back(scan, c);
    for (auto& w : workers) w.join();
  }

  ChunkBest overall;
  for (const auto& cb : chunk_best)
    if (cb.gap < overall.gap || (cb.gap == overall.gap && cb.flat >= 0 &&
                                 (overall.flat < 0 || cb.flat < overall.flat)))
      overall = cb;
  if (overall.flat < 0)
    throw DomainError("brute_force_ve found no admissible grid point");

  // Rebuild the minimizer from its flat index.
  Mat x(n_buyers, n_goods);
  {
    long flat = overall.flat;
    const long c0 = flat / inner_total;
    long rem = flat % inner_total;
    std::vector<long> digits(static_cast<std::size_t>(n_goods), 0);
    digits[0] = c0;
    for (Index k = 1; k < n_goods; ++k) {
      digits[static_cast<std::size_t>(k)] = rem % n_columns;
      rem /= n_columns;
    }
    for (Index k = 0; k < n_goods; ++k) {
      const auto& col = columns[static_cast<std::size_t>(digits[static_cast<std::size_t>(k)])];
      for (Index n = 0; n < n_buyers; ++n)
        x(n, k) = tables.grid_value[col[static_cast<std::size_t>(n)]];
    }
  }

  const Mat refined = refine_minimizer(market, x, 1.0 / static_cast<Scalar>(grid));
  OracleResult result{refined, recover_prices(market, clamp_interior(refined)),
                      OracleMethod::BruteForce, 0.0};
  result.certified_kkt = kkt_residual(market, result.allocation, result.prices).total;
  return result;
}

}  // namespace fishervi
