#include "fishervi/solvers.hpp"

#include <cmath>

namespace fishervi {

void SolverConfig::validate() const {
  if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  if (!(bid_floor > 0.0)) throw ValidationError("bid_floor must be positive");
  if (record_every < 1) throw ValidationError("record_every must be >= 1");
  if (!(epsilon_accept > 0.0)) throw ValidationError("epsilon_accept must be positive");
  if (!(alpha_exponent > 0.5 && alpha_exponent <= 1.0))
    throw ValidationError("alpha_exponent must lie in (0.5, 1]");
  if (!(beta_exponent > 0.5 && beta_exponent <= 1.0))
    throw ValidationError("beta_exponent must lie in (0.5, 1]");
}

void SolverConfig::validate_tatonnement() const {
  validate();
  if (!(beta_exponent > alpha_exponent))
    throw ValidationError("tatonnement needs beta_exponent > alpha_exponent");
}

Scalar step_schedule(Index t, Scalar exponent) {
  if (t < 0) throw DomainError("step_schedule: t must be >= 0");
  return std::pow(static_cast<Scalar>(t + 1), -exponent);
}

namespace {

struct TraceRecorder {
  SolverTrace trace;
  Index record_every;
  bool track_lyapunov = false;
  Index last_recorded = -1;

  void record(Index t, const Vec& p, Scalar change, Scalar kkt, Scalar lyapunov,
              bool replace_last) {
    if (replace_last && !trace.price_history.empty()) {
      trace.price_history.pop_back();
      trace.change_norms.pop_back();
      trace.kkt_history.pop_back();
      if (track_lyapunov) trace.lyapunov_history.pop_back();
    }
    trace.price_history.emplace_back(t, p);
    trace.change_norms.emplace_back(t, change);
    trace.kkt_history.emplace_back(t, kkt);
    if (track_lyapunov) trace.lyapunov_history.emplace_back(t, lyapunov);
    last_recorded = t;
  }

  // Records every record_every-th iteration; the final iteration replaces
  // the last sample when it does not land on the stride, keeping the row
  // count at floor(iterations / record_every) + 1.
  void step(Index t, const Vec& p, Scalar change, Scalar kkt, Scalar lyapunov,
            bool final) {
    if (t == last_recorded) return;
    if (t % record_every == 0)
      record(t, p, change, kkt, lyapunov, false);
    else if (final)
      record(t, p, change, kkt, lyapunov, true);
  }
};

Mat clip_innovation(const Mat& f, const Vec& p) {
  Mat innovation = f;
  innovation.rowwise() -= p.transpose();
  return innovation.cwiseMax(-kInnovationClip).cwiseMin(kInnovationClip);
}

}  // namespace

// Largest lambda in (0, 1] keeping x + lambda d componentwise >= 0.005 x.
// Iterates never touch the boundary, so fractional-power gradients stay
// bounded along the whole trajectory.
Scalar fraction_to_boundary(const Vec& x, const Vec& d) {
  Scalar lambda = 1.0;
  for (Index k = 0; k < x.size(); ++k)
    if (d[k] < 0.0) lambda = std::min(lambda, 0.995 * x[k] / -d[k]);
  return lambda;
}

Mat solve_inner_ne(const MarketInstance& market, const Vec& p, const SolverConfig& cfg) {
  cfg.validate();
  if (p.size() != market.n_goods || p.minCoeff() <= 0.0)
    throw DomainError("solve_inner_ne: prices must be strictly positive");

  const Index n_buyers = market.n_buyers;
  const Index n_goods = market.n_goods;

  // Budget-feasible interior start: spend evenly across goods.
  Mat x(n_buyers, n_goods);
  for (Index n = 0; n < n_buyers; ++n)
    x.row(n) = (market.budgets[n] / static_cast<Scalar>(n_goods)) *
               p.cwiseInverse().transpose();

  Vec step = Vec::Ones(n_buyers);
  const Scalar armijo = 1e-4;

  auto own_utility = [&](Index n, const Mat& point) {
    return utility_value(market, n, point);
  };

  for (Index t = 0; t < cfg.max_iters; ++t) {
    Mat x_next = x;
    for (Index n = 0; n < n_buyers; ++n) {
      const Vec x_row = x.row(n).transpose();
      const Vec g = utility_gradient(market, n, clamp_interior(x));
      // project_budget is Euclidean in spend coordinates y = p . x, so the
      // ascent step is taken in the same metric; the projected move then
      // satisfies g . move >= 0 and backtracking always terminates.
      const Vec ascent = g.cwiseQuotient(p.cwiseProduct(p));
      const Scalar base = own_utility(n, x);
      Mat candidate = x;
      bool accepted = false;
      for (int halvings = 0; halvings < 45; ++halvings) {
        const Vec projected =
            project_budget((x_row + step[n] * ascent).eval(), p, market.budgets[n]);
        const Vec direction = projected - x_row;
        const Vec move = fraction_to_boundary(x_row, direction) * direction;
        candidate.row(n) = (x_row + move).transpose();
        if (own_utility(n, candidate) >= base + armijo * g.dot(move)) {
          accepted = true;
          break;
        }
        step[n] *= 0.5;
      }
      if (accepted) {
        x_next.row(n) = candidate.row(n);
        step[n] = std::min(step[n] * 1.6, 1e6);
      }
    }

    const Scalar change = (x_next - x).norm();
    x = x_next;
    if (change <= cfg.epsilon) {
      Scalar worst = 0.0;
      for (Index n = 0; n < n_buyers; ++n)
        worst = std::max(worst, best_response_residual(market, n, x, p));
      if (worst <= 10.0 * cfg.epsilon) return x;
      step = step.cwiseMax(1e-3);  // kick a stalled line search
    }
  }
  throw InnerSolverDiverged("fixed-price Nash solve exceeded max_iters");
}

InnerSolver make_inner_solver(SolverConfig cfg) {
  return [cfg](const MarketInstance& market, const Vec& p) {
    return solve_inner_ne(market, p, cfg);
  };
}

SolveResult solve_tatonnement(const MarketInstance& market, const SolverConfig& cfg) {
  cfg.validate_tatonnement();

  const Index n_goods = market.n_goods;
  Vec p = Vec::Constant(n_goods, 1.0 / static_cast<Scalar>(n_goods));
  Mat x(market.n_buyers, n_goods);
  for (Index n = 0; n < market.n_buyers; ++n)
    x.row(n) = (market.budgets[n] / static_cast<Scalar>(n_goods)) *
               p.cwiseInverse().transpose();

  TraceRecorder recorder{{}, cfg.record_every, false};
  recorder.step(0, p, 0.0, kkt_residual(market, x, p).total, 0.0, false);

  Scalar change = 0.0;
  for (Index t = 0; t < cfg.max_iters; ++t) {
    const Scalar alpha = step_schedule(t, cfg.alpha_exponent);
    const Scalar beta = step_schedule(t, cfg.beta_exponent);

    // Buyers: x_nk <- [x_nk + alpha_t (F_nk(x) - p_k)]^+
    const Mat f = vi_map(market, clamp_interior(x));
    const Mat x_next = (x + alpha * clip_innovation(f, p)).cwiseMax(0.0);

    // Auctioneer observes excess demand from the buyers' current iterates
    // and adjusts prices on the slow timescale, projected onto the simplex.
    const Vec z = x_next.colwise().sum().transpose() - Vec::Ones(n_goods);
    const Vec p_next = project_simplex((p + beta * z).eval());

    change = (x_next - x).norm();
    x = x_next;
    p = p_next;

    const Index iter = t + 1;
    bool done = false;
    Scalar kkt = -1.0;
    if (change <= cfg.epsilon) {
      kkt = kkt_residual(market, x, p).total;
      done = kkt <= cfg.epsilon_accept;
    }
    const bool record_point = iter % cfg.record_every == 0 || done;
    if (record_point) {
      if (kkt < 0.0) kkt = kkt_residual(market, x, p).total;
      recorder.step(iter, p, change, kkt, 0.0, done);
    }
    if (done) {
      recorder.trace.iterations = iter;
      recorder.trace.converged = true;
      return SolveResult{x, p, std::move(recorder.trace)};
    }
  }

  recorder.trace.iterations = cfg.max_iters;
  recorder.step(cfg.max_iters, p, change, kkt_residual(market, x, p).total, 0.0, true);
  throw MaxItersExceeded("tatonnement exceeded max_iters", std::move(recorder.trace), x, p);
}

TradingPostState trading_post_init(const MarketInstance& market) {
  TradingPostState state;
  state.bids.resize(market.n_buyers, market.n_goods);
  for (Index n = 0; n < market.n_buyers; ++n)
    state.bids.row(n).setConstant(market.budgets[n] /
                                  static_cast<Scalar>(market.n_goods));
  state.prices = state.bids.colwise().sum().transpose();
  state.allocation = state.bids.array().rowwise() / state.prices.transpose().array();
  return state;
}

void trading_post_step(const MarketInstance& market, TradingPostState& state,
                       Scalar alpha, Scalar bid_floor) {
  // Bids: b_nk <- b_nk + alpha b_nk (F_nk(x) - p_k), floored to stay
  // strictly positive (the multiplicative update cannot leave 0).
  const Mat f = vi_map(market, clamp_interior(state.allocation));
  state.bids = state.bids
                   .cwiseProduct(Mat::Ones(market.n_buyers, market.n_goods) +
                                 alpha * clip_innovation(f, state.prices))
                   .cwiseMax(bid_floor);

  // Prices are bid sums; allocations are bid shares, so each good's
  // allocation column sums to one at every iteration.
  state.prices = state.bids.colwise().sum().transpose();
  state.allocation = state.bids.array().rowwise() / state.prices.transpose().array();
}

SolveResult solve_trading_post(const MarketInstance& market, const SolverConfig& cfg,
                               const Mat* lyapunov_ref) {
  cfg.validate();

  TradingPostState state = trading_post_init(market);

  TraceRecorder recorder{{}, cfg.record_every, lyapunov_ref != nullptr};
  auto lyapunov = [&](const Mat& point) {
    return lyapunov_ref ? lyapunov_kl(point, *lyapunov_ref) : 0.0;
  };
  recorder.step(0, state.prices, 0.0, kkt_residual(market, state.allocation, state.prices).total,
                lyapunov(state.allocation), false);

  Scalar change = 0.0;
  for (Index t = 0; t < cfg.max_iters; ++t) {
    const Vec p_prev = state.prices;
    trading_post_step(market, state, step_schedule(t, cfg.alpha_exponent), cfg.bid_floor);

    change = (state.prices - p_prev).norm();
    const Index iter = t + 1;
    bool done = false;
    Scalar kkt = -1.0;
    if (change <= cfg.epsilon) {
      kkt = kkt_residual(market, state.allocation, state.prices).total;
      done = kkt <= cfg.epsilon_accept;
    }
    const bool record_point = iter % cfg.record_every == 0 || done;
    if (record_point) {
      if (kkt < 0.0) kkt = kkt_residual(market, state.allocation, state.prices).total;
      recorder.step(iter, state.prices, change, kkt, lyapunov(state.allocation), done);
    }
    if (done) {
      recorder.trace.iterations = iter;
      recorder.trace.converged = true;
      return SolveResult{state.allocation, state.prices, std::move(recorder.trace)};
    }
  }

  recorder.trace.iterations = cfg.max_iters;
  recorder.step(cfg.max_iters, state.prices, change,
                kkt_residual(market, state.allocation, state.prices).total,
                lyapunov(state.allocation), true);
  throw MaxItersExceeded("trading post exceeded max_iters", std::move(recorder.trace),
                         state.allocation, state.prices);
}

Scalar lyapunov_kl(const Mat& x, const Mat& x_star) { return kl_divergence(x_star, x); }

Mat replicator_field(const MarketInstance& market, const Mat& x) {
  const Mat f = vi_map(market, clamp_interior(x));
  const Vec weighted = f.cwiseProduct(x).colwise().sum().transpose();  // sum_m F_mk x_mk
  Mat field(market.n_buyers, market.n_goods);
  for (Index k = 0; k < market.n_goods; ++k)
    field.col(k) = x.col(k).cwiseProduct(f.col(k) - Vec::Constant(market.n_buyers, weighted[k]));
  return field;
}

}  // namespace fishervi
