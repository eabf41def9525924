#include "fishervi/vi.hpp"

#include <cmath>

namespace fishervi {

Vec vi_row(Scalar budget, const Vec& grad, const Vec& x_row) {
  const Scalar denom = grad.dot(x_row);
  if (!(denom > kDenomFloor))
    throw SingularDenominator("directional-derivative sum below denom_floor");
  return (budget / denom) * grad;
}

Mat vi_map(const MarketInstance& market, const Mat& x) {
  Mat f(market.n_buyers, market.n_goods);
  for (Index n = 0; n < market.n_buyers; ++n) {
    const Vec g = utility_gradient(market, n, x);
    f.row(n) = vi_row(market.budgets[n], g, x.row(n).transpose()).transpose();
  }
  return f;
}

KktReport kkt_residual(const MarketInstance& market, const Mat& x, const Vec& p) {
  if (x.minCoeff() < 0.0) throw DomainError("kkt_residual: x must be nonnegative");
  if (p.size() != market.n_goods || p.minCoeff() < 0.0)
    throw DomainError("kkt_residual: p must be nonnegative with length n_goods");

  const Mat f = vi_map(market, clamp_interior(x));

  KktReport report;
  report.multipliers_gamma =
      (p.transpose().replicate(market.n_buyers, 1) - f).cwiseMax(0.0);

  Scalar stationarity = 0.0;
  Scalar gamma_comp = 0.0;
  for (Index n = 0; n < market.n_buyers; ++n)
    for (Index k = 0; k < market.n_goods; ++k) {
      const Scalar gamma = report.multipliers_gamma(n, k);
      if (x(n, k) > kActiveTol)
        stationarity = std::max(stationarity, std::abs(f(n, k) - p[k] + gamma));
      gamma_comp = std::max(gamma_comp, std::min(x(n, k), std::abs(gamma * x(n, k))));
    }
  report.stationarity_residual = stationarity + gamma_comp;

  const Vec oversupply = x.colwise().sum().transpose() - Vec::Ones(market.n_goods);
  report.complementarity_residual = (p.array() * oversupply.array()).abs().maxCoeff();
  report.feasibility_residual = std::max(0.0, oversupply.maxCoeff());
  report.total = std::max({report.stationarity_residual, report.complementarity_residual,
                           report.feasibility_residual});
  return report;
}

Scalar vi_gap(const MarketInstance& market, const Mat& x) {
  if (!is_feasible(x)) throw DomainError("vi_gap: x is not feasible for C");
  const Mat f = vi_map(market, clamp_interior(x));
  Scalar best = 0.0;
  for (Index k = 0; k < market.n_goods; ++k)
    best += std::max(0.0, f.col(k).maxCoeff());
  return best - f.cwiseProduct(x).sum();
}

Vec excess_demand(const MarketInstance& market, const Vec& p, const InnerSolver& inner) {
  if (p.size() != market.n_goods || p.minCoeff() <= 0.0)
    throw DomainError("excess_demand: prices must be strictly positive");
  const Mat demand = inner(market, p);
  return demand.colwise().sum().transpose() - Vec::Ones(market.n_goods);
}

Scalar best_response_residual(const MarketInstance& market, Index n, const Mat& x,
                              const Vec& p) {
  const Vec g = utility_gradient(market, n, clamp_interior(x));
  const Vec f = vi_row(market.budgets[n], g, x.row(n).transpose().cwiseMax(kXFloor));
  Scalar stationarity = 0.0;
  Scalar gamma_comp = 0.0;
  for (Index k = 0; k < market.n_goods; ++k) {
    const Scalar gamma = std::max(0.0, p[k] - f[k]);
    if (x(n, k) > kActiveTol)
      stationarity = std::max(stationarity, std::abs(f[k] - p[k] + gamma));
    gamma_comp = std::max(gamma_comp, std::min(x(n, k), std::abs(gamma * x(n, k))));
  }
  return stationarity + gamma_comp;
}

}  // namespace fishervi
