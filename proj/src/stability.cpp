#include "fishervi/stability.hpp"

#include <random>

namespace fishervi {

const char* verdict_name(MonotonicityVerdict v) {
  return v == MonotonicityVerdict::StrictlyMonotoneAtPoint ? "strictly_monotone_at_point"
                                                           : "inconclusive";
}

PseudoJacobian assemble_h(const MarketInstance& market, const Mat& x, Scalar fd_step) {
  if (!(fd_step > 0.0)) throw DomainError("assemble_h: fd_step must be positive");
  if (x.minCoeff() < 10.0 * fd_step)
    throw DomainError("assemble_h: x too close to the boundary for fd_step");

  const Index dim = market.n_buyers * market.n_goods;
  PseudoJacobian h;
  h.dim = dim;
  h.evaluation_point = x;
  h.entries.resize(dim, dim);

  Mat probe = x;
  for (Index m = 0; m < market.n_buyers; ++m)
    for (Index l = 0; l < market.n_goods; ++l) {
      const Index col = m * market.n_goods + l;
      probe(m, l) = x(m, l) + fd_step;
      const Mat f_plus = vi_map(market, probe);
      probe(m, l) = x(m, l) - fd_step;
      const Mat f_minus = vi_map(market, probe);
      probe(m, l) = x(m, l);
      const Mat column = (f_plus - f_minus) / (4.0 * fd_step);  // 1/2 * central diff
      for (Index n = 0; n < market.n_buyers; ++n)
        for (Index k = 0; k < market.n_goods; ++k)
          h.entries(n * market.n_goods + k, col) = column(n, k);
    }
  if (!h.entries.allFinite()) throw DomainError("assemble_h: nonfinite entries");
  return h;
}

MonotonicityCertificate certify_monotone(const PseudoJacobian& h) {
  MonotonicityCertificate cert;
  cert.sample_points = 1;
  const Mat symmetrized = h.entries + h.entries.transpose();
  cert.lambda_max = jacobi_lambda_max(symmetrized);
  cert.verdict = cert.lambda_max < -kCertMargin ? MonotonicityVerdict::StrictlyMonotoneAtPoint
                                                : MonotonicityVerdict::Inconclusive;
  return cert;
}

MonotonicityCertificate sample_certificate(const MarketInstance& market, Index n_samples,
                                           std::uint64_t seed) {
  if (n_samples < 1) throw DomainError("sample_certificate: n_samples must be >= 1");
  std::mt19937_64 rng(seed);

  MonotonicityCertificate worst;
  worst.sample_points = n_samples;
  worst.verdict = MonotonicityVerdict::StrictlyMonotoneAtPoint;
  worst.lambda_max = -std::numeric_limits<Scalar>::infinity();
  for (Index s = 0; s < n_samples; ++s) {
    const Mat x = random_interior_allocation(market.n_buyers, market.n_goods, rng);
    const MonotonicityCertificate sample = certify_monotone(assemble_h(market, x));
    worst.lambda_max = std::max(worst.lambda_max, sample.lambda_max);
    if (sample.verdict != MonotonicityVerdict::StrictlyMonotoneAtPoint)
      worst.verdict = MonotonicityVerdict::Inconclusive;
  }
  return worst;
}

}  // namespace fishervi
