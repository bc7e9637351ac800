#include "robustbeta/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

#include "parallel.hpp"
#include "robustbeta/density.hpp"
#include "robustbeta/errors.hpp"

namespace robustbeta {
namespace {

constexpr std::uint64_t kEnvelopeStream = 0x656e76;  // "env"

VectorXd sorted_values(VectorXd v, bool absolute) {
  if (absolute) v = v.cwiseAbs();
  std::sort(v.data(), v.data() + v.size());
  return v;
}

}  // namespace

Residuals residuals_swr2(const Problem& problem, const ParamVector& theta) {
  const ModelSpec& m = problem.model;
  const Index n = m.n();
  const Predictors pr = predictors(m, theta);
  VectorXd standardized(n), w(n), var(n);
  for (Index i = 0; i < n; ++i) {
    const PerObsMoments mo = moments(pr.mu[i], pr.phi[i]);
    const double g1 = m.mean_link().d1(pr.mu[i]);
    var[i] = mo.v;
    w[i] = pr.phi[i] * pr.phi[i] * mo.v / (g1 * g1);
    standardized[i] = problem.observations[static_cast<std::size_t>(i)].y_star - mo.mu_star;
  }
  const MatrixXd wx = w.cwiseSqrt().asDiagonal() * m.x();
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(wx);
  if (qr.rank() < m.p1()) throw SingularMatrix("weighted mean design is rank deficient");
  const MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, m.p1());

  Residuals out;
  out.leverage = q.rowwise().squaredNorm();
  out.values.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double h = out.leverage[i];
    if (!(h < 1.0 - 1e-12)) {
      out.degenerate.push_back(i);
      out.values[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    out.values[i] = standardized[i] / std::sqrt(var[i] * (1.0 - h));
  }
  return out;
}

Residuals residuals_swr2(const Problem& problem, const FitResult& fit) {
  if (fit.failed()) throw InvalidArgument("residuals need a converged fit");
  return residuals_swr2(problem, fit.theta);
}

void EnvelopeOptions::validate() const {
  if (replications < 19) throw InvalidArgument("envelope needs at least 19 replications");
  if (!(coverage > 0.0 && coverage < 1.0)) throw InvalidArgument("coverage must lie in (0, 1)");
  fit_options.validate();
}

double quantile_sorted(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

EnvelopeBands simulated_envelope(const Problem& problem, const FitResult& fit,
                                 const EnvelopeOptions& options) {
  options.validate();
  const Residuals base = residuals_swr2(problem, fit);
  if (!base.degenerate.empty()) throw NumericalError("fitted residuals have degenerate leverage");
  const ModelSpec& m = problem.model;
  const Index n = m.n();
  const Predictors pr = predictors(m, fit.theta);
  const auto reps = static_cast<std::size_t>(options.replications);

  FitOptions refit = options.fit_options;
  refit.start = fit.theta;
  refit.compute_covariance = false;
  std::vector<VectorXd> sims(reps);
  std::vector<char> ok(reps, 0);
  detail::parallel_for(reps, options.threads, [&](std::size_t r) {
    Rng rng = make_rng(options.seed, kEnvelopeStream, r);
    std::vector<Observation> obs;
    obs.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) obs.push_back(Observation::from_response(sample_beta(pr.mu[i], pr.phi[i], rng)));
    const Problem sim(m, std::move(obs));
    const FitResult f = robustbeta::fit(sim, fit.estimator, refit);
    if (f.status != FitStatus::converged) return;
    try {
      const Residuals res = residuals_swr2(sim, f.theta);
      if (!res.degenerate.empty() || !res.values.allFinite()) return;
      sims[r] = sorted_values(res.values, options.absolute);
      ok[r] = 1;
    } catch (const SingularMatrix&) {
    }
  });

  EnvelopeBands out;
  out.replications = options.replications;
  out.failed = static_cast<int>(std::count(ok.begin(), ok.end(), 0));
  out.unreliable = out.failed > options.replications / 10;
  const auto used = static_cast<double>(options.replications - out.failed);
  out.coarse = 0.5 * (1.0 - options.coverage) * used < 1.0;
  out.residuals = sorted_values(base.values, options.absolute);
  out.lower.resize(n);
  out.median.resize(n);
  out.upper.resize(n);
  out.theoretical.resize(n);
  if (used < 1) throw NumericalError("every envelope refit failed");

  const double lo_p = 0.5 * (1.0 - options.coverage), hi_p = 0.5 * (1.0 + options.coverage);
  const boost::math::normal normal;
  std::vector<double> column;
  for (Index i = 0; i < n; ++i) {
    column.clear();
    for (std::size_t r = 0; r < reps; ++r) {
      if (ok[r]) column.push_back(sims[r][i]);
    }
    std::sort(column.begin(), column.end());
    out.lower[i] = quantile_sorted(column, lo_p);
    out.median[i] = quantile_sorted(column, 0.5);
    out.upper[i] = quantile_sorted(column, hi_p);
    const double pos = (static_cast<double>(i) + 1.0 - 0.375) / (static_cast<double>(n) + 0.25);
    out.theoretical[i] = options.absolute ? boost::math::quantile(normal, 0.5 + 0.5 * pos)
                                          : boost::math::quantile(normal, pos);
    if (out.residuals[i] < out.lower[i] || out.residuals[i] > out.upper[i]) ++out.outside;
  }
  return out;
}

}  // namespace robustbeta
