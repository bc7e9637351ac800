#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "robustbeta/density.hpp"
#include "robustbeta/model.hpp"
#include "robustbeta/specfun.hpp"

namespace testing {

using namespace robustbeta;

struct Instance {
  Problem problem;
  ParamVector theta;
};

/// Intercept plus uniform covariates in both submodels; responses drawn at theta.
inline Instance random_instance(Index n, Index p1, Index p2, unsigned seed,
                                LinkFunction mean_link = LinkKind::logit,
                                LinkFunction precision_link = LinkKind::log) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  MatrixXd x(n, p1), z(n, p2);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    z(i, 0) = 1.0;
    for (Index j = 1; j < p1; ++j) x(i, j) = unif(rng);
    for (Index j = 1; j < p2; ++j) z(i, j) = unif(rng);
  }
  ParamVector theta{VectorXd(p1), VectorXd(p2)};
  for (Index j = 0; j < p1; ++j) theta.beta[j] = coef(rng);
  for (Index j = 0; j < p2; ++j) theta.gamma[j] = 0.5 * coef(rng);
  if (precision_link.kind() == LinkKind::log) theta.gamma[0] += 2.5;
  if (precision_link.kind() == LinkKind::sqrt) theta.gamma[0] += 4.0;
  if (precision_link.kind() == LinkKind::identity) theta.gamma[0] += 15.0;
  ModelSpec model(x, z, mean_link, precision_link);
  const Predictors pr = predictors(model, theta);
  std::vector<Observation> obs;
  for (Index i = 0; i < n; ++i) obs.push_back(Observation::from_response(sample_beta(pr.mu[i], pr.phi[i], rng)));
  return {Problem(model, obs), theta};
}

/// E[g(y*)] under the EGB law, with the quadrature centered and scaled on the bulk.
inline double egb_expect(double mu, double phi, const std::function<double(double)>& g) {
  const PerObsMoments m = moments(mu, phi);
  QuadratureSpec spec;
  spec.center = m.mu_star;
  spec.scale = std::sqrt(m.v);
  const double inf = std::numeric_limits<double>::infinity();
  return integrate([&](double t) { return g(t) * std::exp(egb_logpdf(t, mu, phi)); }, -inf, inf,
                   spec)
      .value;
}

inline double rel_err(double got, double want, double floor = 1.0) {
  return std::abs(got - want) / std::max(floor, std::abs(want));
}

}  // namespace testing
