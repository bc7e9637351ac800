#include "robustbeta/inference.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include <boost/math/special_functions/gamma.hpp>

#include "robustbeta/density.hpp"
#include "robustbeta/errors.hpp"
#include "robustbeta/specfun.hpp"

namespace robustbeta {
namespace {

// Moments of the natural score pieces u1 = phi_b (y* - mu*(phi_b)) and
// u2 = mu (y* - mu*(phi_b)) + (y_dagger - mu_dagger(phi_b)) when y ~ Beta(mu, s).
struct ShiftedMoments {
  double e1, e2;         // E u1, E u2
  double m11, m12, m22;  // E u1^2, E u1 u2, E u2^2
};

ShiftedMoments shifted_moments(double mu, double phi_b, double s) {
  const PerObsMoments base = moments(mu, phi_b);
  const PerObsMoments at = moments(mu, s);
  const double d_star = at.mu_star - base.mu_star;
  const double d_dagger = at.mu_dagger - base.mu_dagger;
  ShiftedMoments out;
  out.e1 = phi_b * d_star;
  out.e2 = mu * d_star + d_dagger;
  // Cov(y*, y_dagger) = -psi'(b) and Var(mu y* + y_dagger) = d under precision s.
  out.m11 = phi_b * phi_b * (at.v + d_star * d_star);
  out.m12 = phi_b * (mu * at.trigamma_a - (1.0 - mu) * at.trigamma_b + d_star * out.e2);
  out.m22 = at.d + out.e2 * out.e2;
  return out;
}

double log_beta_mp(double mu, double phi) { return log_beta(mu * phi, (1.0 - mu) * phi); }

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw InvalidArgument("alpha " + std::to_string(alpha) + " outside [0,1)");
  }
}

template <typename F>
MatrixXd assemble_blocks(const ModelSpec& model, const std::vector<RowScalars>& rows, F pick) {
  const Index n = model.n();
  VectorXd w11(n), w12(n), w22(n);
  for (Index i = 0; i < n; ++i) {
    const auto [a, b, c] = pick(rows[i]);
    w11[i] = a;
    w12[i] = b;
    w22[i] = c;
  }
  const MatrixXd& x = model.x();
  const MatrixXd& z = model.z();
  MatrixXd out(model.p(), model.p());
  out.topLeftCorner(model.p1(), model.p1()) = x.transpose() * w11.asDiagonal() * x;
  out.topRightCorner(model.p1(), model.p2()) = x.transpose() * w12.asDiagonal() * z;
  out.bottomLeftCorner(model.p2(), model.p1()) =
      out.topRightCorner(model.p1(), model.p2()).transpose();
  out.bottomRightCorner(model.p2(), model.p2()) = z.transpose() * w22.asDiagonal() * z;
  return out;
}

template <typename RowFn>
SandwichParts build_sandwich(const ModelSpec& model, const ParamVector& theta, RowFn row_fn) {
  const Predictors pr = predictors(model, theta);
  SandwichParts parts;
  parts.rows.reserve(static_cast<std::size_t>(model.n()));
  for (Index i = 0; i < model.n(); ++i) parts.rows.push_back(row_fn(pr.mu[i], pr.phi[i]));
  parts.lambda = assemble_blocks(model, parts.rows, [](const RowScalars& r) {
    return std::tuple{r.l11, r.l12, r.l22};
  });
  parts.sigma = assemble_blocks(model, parts.rows, [](const RowScalars& r) {
    return std::tuple{r.s11, r.s12, r.s22};
  });
  if (!parts.lambda.allFinite() || !parts.sigma.allFinite()) {
    parts.status = CovarianceStatus::singular_lambda;
    parts.message = "non-finite sandwich matrices";
    return parts;
  }
  parts.status = sandwich_covariance(parts.lambda, parts.sigma, parts.v, &parts.message);
  return parts;
}

bool well_conditioned(const Eigen::LDLT<MatrixXd>& ldlt) {
  if (ldlt.info() != Eigen::Success) return false;
  const VectorXd d = ldlt.vectorD().cwiseAbs();
  if (!(d.minCoeff() > 1e-14 * d.maxCoeff())) return false;
  return ldlt.rcond() >= 1e-12;
}

Eigen::LDLT<MatrixXd> guarded_ldlt(const MatrixXd& m, const char* what) {
  Eigen::LDLT<MatrixXd> ldlt(m);
  if (!well_conditioned(ldlt)) {
    throw SingularMatrix(std::string(what) + " is numerically singular");
  }
  return ldlt;
}

}  // namespace

RowScalars lmdpde_row_scalars(double mu, double phi, double alpha, LinkFunction mean_link,
                              LinkFunction precision_link) {
  check_alpha(alpha);
  RowScalars r;
  r.t_mu = 1.0 / mean_link.d1(mu);
  r.t_phi = 1.0 / precision_link.d1(phi);
  r.k1 = k_integral(mu, phi, 1.0 + alpha);
  r.k2 = k_integral(mu, phi, 1.0 + 2.0 * alpha);
  const ShiftedMoments a1 = shifted_moments(mu, phi, (1.0 + alpha) * phi);
  const ShiftedMoments a2 = shifted_moments(mu, phi, (1.0 + 2.0 * alpha) * phi);
  const double tmm = r.t_mu * r.t_mu, tmp = r.t_mu * r.t_phi, tpp = r.t_phi * r.t_phi;

  r.gamma1 = r.k1 * a1.e1 * r.t_mu;
  r.gamma2 = r.k1 * a1.e2 * r.t_phi;
  r.l11 = r.k1 * a1.m11 * tmm;
  r.l12 = r.k1 * a1.m12 * tmp;
  r.l22 = r.k1 * a1.m22 * tpp;
  r.s11 = r.k2 * a2.m11 * tmm - r.gamma1 * r.gamma1;
  r.s12 = r.k2 * a2.m12 * tmp - r.gamma1 * r.gamma2;
  r.s22 = r.k2 * a2.m22 * tpp - r.gamma2 * r.gamma2;
  return r;
}

RowScalars lsmle_row_scalars(double mu, double phi, double alpha, LinkFunction mean_link,
                             LinkFunction precision_link) {
  check_alpha(alpha);
  RowScalars r;
  r.t_mu = 1.0 / mean_link.d1(mu);
  r.t_phi = 1.0 / precision_link.d1(phi);
  const double q = 1.0 - alpha;
  const double phi_star = phi / q;
  const double lb_star = log_beta_mp(mu, phi_star);
  const double lb = log_beta_mp(mu, phi);
  r.b1 = std::exp(q * lb_star - lb);
  r.b2 = std::exp(log_beta_mp(mu, (1.0 + alpha) * phi_star) - 2.0 * alpha * lb_star - lb);

  const PerObsMoments m = moments(mu, phi_star);
  const double tmm = r.t_mu * r.t_mu, tmp = r.t_mu * r.t_phi, tpp = r.t_phi * r.t_phi;
  r.l11 = -q * r.b1 * phi_star * phi_star * m.v * tmm;
  r.l12 = -r.b1 * m.c * tmp;
  r.l22 = -r.b1 * m.d * tpp / q;

  const ShiftedMoments a = shifted_moments(mu, phi_star, (1.0 + alpha) * phi_star);
  r.s11 = r.b2 * a.m11 * tmm;
  r.s12 = r.b2 * a.m12 * tmp / q;
  r.s22 = r.b2 * a.m22 * tpp / (q * q);
  return r;
}

CovarianceStatus sandwich_covariance(const MatrixXd& lambda, const MatrixXd& sigma, MatrixXd& v,
                                     std::string* message) {
  auto fail = [&](CovarianceStatus status, const std::string& text) {
    if (message) *message = text;
    v.resize(0, 0);
    return status;
  };
  Eigen::LDLT<MatrixXd> ldlt(lambda);
  if (!well_conditioned(ldlt)) {
    return fail(CovarianceStatus::singular_lambda, "lambda is numerically singular");
  }
  const MatrixXd left = ldlt.solve(sigma);
  MatrixXd raw = ldlt.solve(left.transpose()).transpose();
  raw = 0.5 * (raw + raw.transpose()).eval();
  if (!raw.allFinite()) return fail(CovarianceStatus::non_psd, "non-finite covariance");

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(raw);
  const VectorXd& values = eig.eigenvalues();
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  if (values.minCoeff() < -1e-10 * scale) {
    return fail(CovarianceStatus::non_psd, "covariance has a negative eigenvalue " +
                                               std::to_string(values.minCoeff()));
  }
  if (values.minCoeff() < 0.0) {
    raw = eig.eigenvectors() * values.cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose();
    raw = 0.5 * (raw + raw.transpose()).eval();
  }
  v = std::move(raw);
  if (message) message->clear();
  return CovarianceStatus::ok;
}

SandwichParts lmdpde_sandwich(const ModelSpec& model, const ParamVector& theta, double alpha) {
  check_alpha(alpha);
  return build_sandwich(model, theta, [&](double mu, double phi) {
    return lmdpde_row_scalars(mu, phi, alpha, model.mean_link(), model.precision_link());
  });
}

SandwichParts lsmle_sandwich(const ModelSpec& model, const ParamVector& theta, double alpha) {
  check_alpha(alpha);
  return build_sandwich(model, theta, [&](double mu, double phi) {
    return lsmle_row_scalars(mu, phi, alpha, model.mean_link(), model.precision_link());
  });
}

SandwichParts sandwich(const ModelSpec& model, const ParamVector& theta,
                       const EstimatorKind& estimator) {
  estimator.validate();
  if (estimator.kind == Estimator::lmdpde) return lmdpde_sandwich(model, theta, estimator.alpha);
  return lsmle_sandwich(model, theta, estimator.alpha);
}

HypothesisSpec HypothesisSpec::linear(MatrixXd matrix, VectorXd target) {
  if (matrix.rows() != target.size()) {
    throw InvalidArgument("hypothesis matrix and target have different lengths");
  }
  if (matrix.rows() < 1 || matrix.rows() > matrix.cols()) {
    throw InvalidArgument("hypothesis needs 1 <= d <= p restrictions");
  }
  if (Eigen::ColPivHouseholderQR<MatrixXd>(matrix).rank() < matrix.rows()) {
    throw InvalidArgument("hypothesis matrix is not of full row rank");
  }
  HypothesisSpec h;
  h.matrix = std::move(matrix);
  h.target = std::move(target);
  return h;
}

HypothesisSpec HypothesisSpec::coordinates(const std::vector<Index>& indices,
                                           const VectorXd& targets, Index p) {
  if (static_cast<Index>(indices.size()) != targets.size()) {
    throw InvalidArgument("one target per restricted coordinate is required");
  }
  MatrixXd m = MatrixXd::Zero(static_cast<Index>(indices.size()), p);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0 || indices[k] >= p) throw InvalidArgument("coordinate index out of range");
    m(static_cast<Index>(k), indices[k]) = 1.0;
  }
  return linear(std::move(m), targets);
}

TestResult wald_test(const VectorXd& theta, const MatrixXd& covariance,
                     const HypothesisSpec& hypothesis) {
  const Index p = theta.size();
  if (covariance.rows() != p || covariance.cols() != p) {
    throw InvalidArgument("wald_test: covariance does not match the parameter vector");
  }
  VectorXd m;
  MatrixXd jac;
  if (hypothesis.value) {
    if (!hypothesis.jacobian) throw InvalidArgument("wald_test: nonlinear m needs a Jacobian");
    m = hypothesis.value(theta);
    jac = hypothesis.jacobian(theta);
  } else {
    m = hypothesis.matrix * theta;
    jac = hypothesis.matrix;
  }
  const Index d = hypothesis.target.size();
  if (m.size() != d || jac.rows() != d || jac.cols() != p) {
    throw InvalidArgument("wald_test: restriction dimensions are inconsistent");
  }
  const VectorXd diff = m - hypothesis.target;
  const MatrixXd inner = jac * covariance * jac.transpose();
  const auto ldlt = guarded_ldlt(0.5 * (inner + inner.transpose()), "Wald inner matrix");
  TestResult out;
  out.df = static_cast<int>(d);
  out.statistic = std::max(0.0, diff.dot(ldlt.solve(diff)));
  out.p_value = out.statistic > 0.0
                    ? boost::math::gamma_q(0.5 * static_cast<double>(d), 0.5 * out.statistic)
                    : 1.0;
  return out;
}

TestResult wald_test(const FitResult& fit, const HypothesisSpec& hypothesis) {
  if (!fit.converged) throw InvalidArgument("wald_test: fit did not converge");
  if (fit.covariance.size() == 0) throw SingularMatrix("wald_test: fit has no covariance");
  return wald_test(fit.theta.joined(), fit.covariance, hypothesis);
}

VectorXd influence(const ModelSpec& model, Index row, double y_star, const ParamVector& theta,
                   const EstimatorKind& estimator) {
  estimator.validate();
  if (row < 0 || row >= model.n()) throw InvalidArgument("influence: row out of range");
  const RowPredictor rp = predict_row(model, row, theta);
  const RowTerm t = row_term(Observation::from_logit(y_star), rp.mu, rp.phi, model.mean_link(),
                             model.precision_link(), estimator);
  VectorXd psi(model.p());
  psi.head(model.p1()) = t.psi_mu * model.x().row(row).transpose();
  psi.tail(model.p2()) = t.psi_phi * model.z().row(row).transpose();

  const SandwichParts parts = sandwich(model, theta, estimator);
  // lambda is stored as -E[grad psi] for LMDPDE and E[grad psi] for LSMLE.
  const double sign = estimator.kind == Estimator::lmdpde ? 1.0 : -1.0;
  const MatrixXd average = parts.lambda / static_cast<double>(model.n());
  const auto ldlt = guarded_ldlt(average, "lambda");
  return sign * ldlt.solve(psi);
}

VectorXd observation_weights(const Problem& problem, const ParamVector& theta,
                             const EstimatorKind& estimator) {
  estimator.validate();
  const ModelSpec& model = problem.model;
  if (estimator.alpha == 0.0) return VectorXd::Ones(model.n());
  const Predictors pr = predictors(model, theta);
  VectorXd log_w(model.n());
  for (Index i = 0; i < model.n(); ++i) {
    const double y_star = problem.observations[i].y_star;
    const double phi =
        estimator.kind == Estimator::lsmle ? pr.phi[i] / (1.0 - estimator.alpha) : pr.phi[i];
    log_w[i] = estimator.alpha * egb_logpdf(y_star, pr.mu[i], phi);
  }
  const double top = log_w.maxCoeff();
  return (log_w.array() - top).exp().matrix();
}

}  // namespace robustbeta
