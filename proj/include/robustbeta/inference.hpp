#pragma once

#include <functional>
#include <string>
#include <vector>

#include "robustbeta/estimators.hpp"
#include "robustbeta/model.hpp"

namespace robustbeta {

enum class CovarianceStatus { ok, singular_lambda, non_psd };

/// Per-observation scalars on the (eta_mu, eta_phi) scale. The sample matrices are
/// lambda = [X' diag(l11) X, X' diag(l12) Z; Z' diag(l12) X, Z' diag(l22) Z], same for sigma.
struct RowScalars {
  double l11 = 0.0, l12 = 0.0, l22 = 0.0;
  double s11 = 0.0, s12 = 0.0, s22 = 0.0;
  double gamma1 = 0.0, gamma2 = 0.0;  // centering E (LMDPDE only)
  double b1 = 1.0, b2 = 1.0;          // beta-function ratios (LSMLE only)
  double k1 = 1.0, k2 = 1.0;          // K at 1 + alpha and 1 + 2 alpha (LMDPDE only)
  double t_mu = 1.0, t_phi = 1.0;     // 1 / g'(mu), 1 / g'(phi)
};

/// LMDPDE: lambda = -E[d psi / d eta] (positive definite), sigma = Var psi.
RowScalars lmdpde_row_scalars(double mu, double phi, double alpha, LinkFunction mean_link,
                              LinkFunction precision_link);
/// LSMLE: lambda = E[d psi / d eta] (negative definite, sign kept), sigma = E[psi psi'].
RowScalars lsmle_row_scalars(double mu, double phi, double alpha, LinkFunction mean_link,
                             LinkFunction precision_link);

struct SandwichParts {
  MatrixXd lambda;
  MatrixXd sigma;
  MatrixXd v;  // lambda^-1 sigma lambda^-1: covariance of the estimator (sample sums, not averages)
  std::vector<RowScalars> rows;
  CovarianceStatus status = CovarianceStatus::ok;
  std::string message;
};

SandwichParts lmdpde_sandwich(const ModelSpec& model, const ParamVector& theta, double alpha);
SandwichParts lsmle_sandwich(const ModelSpec& model, const ParamVector& theta, double alpha);
/// Dispatch on the estimator; MLE uses the alpha = 0 LSMLE form (inverse Fisher information).
SandwichParts sandwich(const ModelSpec& model, const ParamVector& theta,
                       const EstimatorKind& estimator);

/// Guarded lambda^-1 sigma lambda^-1 with symmetrization and PSD projection.
CovarianceStatus sandwich_covariance(const MatrixXd& lambda, const MatrixXd& sigma, MatrixXd& v,
                                     std::string* message = nullptr);

/// Restriction m(theta) = target. Linear by default; set value/jacobian for a smooth m.
struct HypothesisSpec {
  MatrixXd matrix;
  VectorXd target;
  std::function<VectorXd(const VectorXd&)> value;
  std::function<MatrixXd(const VectorXd&)> jacobian;

  static HypothesisSpec linear(MatrixXd matrix, VectorXd target);
  /// theta[indices[k]] = targets[k].
  static HypothesisSpec coordinates(const std::vector<Index>& indices, const VectorXd& targets,
                                    Index p);

  Index dimension() const { return target.size(); }
};

struct TestResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

TestResult wald_test(const VectorXd& theta, const MatrixXd& covariance,
                     const HypothesisSpec& hypothesis);
TestResult wald_test(const FitResult& fit, const HypothesisSpec& hypothesis);

/// Influence of a point y_star placed at design row `row`, using the sample-average lambda.
VectorXd influence(const ModelSpec& model, Index row, double y_star, const ParamVector& theta,
                   const EstimatorKind& estimator);

/// h*^alpha (LSMLE) or h^alpha (LMDPDE) at the data, divided by the largest value.
VectorXd observation_weights(const Problem& problem, const ParamVector& theta,
                             const EstimatorKind& estimator);

}  // namespace robustbeta
