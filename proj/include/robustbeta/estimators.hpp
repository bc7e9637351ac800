#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "robustbeta/model.hpp"

namespace robustbeta {

enum class Estimator { mle, lsmle, lmdpde };

struct EstimatorKind {
  Estimator kind = Estimator::mle;
  double alpha = 0.0;

  static EstimatorKind mle() { return {Estimator::mle, 0.0}; }
  static EstimatorKind lsmle(double alpha) { return {Estimator::lsmle, alpha}; }
  static EstimatorKind lmdpde(double alpha) { return {Estimator::lmdpde, alpha}; }
  /// Accepts "mle", "lsmle", "lmdpde" (case-insensitive).
  static Estimator parse(std::string_view name);

  /// Throws InvalidArgument unless 0 <= alpha < 1 and MLE has alpha 0.
  void validate() const;
  std::string_view name() const;
  /// True when the objective collapses to the log-likelihood.
  bool is_likelihood() const { return kind == Estimator::mle || alpha == 0.0; }
};

struct FitOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  double parameter_tolerance = 1e-12;
  std::optional<ParamVector> start;
  bool compute_covariance = true;
  /// Newton steps on a finite-difference Jacobian of the estimating function after BFGS stops.
  int polish_steps = 4;

  void validate() const;
};

enum class FitStatus {
  converged,
  max_iterations,
  line_search_failed,
  non_finite,
  singular_lambda,
  non_psd_covariance,
};

std::string_view to_string(FitStatus status);

struct FitResult {
  ParamVector theta;
  EstimatorKind estimator;
  bool converged = false;
  FitStatus status = FitStatus::max_iterations;
  int iterations = 0;
  double objective = 0.0;      // maximized criterion (see maximand)
  double gradient_norm = 0.0;  // sup norm of the estimating function at theta
  MatrixXd covariance;         // empty unless covariance was requested and computable
  VectorXd standard_errors;
  VectorXd weights;
  Index clamped = 0;
  std::string message;

  /// Failure in the sense of the Monte Carlo experiments.
  bool failed() const { return status != FitStatus::converged; }
};

double loglik(const Problem& problem, const ParamVector& theta);
double lmdpde_objective(const Problem& problem, const ParamVector& theta, double alpha);
double lsmle_objective(const Problem& problem, const ParamVector& theta, double alpha);

VectorXd score_u(const Observation& obs, const ModelSpec& model, Index row,
                 const ParamVector& theta);
VectorXd modified_score_u_star(const Observation& obs, const ModelSpec& model, Index row,
                               const ParamVector& theta, double alpha);
VectorXd centering_e(const ModelSpec& model, Index row, const ParamVector& theta, double alpha);

/// One observation's share of the maximand and of the estimating function, the latter with
/// respect to the two linear predictors (eta_mu, eta_phi).
struct RowTerm {
  double objective = 0.0;
  double psi_mu = 0.0;
  double psi_phi = 0.0;
  double log_density = 0.0;  // log h (LMDPDE, MLE) or log h* (LSMLE) at y_star
};
RowTerm row_term(const Observation& obs, double mu, double phi, LinkFunction mean_link,
                 LinkFunction precision_link, const EstimatorKind& estimator);

/// MLE: sum U; LSMLE: sum U* h*^alpha; LMDPDE: sum (U h^alpha - E).
VectorXd estimating_function(const Problem& problem, const ParamVector& theta,
                             const EstimatorKind& estimator);

/// Criterion whose gradient is exactly estimating_function:
/// loglik for the likelihood case, the LSMLE objective, and -n H_n / (1 + alpha) - n / alpha for LMDPDE.
struct Maximand {
  double value = 0.0;
  VectorXd gradient;
};
Maximand maximand(const Problem& problem, const ParamVector& theta,
                  const EstimatorKind& estimator);

ParamVector starting_values(const Problem& problem);

FitResult fit(const Problem& problem, const EstimatorKind& estimator,
              const FitOptions& options = {});

}  // namespace robustbeta
