#include "robustbeta/estimators.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "robustbeta/density.hpp"
#include "robustbeta/errors.hpp"
#include "robustbeta/inference.hpp"

namespace robustbeta {
namespace {

void check_alpha(double alpha, bool allow_zero, const char* where) {
  const bool ok = allow_zero ? (alpha >= 0.0 && alpha < 1.0) : (alpha > 0.0 && alpha < 1.0);
  if (!ok) {
    throw InvalidArgument(std::string(where) + ": alpha " + std::to_string(alpha) +
                          (allow_zero ? " outside [0,1)" : " outside (0,1)"));
  }
}

void check_problem_theta(const Problem& problem, const ParamVector& theta) {
  if (theta.beta.size() != problem.model.p1() || theta.gamma.size() != problem.model.p2()) {
    throw InvalidArgument("parameter vector does not match the model dimensions");
  }
}

VectorXd assemble(const ModelSpec& model, const VectorXd& w_mu, const VectorXd& w_phi) {
  VectorXd out(model.p());
  out.head(model.p1()) = model.x().transpose() * w_mu;
  out.tail(model.p2()) = model.z().transpose() * w_phi;
  return out;
}

VectorXd row_vector(const ModelSpec& model, Index row, double a, double b) {
  VectorXd out(model.p());
  out.head(model.p1()) = a * model.x().row(row).transpose();
  out.tail(model.p2()) = b * model.z().row(row).transpose();
  return out;
}

double sup_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

}  // namespace

Estimator EstimatorKind::parse(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "mle") return Estimator::mle;
  if (lower == "lsmle") return Estimator::lsmle;
  if (lower == "lmdpde") return Estimator::lmdpde;
  throw InvalidArgument("unknown estimator '" + std::string(name) + "'");
}

void EstimatorKind::validate() const {
  if (kind == Estimator::mle && alpha != 0.0) throw InvalidArgument("MLE requires alpha = 0");
  check_alpha(alpha, true, "estimator");
}

std::string_view EstimatorKind::name() const {
  switch (kind) {
    case Estimator::mle: return "MLE";
    case Estimator::lsmle: return "LSMLE";
    case Estimator::lmdpde: return "LMDPDE";
  }
  return "?";
}

void FitOptions::validate() const {
  if (max_iterations < 1) throw InvalidArgument("max_iterations must be positive");
  if (!(gradient_tolerance > 0.0) || !(parameter_tolerance > 0.0)) {
    throw InvalidArgument("tolerances must be positive");
  }
  if (polish_steps < 0) throw InvalidArgument("polish_steps must be non-negative");
}

std::string_view to_string(FitStatus status) {
  switch (status) {
    case FitStatus::converged: return "converged";
    case FitStatus::max_iterations: return "max_iterations";
    case FitStatus::line_search_failed: return "line_search_failed";
    case FitStatus::non_finite: return "non_finite";
    case FitStatus::singular_lambda: return "singular_lambda";
    case FitStatus::non_psd_covariance: return "non_psd_covariance";
  }
  return "?";
}

RowTerm row_term(const Observation& obs, double mu, double phi, LinkFunction mean_link,
                 LinkFunction precision_link, const EstimatorKind& estimator) {
  const double t_mu = 1.0 / mean_link.d1(mu);
  const double t_phi = 1.0 / precision_link.d1(phi);
  const double alpha = estimator.alpha;
  RowTerm out;

  if (estimator.kind == Estimator::lsmle) {
    const double phi_star = phi / (1.0 - alpha);
    const PerObsMoments m = moments(mu, phi_star);
    const double r = obs.y_star - m.mu_star;
    const double log_h = egb_logpdf(obs.y_star, mu, phi_star);
    const double weight = alpha > 0.0 ? std::exp(alpha * log_h) : 1.0;
    out.log_density = log_h;
    out.objective = alpha > 0.0 ? std::expm1(alpha * log_h) / alpha : log_h;
    out.psi_mu = weight * phi_star * r * t_mu;
    out.psi_phi = weight * (mu * r + (obs.y_dagger - m.mu_dagger)) * t_phi / (1.0 - alpha);
    return out;
  }

  const PerObsMoments m = moments(mu, phi);
  const double r = obs.y_star - m.mu_star;
  const double u_mu = phi * r * t_mu;
  const double u_phi = (mu * r + (obs.y_dagger - m.mu_dagger)) * t_phi;
  const double log_h = egb_logpdf(obs.y_star, mu, phi);
  out.log_density = log_h;

  if (estimator.is_likelihood()) {
    // log f(y) = log h(y*) - log y - log(1 - y), with log y = y* + y_dagger
    out.objective = log_h - obs.y_star - 2.0 * obs.y_dagger;
    out.psi_mu = u_mu;
    out.psi_phi = u_phi;
    return out;
  }

  const PerObsMoments m1 = moments(mu, phi, 1.0 + alpha);
  const double k = k_integral(mu, phi, 1.0 + alpha);
  const double weight = std::exp(alpha * log_h);
  const double d_star = m1.mu_star - m.mu_star;
  const double d_dagger = m1.mu_dagger - m.mu_dagger;
  // -V_i / (1 + alpha) less the constant 1 / alpha, so that the row gradient is U h^alpha - E
  out.objective = std::expm1(alpha * log_h) / alpha - k / (1.0 + alpha);
  out.psi_mu = weight * u_mu - phi * k * d_star * t_mu;
  out.psi_phi = weight * u_phi - k * (mu * d_star + d_dagger) * t_phi;
  return out;
}

Maximand maximand(const Problem& problem, const ParamVector& theta,
                  const EstimatorKind& estimator) {
  estimator.validate();
  check_problem_theta(problem, theta);
  const ModelSpec& model = problem.model;
  const Predictors pr = predictors(model, theta);
  VectorXd w_mu(model.n());
  VectorXd w_phi(model.n());
  double value = 0.0;
  for (Index i = 0; i < model.n(); ++i) {
    const RowTerm t = row_term(problem.observations[i], pr.mu[i], pr.phi[i], model.mean_link(),
                               model.precision_link(), estimator);
    value += t.objective;
    w_mu[i] = t.psi_mu;
    w_phi[i] = t.psi_phi;
  }
  Maximand out{value, assemble(model, w_mu, w_phi)};
  if (!std::isfinite(out.value) || !out.gradient.allFinite()) {
    throw NumericalError("non-finite objective or estimating function");
  }
  return out;
}

double loglik(const Problem& problem, const ParamVector& theta) {
  check_problem_theta(problem, theta);
  const Predictors pr = predictors(problem.model, theta);
  double total = 0.0;
  for (Index i = 0; i < problem.model.n(); ++i) {
    total += beta_logpdf(problem.observations[i].y, pr.mu[i], pr.phi[i]);
  }
  if (!std::isfinite(total)) throw NumericalError("log-likelihood is not finite");
  return total;
}

double lmdpde_objective(const Problem& problem, const ParamVector& theta, double alpha) {
  check_alpha(alpha, false, "lmdpde_objective");
  check_problem_theta(problem, theta);
  const Predictors pr = predictors(problem.model, theta);
  double total = 0.0;
  for (Index i = 0; i < problem.model.n(); ++i) {
    const double log_h = egb_logpdf(problem.observations[i].y_star, pr.mu[i], pr.phi[i]);
    total += k_integral(pr.mu[i], pr.phi[i], 1.0 + alpha) -
             (1.0 + alpha) / alpha * std::exp(alpha * log_h);
  }
  return total / static_cast<double>(problem.model.n());
}

double lsmle_objective(const Problem& problem, const ParamVector& theta, double alpha) {
  check_alpha(alpha, true, "lsmle_objective");
  return maximand(problem, theta, EstimatorKind::lsmle(alpha)).value;
}

VectorXd score_u(const Observation& obs, const ModelSpec& model, Index row,
                 const ParamVector& theta) {
  const RowPredictor rp = predict_row(model, row, theta);
  const RowTerm t =
      row_term(obs, rp.mu, rp.phi, model.mean_link(), model.precision_link(), EstimatorKind::mle());
  return row_vector(model, row, t.psi_mu, t.psi_phi);
}

VectorXd modified_score_u_star(const Observation& obs, const ModelSpec& model, Index row,
                               const ParamVector& theta, double alpha) {
  check_alpha(alpha, true, "modified_score_u_star");
  const RowPredictor rp = predict_row(model, row, theta);
  const double phi_star = rp.phi / (1.0 - alpha);
  const PerObsMoments m = moments(rp.mu, phi_star);
  const double r = obs.y_star - m.mu_star;
  const double t_mu = 1.0 / model.mean_link().d1(rp.mu);
  const double t_phi = 1.0 / model.precision_link().d1(rp.phi);
  return row_vector(model, row, phi_star * r * t_mu,
                    (rp.mu * r + (obs.y_dagger - m.mu_dagger)) * t_phi / (1.0 - alpha));
}

VectorXd centering_e(const ModelSpec& model, Index row, const ParamVector& theta, double alpha) {
  check_alpha(alpha, true, "centering_e");
  const RowPredictor rp = predict_row(model, row, theta);
  if (alpha == 0.0) return VectorXd::Zero(model.p());
  const PerObsMoments m = moments(rp.mu, rp.phi);
  const PerObsMoments m1 = moments(rp.mu, rp.phi, 1.0 + alpha);
  const double k = k_integral(rp.mu, rp.phi, 1.0 + alpha);
  const double d_star = m1.mu_star - m.mu_star;
  const double d_dagger = m1.mu_dagger - m.mu_dagger;
  const double gamma1 = rp.phi * k * d_star / model.mean_link().d1(rp.mu);
  const double gamma2 = k * (rp.mu * d_star + d_dagger) / model.precision_link().d1(rp.phi);
  return row_vector(model, row, gamma1, gamma2);
}

VectorXd estimating_function(const Problem& problem, const ParamVector& theta,
                             const EstimatorKind& estimator) {
  return maximand(problem, theta, estimator).gradient;
}

ParamVector starting_values(const Problem& problem) {
  const ModelSpec& model = problem.model;
  const Index n = model.n();
  const LinkFunction g_mu = model.mean_link();
  VectorXd response(n);
  for (Index i = 0; i < n; ++i) {
    const double y = std::clamp(problem.observations[i].y, kClampEpsilon, 1.0 - kClampEpsilon);
    response[i] = g_mu.value(y);
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr_x(model.x());
  if (qr_x.rank() < model.p1()) throw SingularMatrix("starting values: singular mean design");
  ParamVector start;
  start.beta = qr_x.solve(response);

  // Method of moments on the linear-predictor residuals.
  const VectorXd eta = model.x() * start.beta;
  const VectorXd resid = response - eta;
  const double sigma2 = resid.squaredNorm() / static_cast<double>(n - model.p1());
  double phi_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double mu = g_mu.inverse(eta[i]);
    const double var_y = sigma2 / std::pow(g_mu.d1(mu), 2);
    phi_sum += var_y > 0.0 ? mu * (1.0 - mu) / var_y - 1.0 : 1e6;
  }
  const double phi0 = std::clamp(phi_sum / static_cast<double>(n), 0.5, 1e6);

  const VectorXd target = VectorXd::Constant(n, model.precision_link().value(phi0));
  Eigen::ColPivHouseholderQR<MatrixXd> qr_z(model.z());
  if (qr_z.rank() < model.p2()) throw SingularMatrix("starting values: singular precision design");
  start.gamma = qr_z.solve(target);
  if (!start.beta.allFinite() || !start.gamma.allFinite()) {
    throw NumericalError("starting values are not finite");
  }
  return start;
}

namespace {

struct Evaluator {
  const Problem& problem;
  const EstimatorKind& estimator;
  Index p1;
  int evaluations = 0;

  bool operator()(const VectorXd& theta, Maximand& out) {
    ++evaluations;
    try {
      out = maximand(problem, ParamVector::split(theta, p1), estimator);
      return true;
    } catch (const DomainError&) {
    } catch (const NumericalError&) {
    }
    return false;
  }
};

// Central differences of the analytic gradient of the maximand.
bool jacobian(Evaluator& eval, const VectorXd& theta, MatrixXd& out) {
  const Index p = theta.size();
  out.resize(p, p);
  Maximand plus, minus;
  for (Index j = 0; j < p; ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta[j]));
    VectorXd tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    if (!eval(tp, plus) || !eval(tm, minus)) return false;
    out.col(j) = (plus.gradient - minus.gradient) / (2.0 * h);
  }
  out = 0.5 * (out + out.transpose()).eval();
  return out.allFinite();
}

// Inverse Hessian of the negated maximand from the Jacobian, if it is positive definite.
bool newton_inverse(Evaluator& eval, const VectorXd& theta, MatrixXd& inverse) {
  MatrixXd jac;
  if (!jacobian(eval, theta, jac)) return false;
  Eigen::LLT<MatrixXd> llt(-jac);
  if (llt.info() != Eigen::Success) return false;
  inverse = llt.solve(MatrixXd::Identity(theta.size(), theta.size()));
  return inverse.allFinite();
}

}  // namespace

FitResult fit(const Problem& problem, const EstimatorKind& requested, const FitOptions& options) {
  requested.validate();
  options.validate();
  // Every alpha = 0 criterion is the log-likelihood; one code path keeps the results bit-identical.
  const EstimatorKind estimator = requested.is_likelihood() ? EstimatorKind::mle() : requested;
  const ModelSpec& model = problem.model;
  const Index p = model.p();

  FitResult result;
  result.estimator = requested;
  const ParamVector start = options.start ? *options.start : starting_values(problem);
  check_problem_theta(problem, start);

  Evaluator eval{problem, estimator, model.p1()};
  VectorXd x = start.joined();
  Maximand cur;
  result.theta = start;
  if (!eval(x, cur)) {
    result.status = FitStatus::non_finite;
    result.message = "objective not finite at the starting point";
    return result;
  }

  auto converged_at = [&](const Maximand& m) {
    return sup_norm(m.gradient) <= options.gradient_tolerance * std::max(1.0, std::abs(m.value));
  };

  const MatrixXd identity = MatrixXd::Identity(p, p);
  auto scaled_identity = [&](const VectorXd& grad) {
    return identity / std::max(1.0, grad.norm());
  };
  MatrixXd h_inv;
  if (!newton_inverse(eval, x, h_inv)) h_inv = scaled_identity(cur.gradient);

  FitStatus status = FitStatus::max_iterations;
  int resets = 0;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (converged_at(cur)) {
      status = FitStatus::converged;
      break;
    }
    const VectorXd grad = -cur.gradient;  // gradient of the minimized function
    VectorXd dir = -h_inv * grad;
    double slope = grad.dot(dir);
    if (!(slope < 0.0)) {
      h_inv = scaled_identity(grad);
      dir = -h_inv * grad;
      slope = grad.dot(dir);
    }

    const double f0 = -cur.value;
    double step = 1.0;
    Maximand next;
    VectorXd x_next;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, step *= 0.5) {
      x_next = x + step * dir;
      if (eval(x_next, next) && -next.value <= f0 + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // One restart from a scaled identity; a second consecutive failure is final.
      if (++resets > 1) {
        status = FitStatus::line_search_failed;
        break;
      }
      h_inv = scaled_identity(grad);
      continue;
    }
    resets = 0;

    const VectorXd s = x_next - x;
    const VectorXd y = (-next.gradient) - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const MatrixXd left = identity - rho * s * y.transpose();
      h_inv = left * h_inv * left.transpose() + rho * s * s.transpose();
    }
    x = x_next;
    cur = next;
    if (sup_norm(s) <= options.parameter_tolerance * (1.0 + sup_norm(x))) {
      status = converged_at(cur) ? FitStatus::converged : FitStatus::line_search_failed;
      break;
    }
  }

  // Newton polish: tightens the root well below the BFGS stopping rule.
  for (int k = 0; k < options.polish_steps; ++k) {
    const double scale = std::max(1.0, std::abs(cur.value));
    if (sup_norm(cur.gradient) <= 1e-13 * scale) break;
    MatrixXd jac;
    if (!jacobian(eval, x, jac)) break;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(jac);
    if (qr.rank() < p) break;
    const VectorXd x_next = x - qr.solve(cur.gradient);
    Maximand next;
    if (!eval(x_next, next)) break;
    if (!(sup_norm(next.gradient) < sup_norm(cur.gradient)) ||
        next.value < cur.value - 1e-8 * scale) {
      break;
    }
    x = x_next;
    cur = next;
    ++iter;
  }
  if (converged_at(cur)) status = FitStatus::converged;
  else if (status == FitStatus::converged) status = FitStatus::max_iterations;

  result.theta = ParamVector::split(x, model.p1());
  result.iterations = iter;
  result.objective = cur.value;
  result.gradient_norm = sup_norm(cur.gradient);
  result.status = status;
  result.converged = status == FitStatus::converged;
  result.clamped = predictors(model, result.theta).clamped;
  if (!result.converged) {
    result.message = std::string("optimizer stopped: ") + std::string(to_string(status));
    return result;
  }

  result.weights = observation_weights(problem, result.theta, estimator);
  if (options.compute_covariance) {
    const SandwichParts parts = sandwich(model, result.theta, estimator);
    if (parts.status != CovarianceStatus::ok) {
      result.status = parts.status == CovarianceStatus::singular_lambda
                          ? FitStatus::singular_lambda
                          : FitStatus::non_psd_covariance;
      result.converged = true;
      result.message = parts.message;
      return result;
    }
    result.covariance = parts.v;
    result.standard_errors = parts.v.diagonal().cwiseSqrt();
  }
  return result;
}

}  // namespace robustbeta
