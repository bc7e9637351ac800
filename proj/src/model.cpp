#include "robustbeta/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "robustbeta/errors.hpp"

namespace robustbeta {
namespace {

constexpr double kPi = std::numbers::pi;

double standard_normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

double standard_normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double clamp_unit(double mu, Index* clamped) {
  if (mu < kClampEpsilon) {
    if (clamped) ++*clamped;
    return kClampEpsilon;
  }
  if (mu > 1.0 - kClampEpsilon) {
    if (clamped) ++*clamped;
    return 1.0 - kClampEpsilon;
  }
  return mu;
}

double clamp_positive(double phi, Index* clamped) {
  constexpr double upper = 1.0 / kClampEpsilon;
  if (phi < kClampEpsilon) {
    if (clamped) ++*clamped;
    return kClampEpsilon;
  }
  if (phi > upper) {
    if (clamped) ++*clamped;
    return upper;
  }
  return phi;
}

double raw_inverse(LinkKind kind, double eta) {
  switch (kind) {
    case LinkKind::logit:
      return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
    case LinkKind::probit:
      return 0.5 * std::erfc(-eta / std::numbers::sqrt2);
    case LinkKind::cloglog:
      return -std::expm1(-std::exp(eta));
    case LinkKind::cauchit:
      return 0.5 + std::atan(eta) / kPi;
    case LinkKind::log:
      return std::exp(eta);
    case LinkKind::sqrt:
      return eta > 0 ? eta * eta : 0.0;
    case LinkKind::identity:
      return eta;
  }
  return eta;
}

}  // namespace

LinkFunction LinkFunction::parse(std::string_view name) {
  if (name == "logit") return LinkKind::logit;
  if (name == "probit") return LinkKind::probit;
  if (name == "cloglog") return LinkKind::cloglog;
  if (name == "cauchit") return LinkKind::cauchit;
  if (name == "log") return LinkKind::log;
  if (name == "sqrt") return LinkKind::sqrt;
  if (name == "identity") return LinkKind::identity;
  throw InvalidArgument("unknown link function '" + std::string(name) + "'");
}

std::string_view LinkFunction::name() const {
  switch (kind_) {
    case LinkKind::logit: return "logit";
    case LinkKind::probit: return "probit";
    case LinkKind::cloglog: return "cloglog";
    case LinkKind::cauchit: return "cauchit";
    case LinkKind::log: return "log";
    case LinkKind::sqrt: return "sqrt";
    case LinkKind::identity: return "identity";
  }
  return "?";
}

void LinkFunction::check_domain(double x, const char* what) const {
  const bool ok = maps_unit_interval() ? (x > 0.0 && x < 1.0) : (x > 0.0 && std::isfinite(x));
  if (!ok) {
    throw DomainError(std::string(name()) + " link " + what + ": argument " + std::to_string(x) +
                      " outside the link domain");
  }
}

double LinkFunction::value(double x) const {
  check_domain(x, "value");
  switch (kind_) {
    case LinkKind::logit: return std::log(x) - std::log1p(-x);
    case LinkKind::probit: return standard_normal_quantile(x);
    case LinkKind::cloglog: return std::log(-std::log1p(-x));
    case LinkKind::cauchit: return std::tan(kPi * (x - 0.5));
    case LinkKind::log: return std::log(x);
    case LinkKind::sqrt: return std::sqrt(x);
    case LinkKind::identity: return x;
  }
  return x;
}

double LinkFunction::inverse(double eta) const {
  if (!std::isfinite(eta)) {
    throw DomainError(std::string(name()) + " link inverse: non-finite linear predictor");
  }
  const double raw = raw_inverse(kind_, eta);
  return maps_unit_interval() ? clamp_unit(raw, nullptr) : clamp_positive(raw, nullptr);
}

double LinkFunction::d1(double x) const {
  check_domain(x, "derivative");
  switch (kind_) {
    case LinkKind::logit: return 1.0 / (x * (1.0 - x));
    case LinkKind::probit: return 1.0 / standard_normal_pdf(standard_normal_quantile(x));
    case LinkKind::cloglog: {
      const double l = std::log1p(-x);
      return -1.0 / ((1.0 - x) * l);
    }
    case LinkKind::cauchit: {
      const double g = std::tan(kPi * (x - 0.5));
      return kPi * (1.0 + g * g);
    }
    case LinkKind::log: return 1.0 / x;
    case LinkKind::sqrt: return 0.5 / std::sqrt(x);
    case LinkKind::identity: return 1.0;
  }
  return 1.0;
}

double LinkFunction::d2(double x) const {
  check_domain(x, "second derivative");
  switch (kind_) {
    case LinkKind::logit: {
      const double v = x * (1.0 - x);
      return (2.0 * x - 1.0) / (v * v);
    }
    case LinkKind::probit: {
      const double g = standard_normal_quantile(x);
      const double dens = standard_normal_pdf(g);
      return g / (dens * dens);
    }
    case LinkKind::cloglog: {
      const double l = std::log1p(-x);
      const double w = (1.0 - x) * l;
      return -(1.0 + l) / (w * w);
    }
    case LinkKind::cauchit: {
      const double g = std::tan(kPi * (x - 0.5));
      return 2.0 * kPi * kPi * g * (1.0 + g * g);
    }
    case LinkKind::log: return -1.0 / (x * x);
    case LinkKind::sqrt: return -0.25 / (x * std::sqrt(x));
    case LinkKind::identity: return 0.0;
  }
  return 0.0;
}

double LinkFunction::eval(LinkDirection direction, double x) const {
  switch (direction) {
    case LinkDirection::value: return value(x);
    case LinkDirection::inverse: return inverse(x);
    case LinkDirection::d1: return d1(x);
    case LinkDirection::d2: return d2(x);
  }
  return value(x);
}

ModelSpec::ModelSpec(MatrixXd x, MatrixXd z, LinkFunction mean_link, LinkFunction precision_link)
    : x_(std::move(x)), z_(std::move(z)), mean_link_(mean_link), precision_link_(precision_link) {
  if (!mean_link_.maps_unit_interval()) {
    throw InvalidArgument("mean link must map (0,1) onto the real line");
  }
  if (precision_link_.maps_unit_interval()) {
    throw InvalidArgument("precision link must map (0,inf) onto the real line");
  }
  if (x_.rows() != z_.rows()) throw InvalidArgument("X and Z must have the same number of rows");
  if (x_.cols() < 1 || z_.cols() < 1) {
    throw InvalidArgument("both submodels need at least one column");
  }
  if (x_.rows() <= x_.cols() + z_.cols()) {
    throw InvalidArgument("need n > p1 + p2 observations");
  }
  if (!x_.allFinite() || !z_.allFinite()) throw InvalidArgument("design contains non-finite values");
  if (Eigen::ColPivHouseholderQR<MatrixXd>(x_).rank() < x_.cols()) {
    throw InvalidArgument("mean design X is not of full column rank");
  }
  if (Eigen::ColPivHouseholderQR<MatrixXd>(z_).rank() < z_.cols()) {
    throw InvalidArgument("precision design Z is not of full column rank");
  }
}

VectorXd ParamVector::joined() const {
  VectorXd theta(size());
  theta << beta, gamma;
  return theta;
}

ParamVector ParamVector::split(const VectorXd& theta, Index p1) {
  if (p1 < 0 || p1 > theta.size()) throw InvalidArgument("ParamVector::split: bad p1");
  return {theta.head(p1), theta.tail(theta.size() - p1)};
}

Observation Observation::from_response(double y) {
  if (!(y > 0.0 && y < 1.0)) {
    throw DomainError("response " + std::to_string(y) + " outside the open unit interval");
  }
  const double log1m = std::log1p(-y);
  return {y, std::log(y) - log1m, log1m};
}

Observation Observation::from_logit(double y_star) {
  if (!std::isfinite(y_star)) throw DomainError("non-finite logit response");
  const double y = raw_inverse(LinkKind::logit, y_star);
  const double log1m = y_star > 0 ? -(y_star + std::log1p(std::exp(-y_star)))
                                  : -std::log1p(std::exp(y_star));
  return {y, y_star, log1m};
}

std::vector<Observation> make_observations(std::span<const double> y) {
  std::vector<Observation> out;
  out.reserve(y.size());
  for (double value : y) out.push_back(Observation::from_response(value));
  return out;
}

Problem::Problem(ModelSpec model_in, std::vector<Observation> observations_in)
    : model(std::move(model_in)), observations(std::move(observations_in)) {
  if (static_cast<Index>(observations.size()) != model.n()) {
    throw InvalidArgument("number of responses does not match the design rows");
  }
}

Predictors predictors(const ModelSpec& model, const ParamVector& theta) {
  if (theta.beta.size() != model.p1() || theta.gamma.size() != model.p2()) {
    throw InvalidArgument("parameter vector does not match the model dimensions");
  }
  const VectorXd eta_mu = model.x() * theta.beta;
  const VectorXd eta_phi = model.z() * theta.gamma;
  Predictors out{VectorXd(model.n()), VectorXd(model.n()), 0};
  for (Index i = 0; i < model.n(); ++i) {
    if (!std::isfinite(eta_mu[i]) || !std::isfinite(eta_phi[i])) {
      throw NumericalError("linear predictor overflow at row " + std::to_string(i));
    }
    out.mu[i] = clamp_unit(raw_inverse(model.mean_link().kind(), eta_mu[i]), &out.clamped);
    out.phi[i] = clamp_positive(raw_inverse(model.precision_link().kind(), eta_phi[i]), &out.clamped);
  }
  return out;
}

RowPredictor predict_row(const ModelSpec& model, Index row, const ParamVector& theta) {
  const double eta_mu = model.x().row(row).dot(theta.beta);
  const double eta_phi = model.z().row(row).dot(theta.gamma);
  return {model.mean_link().inverse(eta_mu), model.precision_link().inverse(eta_phi)};
}

}  // namespace robustbeta
