#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace robustbeta {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Inverse links clamp mu to [eps, 1 - eps] and phi to [eps, 1 / eps].
inline constexpr double kClampEpsilon = 0x1p-40;

enum class LinkKind { logit, probit, cloglog, cauchit, log, sqrt, identity };
enum class LinkDirection { value, inverse, d1, d2 };

/// Strictly increasing, twice differentiable link. logit/probit/cloglog/cauchit map (0,1) to R;
/// log/sqrt/identity map (0,inf) to R.
class LinkFunction {
 public:
  constexpr LinkFunction(LinkKind kind = LinkKind::logit) : kind_(kind) {}

  /// Parses "logit", "probit", ... Throws InvalidArgument for unknown names.
  static LinkFunction parse(std::string_view name);

  constexpr LinkKind kind() const { return kind_; }
  constexpr bool maps_unit_interval() const {
    return kind_ == LinkKind::logit || kind_ == LinkKind::probit || kind_ == LinkKind::cloglog ||
           kind_ == LinkKind::cauchit;
  }
  std::string_view name() const;

  double value(double x) const;
  double inverse(double eta) const;
  double d1(double x) const;
  double d2(double x) const;
  double eval(LinkDirection direction, double x) const;

  friend constexpr bool operator==(LinkFunction, LinkFunction) = default;

 private:
  void check_domain(double x, const char* what) const;
  LinkKind kind_;
};

/// Design of the mean and precision submodels. Intercept columns are part of X and Z as given.
class ModelSpec {
 public:
  ModelSpec(MatrixXd x, MatrixXd z, LinkFunction mean_link = LinkKind::logit,
            LinkFunction precision_link = LinkKind::log);

  const MatrixXd& x() const { return x_; }
  const MatrixXd& z() const { return z_; }
  LinkFunction mean_link() const { return mean_link_; }
  LinkFunction precision_link() const { return precision_link_; }
  Index n() const { return x_.rows(); }
  Index p1() const { return x_.cols(); }
  Index p2() const { return z_.cols(); }
  Index p() const { return x_.cols() + z_.cols(); }

 private:
  MatrixXd x_;
  MatrixXd z_;
  LinkFunction mean_link_;
  LinkFunction precision_link_;
};

/// theta = (beta, gamma) in that order.
struct ParamVector {
  VectorXd beta;
  VectorXd gamma;

  Index size() const { return beta.size() + gamma.size(); }
  VectorXd joined() const;
  static ParamVector split(const VectorXd& theta, Index p1);
};

struct Observation {
  double y = 0.5;
  double y_star = 0.0;    // log(y / (1 - y))
  double y_dagger = 0.0;  // log(1 - y)

  /// Throws DomainError unless 0 < y < 1.
  static Observation from_response(double y);
  /// Builds an observation from its logit. Stays finite for |y_star| where y rounds to 0 or 1.
  static Observation from_logit(double y_star);
};

std::vector<Observation> make_observations(std::span<const double> y);

/// A model design together with the responses it is fitted to.
struct Problem {
  Problem(ModelSpec model, std::vector<Observation> observations);

  ModelSpec model;
  std::vector<Observation> observations;
};

struct Predictors {
  VectorXd mu;
  VectorXd phi;
  Index clamped = 0;  // inverse-link evaluations that hit the clamp
};

struct RowPredictor {
  double mu;
  double phi;
};

Predictors predictors(const ModelSpec& model, const ParamVector& theta);
RowPredictor predict_row(const ModelSpec& model, Index row, const ParamVector& theta);

}  // namespace robustbeta
