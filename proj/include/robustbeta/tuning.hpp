#pragma once

#include <vector>

#include "robustbeta/estimators.hpp"

namespace robustbeta {

enum class StabilityStatistic {
  /// p^-1/2 || (theta(a_{j+1}) - theta(a_j)) / se_0 ||_2 against scale / sqrt(n), se_0 from alpha=0.
  standardized_difference,
  /// || z(a_{j+1}) - z(a_j) ||_2 / (sqrt(n) p) against scale, z = theta / se at each alpha.
  z_statistic,
};

struct TuningConfig {
  double grid_step = 0.02;
  double alpha_max = 0.5;
  int window = 3;      // M consecutive stable steps
  int lookahead = 11;  // grid points always fitted before a decision; 1 stops at the first stable run
  double threshold_scale = 0.02;
  StabilityStatistic statistic = StabilityStatistic::z_statistic;
  FitOptions fit_options;

  void validate() const;
  std::vector<double> grid() const;
  double threshold(Index n) const;
};

struct TuningStep {
  double alpha = 0.0;
  FitStatus status = FitStatus::max_iterations;
  ParamVector theta;
  VectorXd standard_errors;
  double sqv = 0.0;  // against the previous grid point; +inf when either fit failed; 0 at alpha=0
};

struct TuningResult {
  double alpha = 0.0;
  bool stable = false;  // false: no stable alpha up to alpha_max (alpha = 0 returned)
  double threshold = 0.0;
  std::vector<TuningStep> trace;
  FitResult selected;  // fit at the returned alpha
};

/// Walks the grid upward from 0. The candidate is the grid point reached by the last unstable step
/// (alpha = 0 if none); it is returned once M later steps are stable and the lookahead block has been
/// fitted.
TuningResult select_alpha(const Problem& problem, Estimator kind, const TuningConfig& config = {});

}  // namespace robustbeta
