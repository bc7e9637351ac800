#pragma once

#include <cstdint>
#include <vector>

#include "robustbeta/estimators.hpp"

namespace robustbeta {

struct Residuals {
  VectorXd values;    // NaN where the leverage is degenerate
  VectorXd leverage;  // diagonal of the weighted hat matrix of the mean submodel
  std::vector<Index> degenerate;  // rows with leverage >= 1
};

/// (y* - mu*) / sqrt(v (1 - h)) on the logit scale, with moments at the fitted (mu, phi).
Residuals residuals_swr2(const Problem& problem, const ParamVector& theta);
Residuals residuals_swr2(const Problem& problem, const FitResult& fit);

struct EnvelopeOptions {
  int replications = 99;  // at least 19
  double coverage = 0.95;
  std::uint64_t seed = 1;
  int threads = 0;
  bool absolute = false;  // half-normal envelope of |r|
  FitOptions fit_options;

  void validate() const;
};

struct EnvelopeBands {
  VectorXd residuals;  // sorted residuals of the fit
  VectorXd lower;
  VectorXd median;
  VectorXd upper;
  VectorXd theoretical;  // normal (or half-normal) scores, Blom positions
  int replications = 0;
  int failed = 0;
  bool coarse = false;      // fewer than one simulated point beyond each band
  bool unreliable = false;  // more than 10% of refits failed
  Index outside = 0;        // fitted residuals outside [lower, upper]
};

/// Pointwise bands of sorted residuals over datasets simulated at the fitted parameters and refitted
/// with the same estimator and alpha.
EnvelopeBands simulated_envelope(const Problem& problem, const FitResult& fit,
                                 const EnvelopeOptions& options = {});

/// Empirical quantile of sorted data, linear interpolation between order statistics.
double quantile_sorted(const std::vector<double>& sorted, double prob);

}  // namespace robustbeta
