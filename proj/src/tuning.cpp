#include "robustbeta/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "robustbeta/errors.hpp"

namespace robustbeta {

void TuningConfig::validate() const {
  if (!(grid_step > 0.0) || !(grid_step <= alpha_max) || !(alpha_max < 1.0)) {
    throw InvalidArgument("tuning grid needs 0 < step <= alpha_max < 1");
  }
  if (window < 2) throw InvalidArgument("stability window must be at least 2");
  if (lookahead < 1) throw InvalidArgument("lookahead must be at least 1");
  if (!(threshold_scale > 0.0)) throw InvalidArgument("stability threshold must be positive");
  fit_options.validate();
}

std::vector<double> TuningConfig::grid() const {
  const auto steps = static_cast<int>(std::floor(alpha_max / grid_step + 1e-9));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) out.push_back(k * grid_step);
  return out;
}

double TuningConfig::threshold(Index n) const {
  return statistic == StabilityStatistic::standardized_difference
             ? threshold_scale / std::sqrt(static_cast<double>(n))
             : threshold_scale;
}

namespace {

double sqv(const TuningStep& prev, const TuningStep& next, const VectorXd& se0,
           StabilityStatistic statistic, Index n) {
  if (prev.status != FitStatus::converged || next.status != FitStatus::converged) {
    return std::numeric_limits<double>::infinity();
  }
  const auto p = static_cast<double>(se0.size());
  if (statistic == StabilityStatistic::standardized_difference) {
    const VectorXd diff = (next.theta.joined() - prev.theta.joined()).cwiseQuotient(se0);
    return diff.norm() / std::sqrt(p);
  }
  const VectorXd z_prev = prev.theta.joined().cwiseQuotient(prev.standard_errors);
  const VectorXd z_next = next.theta.joined().cwiseQuotient(next.standard_errors);
  return (z_next - z_prev).norm() / (std::sqrt(static_cast<double>(n)) * p);
}

}  // namespace

TuningResult select_alpha(const Problem& problem, Estimator kind, const TuningConfig& config) {
  config.validate();
  if (kind == Estimator::mle) throw InvalidArgument("select_alpha needs LSMLE or LMDPDE");
  const std::vector<double> grid = config.grid();
  const Index n = problem.model.n();
  const auto window = static_cast<std::size_t>(config.window);
  const std::size_t lookahead = std::min(static_cast<std::size_t>(config.lookahead), grid.size());

  TuningResult result;
  result.threshold = config.threshold(n);
  FitOptions options = config.fit_options;
  options.compute_covariance = true;
  std::vector<FitResult> fits;
  std::size_t candidate = 0;

  for (std::size_t j = 0; j < grid.size(); ++j) {
    FitResult f = fit(problem, {kind, grid[j]}, options);
    if (j == 0 && f.status != FitStatus::converged) {
      // Nothing to standardize against; fall back to the MLE slot.
      result.trace.push_back({grid[0], f.status, f.theta, f.standard_errors, 0.0});
      result.selected = std::move(f);
      return result;
    }
    if (f.status == FitStatus::converged) options.start = f.theta;
    TuningStep step{grid[j], f.status, f.theta, f.standard_errors, 0.0};
    if (j > 0) {
      step.sqv = sqv(result.trace.back(), step, result.trace.front().standard_errors,
                     config.statistic, n);
    }
    result.trace.push_back(std::move(step));
    fits.push_back(std::move(f));

    // trace[j].sqv compares grid j-1 and j; the candidate moves past every unstable step.
    if (j > 0 && !(result.trace[j].sqv < result.threshold)) candidate = j;
    if (j >= candidate + window && j + 1 >= lookahead) {
      result.alpha = grid[candidate];
      result.stable = true;
      result.selected = fits[candidate];
      return result;
    }
  }
  result.alpha = 0.0;
  result.selected = fits.front();
  return result;
}

}  // namespace robustbeta
