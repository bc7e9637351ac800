#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "robustbeta/estimators.hpp"
#include "robustbeta/inference.hpp"
#include "robustbeta/tuning.hpp"

namespace robustbeta {

enum class Scenario { A, B, C };

Scenario parse_scenario(std::string_view name);
std::string_view to_string(Scenario s);

struct ScenarioConfig {
  Scenario scenario = Scenario::A;
  Index n = 40;  // a multiple of the 40-row covariate block
  bool contaminated = false;
  double contamination_rate = 0.05;
  int replications = 200;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: hardware concurrency

  void validate() const;
  Index contaminated_count() const;
};

/// True parameter vector of a scenario: (beta1, beta2, gamma1[, gamma2]).
ParamVector scenario_truth(Scenario s);

/// Design of a scenario: the 40-row uniform covariate block, drawn once from the master seed and
/// replicated n / 40 times.
ModelSpec scenario_design(const ScenarioConfig& config);

struct Dataset {
  Problem problem;
  ParamVector truth;
  std::vector<Index> contaminated;  // rows replaced by contaminating draws, ascending
};

Dataset generate_scenario(const ScenarioConfig& config, int replication);

/// Named coordinate restriction at the scenario truth.
struct NamedHypothesis {
  std::string name;
  std::vector<Index> coordinates;
};
/// H1: beta2; H2: (beta1, beta2); H3: (beta1, beta2, gamma1); H4: (beta2, gamma2);
/// H5: (beta1, beta2, gamma2); H6: gamma2.
NamedHypothesis standard_hypothesis(int number);
/// H1-H3 for scenarios A and B, H4-H6 for C.
std::vector<NamedHypothesis> scenario_hypotheses(Scenario s);

/// alpha_setting < 0 means the tuned alpha.
struct ReplicationRecord {
  std::string estimator;
  double alpha_setting = 0.0;
  int replication = 0;
  double alpha = 0.0;
  bool stable = true;
  FitStatus status = FitStatus::max_iterations;
  VectorXd theta;
  VectorXd standard_errors;
  std::vector<double> p_values;  // one per hypothesis; NaN when the fit failed
};

struct ExperimentReport {
  std::string experiment;
  ScenarioConfig config;
  std::vector<std::string> hypotheses;
  std::vector<ReplicationRecord> records;

  std::vector<const ReplicationRecord*> select(std::string_view estimator,
                                               std::optional<double> alpha_setting = {}) const;
  double failure_rate(std::string_view estimator, std::optional<double> alpha_setting = {}) const;
  /// Rejections at `level` over successful fits for hypothesis index k.
  double rejection_rate(std::string_view estimator, std::size_t k, double level = 0.05) const;
  double median_estimate(std::string_view estimator, Index coordinate) const;
  std::vector<double> selected_alphas(std::string_view estimator) const;

  void write_csv(std::ostream& out) const;
  std::string manifest_json() const;
};

ExperimentReport run_failure_rate(const ScenarioConfig& config, const std::vector<double>& alphas,
                                  const FitOptions& options = {});

/// MLE plus tuned LSMLE and LMDPDE per replication.
ExperimentReport run_estimator_comparison(const ScenarioConfig& config,
                                          const TuningConfig& tuning = {});

/// Wald-type rejection of the true-value restrictions. Robust estimators use the tuned alpha
/// unless fixed_alpha is given.
ExperimentReport run_empirical_levels(const ScenarioConfig& config,
                                      const std::vector<NamedHypothesis>& hypotheses,
                                      const TuningConfig& tuning = {},
                                      std::optional<double> fixed_alpha = {});

double sample_median(std::vector<double> values);

}  // namespace robustbeta
