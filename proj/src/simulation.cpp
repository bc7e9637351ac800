#include "robustbeta/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "parallel.hpp"
#include "robustbeta/density.hpp"
#include "robustbeta/errors.hpp"
#include "robustbeta/version.hpp"

namespace robustbeta {
namespace {

constexpr Index kBlock = 40;
constexpr std::uint64_t kCovariateStream = 0x636f76;  // "cov"
constexpr std::uint64_t kResponseStream = 0x726573;   // "res"

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

ReplicationRecord record_fit(const std::string& name, double alpha_setting, int rep,
                             const FitResult& f, const std::vector<NamedHypothesis>& hyps,
                             const ParamVector& truth) {
  ReplicationRecord r;
  r.estimator = name;
  r.alpha_setting = alpha_setting;
  r.replication = rep;
  r.alpha = f.estimator.alpha;
  r.status = f.status;
  r.theta = f.theta.joined();
  r.standard_errors = f.standard_errors;
  const VectorXd t = truth.joined();
  for (const auto& h : hyps) {
    double p = std::numeric_limits<double>::quiet_NaN();
    if (!f.failed()) {
      VectorXd target(static_cast<Index>(h.coordinates.size()));
      for (std::size_t k = 0; k < h.coordinates.size(); ++k) {
        target[static_cast<Index>(k)] = t[h.coordinates[k]];
      }
      try {
        p = wald_test(f, HypothesisSpec::coordinates(h.coordinates, target, t.size())).p_value;
      } catch (const SingularMatrix&) {
      }
    }
    r.p_values.push_back(p);
  }
  return r;
}

std::vector<std::string> hypothesis_names(const std::vector<NamedHypothesis>& hyps) {
  std::vector<std::string> names;
  for (const auto& h : hyps) names.push_back(h.name);
  return names;
}

}  // namespace

Scenario parse_scenario(std::string_view name) {
  if (name == "A" || name == "a") return Scenario::A;
  if (name == "B" || name == "b") return Scenario::B;
  if (name == "C" || name == "c") return Scenario::C;
  throw InvalidArgument("unknown scenario '" + std::string(name) + "'");
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::A: return "A";
    case Scenario::B: return "B";
    case Scenario::C: return "C";
  }
  return "?";
}

void ScenarioConfig::validate() const {
  if (n < kBlock || n % kBlock != 0) {
    throw InvalidArgument("scenario sample size must be a positive multiple of 40");
  }
  if (!(contamination_rate > 0.0 && contamination_rate < 0.5)) {
    throw InvalidArgument("contamination rate must lie in (0, 0.5)");
  }
  if (replications < 1) throw InvalidArgument("replications must be positive");
}

Index ScenarioConfig::contaminated_count() const {
  return static_cast<Index>(std::ceil(contamination_rate * static_cast<double>(n) - 1e-9));
}

ParamVector scenario_truth(Scenario s) {
  switch (s) {
    case Scenario::A: return {Eigen::Vector2d(-1.0, -2.0), VectorXd::Constant(1, 5.0)};
    case Scenario::B: return {Eigen::Vector2d(-1.0, -5.5), VectorXd::Constant(1, 5.0)};
    case Scenario::C: return {Eigen::Vector2d(-3.0, 7.5), Eigen::Vector2d(1.0, 2.0)};
  }
  throw InvalidArgument("unknown scenario");
}

ModelSpec scenario_design(const ScenarioConfig& config) {
  config.validate();
  Rng rng = make_rng(config.seed, kCovariateStream, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  VectorXd block(kBlock);
  for (Index i = 0; i < kBlock; ++i) block[i] = unif(rng);
  MatrixXd x(config.n, 2);
  for (Index i = 0; i < config.n; ++i) x.row(i) << 1.0, block[i % kBlock];
  if (config.scenario == Scenario::C) return ModelSpec(x, x);
  return ModelSpec(x, MatrixXd::Ones(config.n, 1));
}

Dataset generate_scenario(const ScenarioConfig& config, int replication) {
  ModelSpec model = scenario_design(config);
  const ParamVector truth = scenario_truth(config.scenario);
  const Predictors pr = predictors(model, truth);
  VectorXd mu = pr.mu, phi = pr.phi;

  std::vector<Index> replaced;
  if (config.contaminated) {
    std::vector<Index> order(static_cast<std::size_t>(config.n));
    std::iota(order.begin(), order.end(), Index{0});
    const bool lowest = config.scenario == Scenario::A;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return lowest ? pr.mu[a] < pr.mu[b] : pr.mu[a] > pr.mu[b];
    });
    replaced.assign(order.begin(), order.begin() + config.contaminated_count());
    std::sort(replaced.begin(), replaced.end());
    for (Index i : replaced) {
      switch (config.scenario) {
        case Scenario::A: mu[i] = (1.0 + pr.mu[i]) / 2.0; break;
        case Scenario::B: mu[i] = 0.002; break;
        case Scenario::C:
          mu[i] = logistic(truth.beta[0]);
          phi[i] = std::exp(truth.gamma[0] + truth.gamma[1]);
          break;
      }
    }
  }

  Rng rng = make_rng(config.seed, kResponseStream, static_cast<std::uint64_t>(replication));
  std::vector<Observation> obs;
  obs.reserve(static_cast<std::size_t>(config.n));
  for (Index i = 0; i < config.n; ++i) {
    obs.push_back(Observation::from_response(sample_beta(mu[i], phi[i], rng)));
  }
  return {Problem(std::move(model), std::move(obs)), truth, std::move(replaced)};
}

NamedHypothesis standard_hypothesis(int number) {
  switch (number) {
    case 1: return {"H1", {1}};
    case 2: return {"H2", {0, 1}};
    case 3: return {"H3", {0, 1, 2}};
    case 4: return {"H4", {1, 3}};
    case 5: return {"H5", {0, 1, 3}};
    case 6: return {"H6", {3}};
  }
  throw InvalidArgument("standard hypotheses are numbered 1 to 6");
}

std::vector<NamedHypothesis> scenario_hypotheses(Scenario s) {
  if (s == Scenario::C) return {standard_hypothesis(4), standard_hypothesis(5), standard_hypothesis(6)};
  return {standard_hypothesis(1), standard_hypothesis(2), standard_hypothesis(3)};
}

std::vector<const ReplicationRecord*> ExperimentReport::select(
    std::string_view estimator, std::optional<double> alpha_setting) const {
  std::vector<const ReplicationRecord*> out;
  for (const auto& r : records) {
    if (r.estimator != estimator) continue;
    if (alpha_setting && std::abs(r.alpha_setting - *alpha_setting) > 1e-12) continue;
    out.push_back(&r);
  }
  return out;
}

double ExperimentReport::failure_rate(std::string_view estimator,
                                      std::optional<double> alpha_setting) const {
  const auto rows = select(estimator, alpha_setting);
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto failed = std::count_if(rows.begin(), rows.end(), [](const ReplicationRecord* r) {
    return r->status != FitStatus::converged;
  });
  return static_cast<double>(failed) / static_cast<double>(rows.size());
}

double ExperimentReport::rejection_rate(std::string_view estimator, std::size_t k,
                                        double level) const {
  std::size_t used = 0, rejected = 0;
  for (const auto* r : select(estimator)) {
    if (k >= r->p_values.size() || std::isnan(r->p_values[k])) continue;
    ++used;
    if (r->p_values[k] < level) ++rejected;
  }
  return used ? static_cast<double>(rejected) / static_cast<double>(used)
              : std::numeric_limits<double>::quiet_NaN();
}

double sample_median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double ExperimentReport::median_estimate(std::string_view estimator, Index coordinate) const {
  std::vector<double> v;
  for (const auto* r : select(estimator)) {
    if (r->status == FitStatus::converged && coordinate < r->theta.size()) v.push_back(r->theta[coordinate]);
  }
  return sample_median(std::move(v));
}

std::vector<double> ExperimentReport::selected_alphas(std::string_view estimator) const {
  std::vector<double> v;
  for (const auto* r : select(estimator)) v.push_back(r->alpha);
  return v;
}

void ExperimentReport::write_csv(std::ostream& out) const {
  const Index p = scenario_truth(config.scenario).size();
  out << "experiment,scenario,n,contaminated,estimator,alpha_setting,replication,alpha,stable,status";
  for (Index j = 0; j < p; ++j) out << ",theta" << j + 1;
  for (Index j = 0; j < p; ++j) out << ",se" << j + 1;
  for (const auto& h : hypotheses) out << ",p_" << h;
  out << '\n';
  for (const auto& r : records) {
    out << experiment << ',' << to_string(config.scenario) << ',' << config.n << ','
        << (config.contaminated ? 1 : 0) << ',' << r.estimator << ','
        << (r.alpha_setting < 0 ? std::string("tuned") : format_double(r.alpha_setting)) << ','
        << r.replication << ',' << format_double(r.alpha) << ',' << (r.stable ? 1 : 0) << ','
        << to_string(r.status);
    for (Index j = 0; j < p; ++j) out << ',' << (j < r.theta.size() ? format_double(r.theta[j]) : "NA");
    for (Index j = 0; j < p; ++j) {
      out << ',' << (j < r.standard_errors.size() ? format_double(r.standard_errors[j]) : "NA");
    }
    for (double pv : r.p_values) out << ',' << format_double(pv);
    out << '\n';
  }
}

std::string ExperimentReport::manifest_json() const {
  nlohmann::ordered_json j;
  j["experiment"] = experiment;
  j["software_version"] = kVersionString;
  j["config"] = {{"scenario", std::string(to_string(config.scenario))},
                 {"n", config.n},
                 {"contaminated", config.contaminated},
                 {"contamination_rate", config.contamination_rate},
                 {"replications", config.replications},
                 {"seed", config.seed}};
  j["hypotheses"] = hypotheses;
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  std::vector<std::pair<std::string, double>> groups;
  for (const auto& r : records) {
    const std::pair<std::string, double> key{r.estimator, r.alpha_setting};
    if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
  }
  for (const auto& [name, setting] : groups) {
    nlohmann::ordered_json g;
    g["estimator"] = name;
    g["alpha_setting"] = setting < 0 ? nlohmann::ordered_json("tuned") : nlohmann::ordered_json(setting);
    const auto rows = select(name, setting);
    g["replications"] = rows.size();
    g["failure_rate"] = failure_rate(name, setting);
    std::vector<double> alphas;
    for (const auto* r : rows) alphas.push_back(r->alpha);
    g["median_alpha"] = sample_median(alphas);
    nlohmann::ordered_json rates = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < hypotheses.size(); ++k) {
      std::size_t used = 0, rejected = 0;
      for (const auto* r : rows) {
        if (std::isnan(r->p_values[k])) continue;
        ++used;
        rejected += r->p_values[k] < 0.05;
      }
      rates[hypotheses[k]] = used ? static_cast<double>(rejected) / static_cast<double>(used) : -1.0;
    }
    if (!hypotheses.empty()) g["rejection_rate_5pct"] = rates;
    summary.push_back(g);
  }
  j["summary"] = summary;
  return j.dump(2);
}

ExperimentReport run_failure_rate(const ScenarioConfig& config, const std::vector<double>& alphas,
                                  const FitOptions& options) {
  config.validate();
  const std::size_t per_rep = 2 * alphas.size();
  std::vector<ReplicationRecord> slots(static_cast<std::size_t>(config.replications) * per_rep);
  detail::parallel_for(static_cast<std::size_t>(config.replications), config.threads, [&](std::size_t rep) {
    const Dataset data = generate_scenario(config, static_cast<int>(rep));
    std::size_t k = 0;
    for (const Estimator kind : {Estimator::lsmle, Estimator::lmdpde}) {
      for (double alpha : alphas) {
        const FitResult f = fit(data.problem, {kind, alpha}, options);
        slots[rep * per_rep + k++] =
            record_fit(std::string(EstimatorKind{kind, alpha}.name()), alpha, static_cast<int>(rep), f, {}, data.truth);
      }
    }
  });
  return {"failure", config, {}, std::move(slots)};
}

namespace {

ReplicationRecord tuned_record(const std::string& name, Estimator kind, int rep, const Dataset& data,
                               const TuningConfig& tuning, const std::vector<NamedHypothesis>& hyps) {
  const TuningResult t = select_alpha(data.problem, kind, tuning);
  ReplicationRecord r = record_fit(name, -1.0, rep, t.selected, hyps, data.truth);
  r.alpha = t.alpha;
  r.stable = t.stable;
  return r;
}

ExperimentReport run_with_hypotheses(const std::string& experiment, const ScenarioConfig& config,
                                     const std::vector<NamedHypothesis>& hyps,
                                     const TuningConfig& tuning, std::optional<double> fixed_alpha) {
  config.validate();
  tuning.validate();
  constexpr std::size_t per_rep = 3;
  std::vector<ReplicationRecord> slots(static_cast<std::size_t>(config.replications) * per_rep);
  detail::parallel_for(static_cast<std::size_t>(config.replications), config.threads, [&](std::size_t rep) {
    const Dataset data = generate_scenario(config, static_cast<int>(rep));
    const int r = static_cast<int>(rep);
    slots[rep * per_rep] = record_fit("MLE", 0.0, r, fit(data.problem, EstimatorKind::mle(), tuning.fit_options), hyps, data.truth);
    std::size_t k = 1;
    for (const Estimator kind : {Estimator::lsmle, Estimator::lmdpde}) {
      const std::string name(EstimatorKind{kind, 0.0}.name());
      if (fixed_alpha) {
        const FitResult f = fit(data.problem, {kind, *fixed_alpha}, tuning.fit_options);
        slots[rep * per_rep + k++] = record_fit(name, *fixed_alpha, r, f, hyps, data.truth);
      } else {
        slots[rep * per_rep + k++] = tuned_record(name, kind, r, data, tuning, hyps);
      }
    }
  });
  return {experiment, config, hypothesis_names(hyps), std::move(slots)};
}

}  // namespace

ExperimentReport run_estimator_comparison(const ScenarioConfig& config, const TuningConfig& tuning) {
  return run_with_hypotheses("compare", config, {}, tuning, std::nullopt);
}

ExperimentReport run_empirical_levels(const ScenarioConfig& config,
                                      const std::vector<NamedHypothesis>& hypotheses,
                                      const TuningConfig& tuning, std::optional<double> fixed_alpha) {
  return run_with_hypotheses("levels", config, hypotheses, tuning, fixed_alpha);
}

}  // namespace robustbeta
