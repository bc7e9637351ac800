#include "robustbeta/robustbeta.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <new>
#include <stdexcept>
#include <sstream>
#include <string>

#include "robustbeta/diagnostics.hpp"
#include "robustbeta/errors.hpp"
#include "robustbeta/inference.hpp"
#include "robustbeta/simulation.hpp"
#include "robustbeta/tuning.hpp"
#include "robustbeta/version.hpp"

struct rb_problem {
  robustbeta::Problem problem;
};
struct rb_fit {
  robustbeta::FitResult result;
  std::size_t n = 0;
};
struct rb_tuning {
  robustbeta::TuningResult result;
  std::size_t n = 0;
};
struct rb_envelope {
  robustbeta::EnvelopeBands bands;
};
struct rb_report {
  robustbeta::ExperimentReport report;
};

namespace {

using namespace robustbeta;

thread_local std::string last_error;

rb_status fail(rb_status code, const char* what) {
  last_error = what;
  return code;
}

template <class F>
rb_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return RB_OK;
  } catch (const InvalidArgument& e) {
    return fail(RB_ERR_INVALID_ARGUMENT, e.what());
  } catch (const DomainError& e) {
    return fail(RB_ERR_DOMAIN, e.what());
  } catch (const SingularMatrix& e) {
    return fail(RB_ERR_SINGULAR, e.what());
  } catch (const NumericalError& e) {
    return fail(RB_ERR_NUMERICAL, e.what());
  } catch (const std::length_error& e) {
    return fail(RB_ERR_BUFFER_TOO_SMALL, e.what());
  } catch (const std::bad_alloc&) {
    return fail(RB_ERR_OUT_OF_MEMORY, "out of memory");
  } catch (const std::exception& e) {
    return fail(RB_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(RB_ERR_INTERNAL, "unknown exception");
  }
}

void require(bool condition, const char* what) {
  if (!condition) throw InvalidArgument(what);
}

std::size_t param_count(const rb_fit* fit) {
  return static_cast<std::size_t>(fit->result.theta.size());
}

void copy_string(const std::string& s, char* buffer, std::size_t capacity, std::size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (buffer == nullptr && capacity == 0) return;
  require(buffer != nullptr, "buffer is null");
  if (capacity < s.size() + 1) throw std::length_error("buffer too small");
  std::memcpy(buffer, s.c_str(), s.size() + 1);
}

rb_status string_out(const std::string& s, char* buffer, std::size_t capacity, std::size_t* needed) {
  return guarded([&] { copy_string(s, buffer, capacity, needed); });
}

MatrixXd row_major(const double* data, std::size_t rows, std::size_t cols) {
  MatrixXd m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = data[i * cols + j];
  }
  return m;
}

FitOptions to_fit_options(const rb_fit_options* o) {
  FitOptions f;
  if (o) {
    f.max_iterations = o->max_iterations;
    f.gradient_tolerance = o->gradient_tolerance;
    f.compute_covariance = o->compute_covariance != 0;
  }
  return f;
}

TuningConfig to_tuning(const rb_tuning_options* o) {
  TuningConfig t;
  if (o) {
    t.grid_step = o->grid_step;
    t.alpha_max = o->alpha_max;
    t.window = o->window;
    t.lookahead = o->lookahead;
    t.threshold_scale = o->threshold_scale;
    require(o->statistic == RB_STABILITY_Z || o->statistic == RB_STABILITY_STANDARDIZED,
            "unknown stability statistic");
    t.statistic = o->statistic == RB_STABILITY_Z ? StabilityStatistic::z_statistic
                                                 : StabilityStatistic::standardized_difference;
    t.fit_options = to_fit_options(&o->fit);
  }
  return t;
}

ScenarioConfig to_scenario(const rb_scenario* s) {
  require(s != nullptr, "scenario is null");
  ScenarioConfig c;
  c.scenario = parse_scenario(std::string(1, s->scenario));
  c.n = static_cast<Index>(s->n);
  c.contaminated = s->contaminated != 0;
  c.contamination_rate = s->contamination_rate;
  c.replications = s->replications;
  c.seed = s->seed;
  c.threads = s->threads;
  c.validate();
  return c;
}

void write_test(const TestResult& r, double* statistic, int* df, double* p_value) {
  if (statistic) *statistic = r.statistic;
  if (df) *df = r.df;
  if (p_value) *p_value = r.p_value;
}

std::vector<Index> coordinate_list(const std::size_t* coordinates, std::size_t d) {
  require(d == 0 || coordinates != nullptr, "coordinates are null");
  std::vector<Index> out;
  for (std::size_t k = 0; k < d; ++k) out.push_back(static_cast<Index>(coordinates[k]));
  return out;
}

VectorXd vector_from(const double* v, std::size_t d) {
  require(d == 0 || v != nullptr, "values are null");
  return Eigen::Map<const VectorXd>(v, static_cast<Index>(d));
}

}  // namespace

extern "C" {

const char* rb_version(void) { return kVersionString; }

const char* rb_last_error(void) { return last_error.c_str(); }

const char* rb_status_name(rb_status status) {
  switch (status) {
    case RB_OK: return "ok";
    case RB_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case RB_ERR_DOMAIN: return "domain_error";
    case RB_ERR_SINGULAR: return "singular_matrix";
    case RB_ERR_NUMERICAL: return "numerical_error";
    case RB_ERR_BUFFER_TOO_SMALL: return "buffer_too_small";
    case RB_ERR_OUT_OF_MEMORY: return "out_of_memory";
    case RB_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* rb_fit_status_name(int status) {
  if (status < RB_FIT_CONVERGED || status > RB_FIT_NON_PSD_COVARIANCE) return "unknown";
  return to_string(static_cast<FitStatus>(status)).data();
}

rb_status rb_problem_create(const double* y, size_t n, const double* x, size_t p1, const double* z,
                            size_t p2, const char* mean_link, const char* precision_link,
                            rb_problem** out) {
  return guarded([&] {
    require(out != nullptr, "output handle is null");
    *out = nullptr;
    require(y && x && z, "data pointers are null");
    require(p1 > 0 && p2 > 0, "both submodels need at least one column");
    const LinkFunction ml = LinkFunction::parse(mean_link ? mean_link : "logit");
    const LinkFunction pl = LinkFunction::parse(precision_link ? precision_link : "log");
    ModelSpec model(row_major(x, n, p1), row_major(z, n, p2), ml, pl);
    auto obs = make_observations(std::span<const double>(y, n));
    *out = new rb_problem{Problem(std::move(model), std::move(obs))};
  });
}

void rb_problem_free(rb_problem* problem) { delete problem; }

rb_status rb_problem_dims(const rb_problem* problem, size_t* n, size_t* p1, size_t* p2) {
  return guarded([&] {
    require(problem != nullptr, "problem is null");
    const ModelSpec& m = problem->problem.model;
    if (n) *n = static_cast<size_t>(m.n());
    if (p1) *p1 = static_cast<size_t>(m.p1());
    if (p2) *p2 = static_cast<size_t>(m.p2());
  });
}

rb_status rb_problem_response(const rb_problem* problem, double* y, size_t n) {
  return guarded([&] {
    require(problem && y, "null argument");
    const auto& obs = problem->problem.observations;
    require(n == obs.size(), "response length mismatch");
    for (size_t i = 0; i < n; ++i) y[i] = obs[i].y;
  });
}

rb_status rb_problem_design(const rb_problem* problem, double* x, double* z) {
  return guarded([&] {
    require(problem != nullptr, "problem is null");
    const ModelSpec& m = problem->problem.model;
    for (Index i = 0; i < m.n(); ++i) {
      for (Index j = 0; x && j < m.p1(); ++j) x[i * m.p1() + j] = m.x()(i, j);
      for (Index j = 0; z && j < m.p2(); ++j) z[i * m.p2() + j] = m.z()(i, j);
    }
  });
}

void rb_fit_options_default(rb_fit_options* options) {
  if (!options) return;
  const FitOptions d;
  options->max_iterations = d.max_iterations;
  options->gradient_tolerance = d.gradient_tolerance;
  options->compute_covariance = d.compute_covariance ? 1 : 0;
}

rb_status rb_fit_create(const rb_problem* problem, const char* estimator, double alpha,
                        const rb_fit_options* options, rb_fit** out) {
  return guarded([&] {
    require(out != nullptr, "output handle is null");
    *out = nullptr;
    require(problem && estimator, "null argument");
    const EstimatorKind kind{EstimatorKind::parse(estimator), alpha};
    kind.validate();
    FitResult f = fit(problem->problem, kind, to_fit_options(options));
    *out = new rb_fit{std::move(f), problem->problem.observations.size()};
  });
}

void rb_fit_free(rb_fit* fit) { delete fit; }

rb_status rb_fit_get_info(const rb_fit* fit, rb_fit_info* info) {
  return guarded([&] {
    require(fit && info, "null argument");
    const FitResult& f = fit->result;
    info->status = static_cast<int>(f.status);
    info->iterations = f.iterations;
    info->alpha = f.estimator.alpha;
    info->objective = f.objective;
    info->gradient_norm = f.gradient_norm;
    info->has_covariance = f.covariance.size() > 0 ? 1 : 0;
    info->n = fit->n;
    info->p1 = static_cast<size_t>(f.theta.beta.size());
    info->p2 = static_cast<size_t>(f.theta.gamma.size());
  });
}

rb_status rb_fit_estimator(const rb_fit* fit, char* buffer, size_t capacity, size_t* needed) {
  if (!fit) return fail(RB_ERR_INVALID_ARGUMENT, "fit is null");
  const std::string name(fit->result.estimator.name());
  return string_out(name, buffer, capacity, needed);
}

rb_status rb_fit_message(const rb_fit* fit, char* buffer, size_t capacity, size_t* needed) {
  if (!fit) return fail(RB_ERR_INVALID_ARGUMENT, "fit is null");
  const std::string& msg = fit->result.message;
  return string_out(msg, buffer, capacity, needed);
}

rb_status rb_fit_coefficients(const rb_fit* fit, double* theta, double* se, size_t p) {
  return guarded([&] {
    require(fit && theta, "null argument");
    require(p == param_count(fit), "coefficient length mismatch");
    const VectorXd t = fit->result.theta.joined();
    const VectorXd& s = fit->result.standard_errors;
    for (size_t j = 0; j < p; ++j) {
      theta[j] = t[static_cast<Index>(j)];
      if (se) se[j] = s.size() == t.size() ? s[static_cast<Index>(j)] : std::numeric_limits<double>::quiet_NaN();
    }
  });
}

rb_status rb_fit_covariance(const rb_fit* fit, double* covariance, size_t p) {
  return guarded([&] {
    require(fit && covariance, "null argument");
    require(p == param_count(fit), "covariance size mismatch");
    const MatrixXd& v = fit->result.covariance;
    if (v.size() == 0) throw NumericalError("fit has no covariance");
    for (size_t i = 0; i < p; ++i) {
      for (size_t j = 0; j < p; ++j) covariance[i * p + j] = v(static_cast<Index>(i), static_cast<Index>(j));
    }
  });
}

rb_status rb_fit_weights(const rb_fit* fit, double* weights, size_t n) {
  return guarded([&] {
    require(fit && weights, "null argument");
    const VectorXd& w = fit->result.weights;
    require(n == static_cast<size_t>(w.size()), "weights length mismatch");
    for (size_t i = 0; i < n; ++i) weights[i] = w[static_cast<Index>(i)];
  });
}

rb_status rb_wald_coordinates(const rb_fit* fit, const size_t* coordinates, const double* values,
                              size_t d, double* statistic, int* df, double* p_value) {
  return guarded([&] {
    require(fit != nullptr, "fit is null");
    const auto h = HypothesisSpec::coordinates(coordinate_list(coordinates, d), vector_from(values, d),
                                               static_cast<Index>(param_count(fit)));
    write_test(wald_test(fit->result, h), statistic, df, p_value);
  });
}

rb_status rb_wald_coordinates_raw(const double* theta, const double* covariance, size_t p,
                                  const size_t* coordinates, const double* values, size_t d,
                                  double* statistic, int* df, double* p_value) {
  return guarded([&] {
    require(theta && covariance, "null argument");
    const auto h = HypothesisSpec::coordinates(coordinate_list(coordinates, d), vector_from(values, d),
                                               static_cast<Index>(p));
    write_test(wald_test(vector_from(theta, p), row_major(covariance, p, p), h), statistic, df, p_value);
  });
}

rb_status rb_wald_linear(const rb_fit* fit, const double* matrix, const double* target, size_t d,
                         double* statistic, int* df, double* p_value) {
  return guarded([&] {
    require(fit && matrix, "null argument");
    const auto h = HypothesisSpec::linear(row_major(matrix, d, param_count(fit)), vector_from(target, d));
    write_test(wald_test(fit->result, h), statistic, df, p_value);
  });
}

void rb_tuning_options_default(rb_tuning_options* options) {
  if (!options) return;
  const TuningConfig d;
  options->grid_step = d.grid_step;
  options->alpha_max = d.alpha_max;
  options->window = d.window;
  options->lookahead = d.lookahead;
  options->threshold_scale = d.threshold_scale;
  options->statistic = d.statistic == StabilityStatistic::z_statistic ? RB_STABILITY_Z : RB_STABILITY_STANDARDIZED;
  rb_fit_options_default(&options->fit);
}

rb_status rb_tune(const rb_problem* problem, const char* estimator, const rb_tuning_options* options,
                  rb_tuning** out) {
  return guarded([&] {
    require(out != nullptr, "output handle is null");
    *out = nullptr;
    require(problem && estimator, "null argument");
    TuningResult r = select_alpha(problem->problem, EstimatorKind::parse(estimator), to_tuning(options));
    *out = new rb_tuning{std::move(r), problem->problem.observations.size()};
  });
}

void rb_tuning_free(rb_tuning* tuning) { delete tuning; }

rb_status rb_tuning_result(const rb_tuning* tuning, double* alpha, int* stable, double* threshold,
                           size_t* trace_length) {
  return guarded([&] {
    require(tuning != nullptr, "tuning is null");
    if (alpha) *alpha = tuning->result.alpha;
    if (stable) *stable = tuning->result.stable ? 1 : 0;
    if (threshold) *threshold = tuning->result.threshold;
    if (trace_length) *trace_length = tuning->result.trace.size();
  });
}

rb_status rb_tuning_step(const rb_tuning* tuning, size_t index, double* alpha, double* sqv,
                         int* fit_status, double* theta, size_t p) {
  return guarded([&] {
    require(tuning != nullptr, "tuning is null");
    require(index < tuning->result.trace.size(), "trace index out of range");
    const TuningStep& s = tuning->result.trace[index];
    if (alpha) *alpha = s.alpha;
    if (sqv) *sqv = s.sqv;
    if (fit_status) *fit_status = static_cast<int>(s.status);
    if (theta) {
      const VectorXd t = s.theta.joined();
      require(p == static_cast<size_t>(t.size()), "coefficient length mismatch");
      for (size_t j = 0; j < p; ++j) theta[j] = t[static_cast<Index>(j)];
    }
  });
}

rb_status rb_tuning_selected(const rb_tuning* tuning, rb_fit** out) {
  return guarded([&] {
    require(tuning && out, "null argument");
    *out = new rb_fit{tuning->result.selected, tuning->n};
  });
}

rb_status rb_residuals(const rb_problem* problem, const rb_fit* fit, double* residuals,
                       double* leverage, size_t n) {
  return guarded([&] {
    require(problem && fit && residuals, "null argument");
    require(n == problem->problem.observations.size(), "residual length mismatch");
    const Residuals r = residuals_swr2(problem->problem, fit->result);
    for (size_t i = 0; i < n; ++i) {
      residuals[i] = r.values[static_cast<Index>(i)];
      if (leverage) leverage[i] = r.leverage[static_cast<Index>(i)];
    }
  });
}

void rb_envelope_options_default(rb_envelope_options* options) {
  if (!options) return;
  const EnvelopeOptions d;
  options->replications = d.replications;
  options->coverage = d.coverage;
  options->seed = d.seed;
  options->threads = d.threads;
  options->absolute = d.absolute ? 1 : 0;
}

rb_status rb_envelope_create(const rb_problem* problem, const rb_fit* fit,
                             const rb_envelope_options* options, rb_envelope** out) {
  return guarded([&] {
    require(out != nullptr, "output handle is null");
    *out = nullptr;
    require(problem && fit, "null argument");
    EnvelopeOptions o;
    if (options) {
      o.replications = options->replications;
      o.coverage = options->coverage;
      o.seed = options->seed;
      o.threads = options->threads;
      o.absolute = options->absolute != 0;
    }
    *out = new rb_envelope{simulated_envelope(problem->problem, fit->result, o)};
  });
}

void rb_envelope_free(rb_envelope* envelope) { delete envelope; }

rb_status rb_envelope_get_info(const rb_envelope* envelope, rb_envelope_info* info) {
  return guarded([&] {
    require(envelope && info, "null argument");
    const EnvelopeBands& b = envelope->bands;
    info->n = static_cast<size_t>(b.residuals.size());
    info->replications = b.replications;
    info->failed = b.failed;
    info->coarse = b.coarse ? 1 : 0;
    info->unreliable = b.unreliable ? 1 : 0;
    info->outside = static_cast<size_t>(b.outside);
  });
}

rb_status rb_envelope_bands(const rb_envelope* envelope, double* residuals, double* lower,
                            double* median, double* upper, double* theoretical, size_t n) {
  return guarded([&] {
    require(envelope != nullptr, "envelope is null");
    const EnvelopeBands& b = envelope->bands;
    require(n == static_cast<size_t>(b.residuals.size()), "band length mismatch");
    for (size_t i = 0; i < n; ++i) {
      const auto k = static_cast<Index>(i);
      if (residuals) residuals[i] = b.residuals[k];
      if (lower) lower[i] = b.lower[k];
      if (median) median[i] = b.median[k];
      if (upper) upper[i] = b.upper[k];
      if (theoretical) theoretical[i] = b.theoretical[k];
    }
  });
}

void rb_scenario_default(rb_scenario* scenario) {
  if (!scenario) return;
  const ScenarioConfig d;
  scenario->scenario = 'A';
  scenario->n = static_cast<size_t>(d.n);
  scenario->contaminated = 0;
  scenario->contamination_rate = d.contamination_rate;
  scenario->replications = d.replications;
  scenario->seed = d.seed;
  scenario->threads = d.threads;
}

rb_status rb_scenario_generate(const rb_scenario* scenario, int replication, rb_problem** out,
                               double* truth, size_t p) {
  return guarded([&] {
    require(out != nullptr, "output handle is null");
    *out = nullptr;
    require(replication >= 0, "replication index must be non-negative");
    Dataset d = generate_scenario(to_scenario(scenario), replication);
    if (truth) {
      const VectorXd t = d.truth.joined();
      require(p == static_cast<size_t>(t.size()), "truth length mismatch");
      for (size_t j = 0; j < p; ++j) truth[j] = t[static_cast<Index>(j)];
    }
    *out = new rb_problem{std::move(d.problem)};
  });
}

rb_status rb_simulate(const rb_scenario* scenario, const char* experiment, const double* alphas,
                      size_t alpha_count, double fixed_alpha, const rb_tuning_options* tuning,
                      rb_report** out) {
  return guarded([&] {
    require(out != nullptr, "output handle is null");
    *out = nullptr;
    require(experiment != nullptr, "experiment is null");
    const ScenarioConfig c = to_scenario(scenario);
    const TuningConfig t = to_tuning(tuning);
    const std::string name(experiment);
    if (name == "failure") {
      require(alpha_count > 0 && alphas != nullptr, "failure experiment needs an alpha grid");
      *out = new rb_report{run_failure_rate(c, std::vector<double>(alphas, alphas + alpha_count), t.fit_options)};
    } else if (name == "compare") {
      *out = new rb_report{run_estimator_comparison(c, t)};
    } else if (name == "levels") {
      std::optional<double> fixed;
      if (!std::isnan(fixed_alpha)) fixed = fixed_alpha;
      *out = new rb_report{run_empirical_levels(c, scenario_hypotheses(c.scenario), t, fixed)};
    } else {
      throw InvalidArgument("unknown experiment '" + name + "'");
    }
  });
}

void rb_report_free(rb_report* report) { delete report; }

rb_status rb_report_csv(const rb_report* report, char* buffer, size_t capacity, size_t* needed) {
  if (!report) return fail(RB_ERR_INVALID_ARGUMENT, "report is null");
  std::ostringstream s;
  report->report.write_csv(s);
  const std::string text = s.str();
  return string_out(text, buffer, capacity, needed);
}

rb_status rb_report_manifest(const rb_report* report, char* buffer, size_t capacity, size_t* needed) {
  if (!report) return fail(RB_ERR_INVALID_ARGUMENT, "report is null");
  const std::string text = report->report.manifest_json();
  return string_out(text, buffer, capacity, needed);
}

rb_status rb_report_failure_rate(const rb_report* report, const char* estimator, double alpha,
                                 double* rate) {
  return guarded([&] {
    require(report && estimator && rate, "null argument");
    std::optional<double> setting;
    if (alpha >= 0.0) setting = alpha;
    *rate = report->report.failure_rate(estimator, setting);
  });
}

rb_status rb_report_rejection_rate(const rb_report* report, const char* estimator,
                                   size_t hypothesis, double level, double* rate) {
  return guarded([&] {
    require(report && estimator && rate, "null argument");
    require(hypothesis < report->report.hypotheses.size(), "hypothesis index out of range");
    *rate = report->report.rejection_rate(estimator, hypothesis, level);
  });
}

rb_status rb_report_median(const rb_report* report, const char* estimator, size_t coordinate,
                           double* median) {
  return guarded([&] {
    require(report && estimator && median, "null argument");
    *median = report->report.median_estimate(estimator, static_cast<Index>(coordinate));
  });
}

rb_status rb_report_alphas(const rb_report* report, const char* estimator, double* alphas,
                           size_t capacity, size_t* count) {
  return guarded([&] {
    require(report && estimator, "null argument");
    const std::vector<double> a = report->report.selected_alphas(estimator);
    if (count) *count = a.size();
    if (alphas == nullptr && capacity == 0) return;
    require(alphas != nullptr, "buffer is null");
    if (capacity < a.size()) throw std::length_error("buffer too small");
    std::copy(a.begin(), a.end(), alphas);
  });
}

}  // extern "C"
