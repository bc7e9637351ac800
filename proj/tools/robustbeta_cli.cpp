#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <functional>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csv_table.hpp"
#include "json.hpp"
#include "robustbeta/robustbeta.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using rbcli::csv_field;
using rbcli::format_number;
using rbcli::InputError;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;
constexpr int kExitNotConverged = 3;
constexpr int kExitSingular = 4;

struct CommandError : std::runtime_error {
  CommandError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

struct Deleter {
  void operator()(rb_problem* p) const { rb_problem_free(p); }
  void operator()(rb_fit* p) const { rb_fit_free(p); }
  void operator()(rb_tuning* p) const { rb_tuning_free(p); }
  void operator()(rb_envelope* p) const { rb_envelope_free(p); }
  void operator()(rb_report* p) const { rb_report_free(p); }
};
template <class T>
using Handle = std::unique_ptr<T, Deleter>;

void check(rb_status s, const std::string& context) {
  if (s == RB_OK) return;
  const std::string msg = context + ": " + rb_last_error();
  switch (s) {
    case RB_ERR_INVALID_ARGUMENT:
    case RB_ERR_DOMAIN: throw CommandError(kExitInput, msg);
    case RB_ERR_SINGULAR: throw CommandError(kExitSingular, msg);
    case RB_ERR_NUMERICAL: throw CommandError(kExitNotConverged, msg);
    default: throw CommandError(kExitInternal, msg);
  }
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw CommandError(kExitInternal, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

/// Artifact sink: files go under one directory and are fingerprinted for the manifest.
class Output {
 public:
  explicit Output(std::string dir) : dir_(std::move(dir)) {}

  void prepare() {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw CommandError(kExitInput, "cannot create output directory '" + dir_ + "': " + ec.message());
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path path = fs::path(dir_) / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    out.close();
    if (!out) throw CommandError(kExitInternal, "cannot write '" + path.string() + "'");
    files_.push_back({{"file", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
  }

  const std::string& dir() const { return dir_; }
  const json& files() const { return files_; }

 private:
  std::string dir_;
  json files_ = json::array();
};

struct ModelArgs {
  std::string data;
  std::string response;
  std::vector<std::string> mean_covariates;
  std::vector<std::string> precision_covariates;
  std::string mean_link = "logit";
  std::string precision_link = "log";
  bool no_intercept_mean = false;
  bool no_intercept_precision = false;
};

struct EstimatorArgs {
  std::string estimator = "mle";
  std::string alpha = "0";
};

struct NumericArgs {
  int max_iterations = 500;
  double tolerance = 1e-6;
  double grid_step = 0.02;
  double alpha_max = 0.5;
  int window = 3;
  int lookahead = 11;
  double threshold = 0.02;
  std::string statistic = "z";
};

void add_model_options(CLI::App* cmd, ModelArgs& m, bool data_required = true) {
  auto* d = cmd->add_option("--data", m.data, "CSV file with a header row")->check(CLI::ExistingFile);
  auto* r = cmd->add_option("--response", m.response, "response column, values in (0, 1)");
  if (data_required) {
    d->required();
    r->required();
  }
  cmd->add_option("--mean-covariates", m.mean_covariates, "mean submodel columns")->delimiter(',');
  cmd->add_option("--precision-covariates", m.precision_covariates, "precision submodel columns")->delimiter(',');
  cmd->add_option("--mean-link", m.mean_link, "logit, probit, cloglog, cauchit")->capture_default_str();
  cmd->add_option("--precision-link", m.precision_link, "log, sqrt, identity")->capture_default_str();
  cmd->add_flag("--no-intercept-mean", m.no_intercept_mean, "omit the mean intercept");
  cmd->add_flag("--no-intercept-precision", m.no_intercept_precision, "omit the precision intercept");
}

void add_estimator_options(CLI::App* cmd, EstimatorArgs& e, bool allow_mle = true) {
  if (!allow_mle) e.estimator = "lsmle";
  auto* opt = cmd->add_option("--estimator", e.estimator, allow_mle ? "mle, lsmle or lmdpde" : "lsmle or lmdpde")
                  ->capture_default_str();
  opt->check(allow_mle ? CLI::IsMember({"mle", "lsmle", "lmdpde"}, CLI::ignore_case)
                       : CLI::IsMember({"lsmle", "lmdpde"}, CLI::ignore_case));
  if (allow_mle) cmd->add_option("--alpha", e.alpha, "tuning constant in [0, 1) or 'auto'")->capture_default_str();
}

void add_numeric_options(CLI::App* cmd, NumericArgs& a) {
  cmd->add_option("--max-iterations", a.max_iterations)->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--tolerance", a.tolerance, "estimating-equation tolerance")->capture_default_str();
  cmd->add_option("--grid-step", a.grid_step, "tuning grid step")->capture_default_str();
  cmd->add_option("--alpha-max", a.alpha_max, "largest grid alpha")->capture_default_str();
  cmd->add_option("--window", a.window, "consecutive stable steps")->capture_default_str();
  cmd->add_option("--lookahead", a.lookahead, "grid points fitted before a decision")->capture_default_str();
  cmd->add_option("--threshold", a.threshold, "stability threshold scale")->capture_default_str();
  cmd->add_option("--statistic", a.statistic, "z or standardized")
      ->capture_default_str()
      ->check(CLI::IsMember({"z", "standardized"}));
}

rb_fit_options fit_options(const NumericArgs& a) {
  rb_fit_options o;
  rb_fit_options_default(&o);
  o.max_iterations = a.max_iterations;
  o.gradient_tolerance = a.tolerance;
  return o;
}

rb_tuning_options tuning_options(const NumericArgs& a) {
  rb_tuning_options t;
  rb_tuning_options_default(&t);
  t.grid_step = a.grid_step;
  t.alpha_max = a.alpha_max;
  t.window = a.window;
  t.lookahead = a.lookahead;
  t.threshold_scale = a.threshold;
  t.statistic = a.statistic == "z" ? RB_STABILITY_Z : RB_STABILITY_STANDARDIZED;
  t.fit = fit_options(a);
  return t;
}

json model_config(const ModelArgs& m) {
  return {{"data", m.data},
          {"response", m.response},
          {"mean_covariates", m.mean_covariates},
          {"precision_covariates", m.precision_covariates},
          {"mean_link", m.mean_link},
          {"precision_link", m.precision_link},
          {"intercept_mean", !m.no_intercept_mean},
          {"intercept_precision", !m.no_intercept_precision}};
}

json numeric_config(const NumericArgs& a) {
  return {{"max_iterations", a.max_iterations}, {"tolerance", a.tolerance},
          {"grid_step", a.grid_step},           {"alpha_max", a.alpha_max},
          {"window", a.window},                 {"lookahead", a.lookahead},
          {"threshold", a.threshold},           {"statistic", a.statistic}};
}

struct LoadedData {
  Handle<rb_problem> problem;
  std::vector<std::string> terms;  // "mean:NAME" then "prec:NAME"
  std::vector<double> y;
  std::size_t n = 0, p1 = 0, p2 = 0;
  std::string checksum;
};

LoadedData load_data(const ModelArgs& m) {
  const std::string text = rbcli::read_file(m.data);
  const rbcli::CsvTable table = rbcli::parse_csv(text);
  std::vector<std::string> names{m.response};
  names.insert(names.end(), m.mean_covariates.begin(), m.mean_covariates.end());
  names.insert(names.end(), m.precision_covariates.begin(), m.precision_covariates.end());
  const auto cols = rbcli::numeric_columns(table, names);

  LoadedData d;
  d.checksum = sha256_hex(text);
  d.n = table.rows.size();
  d.y = cols[0];
  std::vector<std::size_t> outside;
  for (std::size_t i = 0; i < d.n; ++i) {
    if (!(d.y[i] > 0.0 && d.y[i] < 1.0)) outside.push_back(i + 1);
  }
  if (!outside.empty()) {
    std::string rows;
    for (std::size_t k = 0; k < outside.size() && k < 20; ++k) rows += (k ? "," : "") + std::to_string(outside[k]);
    if (outside.size() > 20) rows += ",... (" + std::to_string(outside.size()) + " rows)";
    throw InputError("response '" + m.response + "' must lie in (0, 1); offending rows " + rows);
  }

  auto build = [&](bool intercept, std::size_t first, std::size_t count, const std::string& prefix,
                   std::size_t& p) {
    p = (intercept ? 1 : 0) + count;
    if (p == 0) throw InputError(prefix + " submodel has no columns");
    if (intercept) d.terms.push_back(prefix + ":(Intercept)");
    for (std::size_t k = 0; k < count; ++k) d.terms.push_back(prefix + ":" + names[first + k]);
    std::vector<double> mat(d.n * p);
    for (std::size_t i = 0; i < d.n; ++i) {
      std::size_t j = 0;
      if (intercept) mat[i * p + j++] = 1.0;
      for (std::size_t k = 0; k < count; ++k) mat[i * p + j++] = cols[first + k][i];
    }
    return mat;
  };
  const auto x = build(!m.no_intercept_mean, 1, m.mean_covariates.size(), "mean", d.p1);
  const auto z = build(!m.no_intercept_precision, 1 + m.mean_covariates.size(),
                       m.precision_covariates.size(), "prec", d.p2);
  rb_problem* raw = nullptr;
  check(rb_problem_create(d.y.data(), d.n, x.data(), d.p1, z.data(), d.p2, m.mean_link.c_str(),
                          m.precision_link.c_str(), &raw),
        "model specification");
  d.problem.reset(raw);
  return d;
}

double parse_alpha(const std::string& text) {
  std::size_t used = 0;
  double a = 0.0;
  try {
    a = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !(a >= 0.0 && a < 1.0)) {
    throw InputError("--alpha must be a number in [0, 1) or 'auto', got '" + text + "'");
  }
  return a;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

struct TunedFit {
  Handle<rb_fit> fit;
  Handle<rb_tuning> tuning;
};

Handle<rb_tuning> run_tuning(const LoadedData& d, const std::string& estimator, const NumericArgs& a) {
  const rb_tuning_options t = tuning_options(a);
  rb_tuning* raw = nullptr;
  check(rb_tune(d.problem.get(), estimator.c_str(), &t, &raw), "tuning");
  return Handle<rb_tuning>(raw);
}

TunedFit run_fit(const LoadedData& d, const EstimatorArgs& e, const NumericArgs& a) {
  const std::string est = lower(e.estimator);
  TunedFit out;
  rb_fit* raw = nullptr;
  if (lower(e.alpha) == "auto") {
    if (est == "mle") throw InputError("--alpha auto needs --estimator lsmle or lmdpde");
    out.tuning = run_tuning(d, est, a);
    check(rb_tuning_selected(out.tuning.get(), &raw), "tuning");
  } else {
    const double alpha = parse_alpha(e.alpha);
    if (est == "mle" && alpha != 0.0) throw InputError("the MLE takes no tuning constant");
    const rb_fit_options o = fit_options(a);
    check(rb_fit_create(d.problem.get(), est.c_str(), alpha, &o, &raw), "fit");
  }
  out.fit.reset(raw);
  return out;
}

rb_fit_info fit_info(const rb_fit* fit) {
  rb_fit_info info;
  check(rb_fit_get_info(fit, &info), "fit");
  return info;
}

std::string fit_message(const rb_fit* fit) {
  std::size_t needed = 0;
  check(rb_fit_message(fit, nullptr, 0, &needed), "fit");
  std::string s(needed, '\0');
  check(rb_fit_message(fit, s.data(), s.size(), &needed), "fit");
  s.resize(needed - 1);
  return s;
}

/// Exit code for a finished fit; 0 when usable for inference.
void require_usable(const rb_fit* fit) {
  const rb_fit_info info = fit_info(fit);
  if (info.status == RB_FIT_CONVERGED) return;
  const std::string msg = std::string("fit ") + rb_fit_status_name(info.status) + ": " + fit_message(fit);
  if (info.status == RB_FIT_SINGULAR_LAMBDA || info.status == RB_FIT_NON_PSD_COVARIANCE) {
    throw CommandError(kExitSingular, msg);
  }
  throw CommandError(kExitNotConverged, msg);
}

struct Coefficient {
  std::string term;
  double estimate, std_error, z, p_value;
};

std::vector<Coefficient> coefficient_table(const rb_fit* fit, const std::vector<std::string>& terms) {
  const std::size_t p = terms.size();
  std::vector<double> theta(p), se(p);
  check(rb_fit_coefficients(fit, theta.data(), se.data(), p), "coefficients");
  std::vector<Coefficient> out;
  for (std::size_t j = 0; j < p; ++j) {
    double stat = std::numeric_limits<double>::quiet_NaN(), pv = stat;
    if (std::isfinite(se[j])) {
      const double zero = 0.0;
      int df = 0;
      check(rb_wald_coordinates(fit, &j, &zero, 1, &stat, &df, &pv), "coefficient test");
    }
    out.push_back({terms[j], theta[j], se[j], theta[j] / se[j], pv});
  }
  return out;
}

std::string submodel_of(const std::string& term) { return term.rfind("mean:", 0) == 0 ? "mean" : "precision"; }
std::string name_of(const std::string& term) { return term.substr(term.find(':') + 1); }

std::string coefficients_csv(const std::vector<Coefficient>& table) {
  std::string s = "submodel,term,estimate,std_error,z_stat,p_value\n";
  for (const auto& c : table) {
    s += submodel_of(c.term) + "," + csv_field(name_of(c.term)) + "," + format_number(c.estimate) + "," +
         format_number(c.std_error) + "," + format_number(c.z) + "," + format_number(c.p_value) + "\n";
  }
  return s;
}

json tuning_summary(const rb_tuning* t) {
  double alpha = 0.0, threshold = 0.0;
  int stable = 0;
  std::size_t len = 0;
  check(rb_tuning_result(t, &alpha, &stable, &threshold, &len), "tuning");
  return {{"alpha", alpha}, {"stable", stable != 0}, {"threshold", threshold}, {"grid_points_fitted", len}};
}

std::string tuning_trace_csv(const rb_tuning* t, const std::vector<std::string>& terms) {
  std::size_t len = 0;
  check(rb_tuning_result(t, nullptr, nullptr, nullptr, &len), "tuning");
  std::string s = "alpha,status,sqv";
  for (const auto& term : terms) s += "," + csv_field(term);
  s += "\n";
  std::vector<double> theta(terms.size());
  for (std::size_t i = 0; i < len; ++i) {
    double alpha = 0.0, sqv = 0.0;
    int status = 0;
    check(rb_tuning_step(t, i, &alpha, &sqv, &status, theta.data(), theta.size()), "tuning");
    s += format_number(alpha) + "," + rb_fit_status_name(status) + "," + format_number(sqv);
    for (double v : theta) s += "," + format_number(v);
    s += "\n";
  }
  return s;
}

json fit_json(const rb_fit* fit, const LoadedData& d, const std::vector<Coefficient>& table,
              const rb_tuning* tuning) {
  const rb_fit_info info = fit_info(fit);
  std::size_t needed = 0;
  check(rb_fit_estimator(fit, nullptr, 0, &needed), "fit");
  std::string est(needed, '\0');
  check(rb_fit_estimator(fit, est.data(), est.size(), &needed), "fit");
  est.resize(needed - 1);

  json j;
  j["estimator"] = est;
  j["alpha"] = info.alpha;
  j["status"] = rb_fit_status_name(info.status);
  j["iterations"] = info.iterations;
  j["objective"] = number(info.objective);
  j["gradient_norm"] = number(info.gradient_norm);
  j["n"] = d.n;
  json coefs = json::array();
  for (const auto& c : table) {
    coefs.push_back({{"submodel", submodel_of(c.term)},
                     {"term", name_of(c.term)},
                     {"estimate", number(c.estimate)},
                     {"std_error", number(c.std_error)},
                     {"z_stat", number(c.z)},
                     {"p_value", number(c.p_value)}});
  }
  j["coefficients"] = coefs;
  const std::size_t p = d.terms.size();
  if (info.has_covariance) {
    std::vector<double> cov(p * p);
    check(rb_fit_covariance(fit, cov.data(), p), "covariance");
    json rows = json::array();
    for (std::size_t i = 0; i < p; ++i) {
      json row = json::array();
      for (std::size_t k = 0; k < p; ++k) row.push_back(cov[i * p + k]);
      rows.push_back(row);
    }
    j["covariance"] = rows;
  } else {
    j["covariance"] = nullptr;
  }
  if (tuning) j["tuning"] = tuning_summary(tuning);
  return j;
}

std::vector<double> weights_of(const rb_fit* fit, std::size_t n) {
  std::vector<double> w(n);
  check(rb_fit_weights(fit, w.data(), n), "weights");
  return w;
}

std::string weights_csv(const std::vector<double>& y, const std::vector<double>& w) {
  std::string s = "index,y,weight\n";
  for (std::size_t i = 0; i < y.size(); ++i) {
    s += std::to_string(i + 1) + "," + format_number(y[i]) + "," + format_number(w[i]) + "\n";
  }
  return s;
}

/// Runs one command body and always leaves a manifest behind.
int run_command(const std::string& command, const std::vector<std::string>& argv, Output& out,
                const std::function<void(json& manifest)>& body) {
  json manifest;
  manifest["command"] = command;
  manifest["arguments"] = argv;
  manifest["software_version"] = rb_version();
  manifest["started_at"] = utc_now();
  int code = 0;
  std::string error;
  try {
    out.prepare();
    body(manifest);
  } catch (const CommandError& e) {
    code = e.code;
    error = e.what();
  } catch (const InputError& e) {
    code = kExitInput;
    error = e.what();
  } catch (const std::exception& e) {
    code = kExitInternal;
    error = e.what();
  }
  manifest["outputs"] = out.files();
  manifest["exit_code"] = code;
  if (!error.empty()) manifest["error"] = error;
  manifest["finished_at"] = utc_now();
  if (!error.empty()) std::cerr << "robustbeta " << command << ": " << error << "\n";
  try {
    std::error_code ec;
    if (fs::is_directory(out.dir(), ec)) {
      std::ofstream(fs::path(out.dir()) / "manifest.json") << manifest.dump(2) << "\n";
    }
  } catch (const std::exception&) {
  }
  return code;
}

struct Restriction {
  std::size_t index;
  double value;
  std::string text;
};

std::vector<Restriction> parse_nulls(const std::vector<std::string>& specs, const std::vector<std::string>& terms) {
  std::vector<Restriction> out;
  for (const auto& group : specs) {
    for (const auto& spec : split(group, ',')) {
      const auto eq = spec.rfind('=');
      if (eq == std::string::npos) throw InputError("null '" + spec + "' needs the form submodel:name=value");
      std::string term = spec.substr(0, eq);
      if (term.rfind("precision:", 0) == 0) term = "prec:" + term.substr(10);
      const auto it = std::find(terms.begin(), terms.end(), term);
      if (it == terms.end()) throw InputError("unknown coefficient '" + term + "'");
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(spec.substr(eq + 1), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != spec.size() - eq - 1) throw InputError("bad null value in '" + spec + "'");
      out.push_back({static_cast<std::size_t>(it - terms.begin()), v, spec});
    }
  }
  if (out.empty()) throw InputError("--null needs at least one restriction");
  return out;
}

json test_json(double stat, int df, double pv, const std::vector<Restriction>& r,
               const std::vector<std::string>& terms) {
  json list = json::array();
  for (const auto& x : r) list.push_back({{"term", terms[x.index]}, {"value", x.value}});
  return {{"statistic", stat}, {"df", df}, {"p_value", pv}, {"restrictions", list}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust beta regression on the logit scale"};
  app.set_version_flag("--version", std::string(rb_version()));
  app.require_subcommand(1);
  const char* env_out = std::getenv("ROBUSTBETA_OUT_DIR");
  std::string out_dir = env_out && *env_out ? env_out : ".";
  const std::vector<std::string> args(argv + 1, argv + argc);

  ModelArgs model;
  EstimatorArgs est, tune_est;
  NumericArgs num;
  std::string fit_file;
  std::vector<std::string> nulls;
  std::uint64_t seed = 0;
  int replications = 99, threads = 0;
  double coverage = 0.95;
  bool absolute = false;

  auto* fit_cmd = app.add_subcommand("fit", "fit a model and write the coefficient table");
  auto* test_cmd = app.add_subcommand("test", "Wald-type test of coefficient restrictions");
  auto* tune_cmd = app.add_subcommand("tune", "data-driven choice of the tuning constant");
  auto* diag_cmd = app.add_subcommand("diagnose", "residuals, simulated envelope and weights");
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo experiments");
  for (auto* cmd : {fit_cmd, test_cmd, tune_cmd, diag_cmd, sim_cmd}) {
    cmd->add_option("--out", out_dir, "output directory (default $ROBUSTBETA_OUT_DIR or .)");
  }
  add_model_options(fit_cmd, model);
  add_estimator_options(fit_cmd, est);
  add_numeric_options(fit_cmd, num);

  add_model_options(test_cmd, model, false);
  add_estimator_options(test_cmd, est);
  add_numeric_options(test_cmd, num);
  test_cmd->add_option("--fit", fit_file, "coefficients.json written by fit")->check(CLI::ExistingFile);
  test_cmd->add_option("--null", nulls, "restriction such as prec:Urb=0; repeat or separate by commas")->required();

  add_model_options(tune_cmd, model);
  add_estimator_options(tune_cmd, tune_est, false);
  add_numeric_options(tune_cmd, num);

  add_model_options(diag_cmd, model);
  add_estimator_options(diag_cmd, est);
  add_numeric_options(diag_cmd, num);
  diag_cmd->add_option("--seed", seed, "envelope seed")->required();
  diag_cmd->add_option("--replications", replications, "envelope datasets (>= 19)")->capture_default_str();
  diag_cmd->add_option("--coverage", coverage, "envelope coverage")->capture_default_str();
  diag_cmd->add_option("--threads", threads, "0 uses every core")->capture_default_str();
  diag_cmd->add_flag("--absolute", absolute, "half-normal envelope of absolute residuals");

  std::string scenario = "A", experiment = "levels", sim_alpha = "auto";
  std::size_t n = 40;
  bool contaminated = false;
  double rate = 0.05;
  int sim_reps = 200, replication = 0;
  std::vector<double> alphas{0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
  sim_cmd->add_option("--scenario", scenario)->capture_default_str()->check(CLI::IsMember({"A", "B", "C"}));
  sim_cmd->add_option("--n", n, "sample size, a multiple of 40")->capture_default_str();
  sim_cmd->add_flag("--contaminated", contaminated);
  sim_cmd->add_option("--rate", rate, "contamination rate")->capture_default_str();
  sim_cmd->add_option("--replications", sim_reps)->capture_default_str();
  sim_cmd->add_option("--seed", seed, "master seed")->required();
  sim_cmd->add_option("--experiment", experiment, "failure, compare, levels or data")
      ->capture_default_str()
      ->check(CLI::IsMember({"failure", "compare", "levels", "data"}));
  sim_cmd->add_option("--alphas", alphas, "failure-rate grid")->delimiter(',');
  sim_cmd->add_option("--alpha", sim_alpha, "levels: fixed alpha or 'auto'")->capture_default_str();
  sim_cmd->add_option("--replication", replication, "data: replication index")->capture_default_str();
  sim_cmd->add_option("--threads", threads, "0 uses every core")->capture_default_str();
  add_numeric_options(sim_cmd, num);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  Output out(out_dir);

  if (*fit_cmd) {
    return run_command("fit", args, out, [&](json& manifest) {
      manifest["config"] = {{"model", model_config(model)},
                            {"estimator", est.estimator},
                            {"alpha", est.alpha},
                            {"numeric", numeric_config(num)}};
      const LoadedData d = load_data(model);
      manifest["input"] = {{"path", model.data}, {"sha256", d.checksum}, {"rows", d.n}};
      const TunedFit f = run_fit(d, est, num);
      require_usable(f.fit.get());
      const auto table = coefficient_table(f.fit.get(), d.terms);
      out.write("coefficients.csv", coefficients_csv(table));
      out.write("coefficients.json", fit_json(f.fit.get(), d, table, f.tuning.get()).dump(2) + "\n");
      out.write("weights.csv", weights_csv(d.y, weights_of(f.fit.get(), d.n)));
      if (f.tuning) out.write("tuning_trace.csv", tuning_trace_csv(f.tuning.get(), d.terms));
    });
  }

  if (*test_cmd) {
    return run_command("test", args, out, [&](json& manifest) {
      manifest["config"] = {{"fit", fit_file}, {"null", nulls}};
      double stat = 0.0, pv = 0.0;
      int df = 0;
      if (!fit_file.empty()) {
        const std::string text = rbcli::read_file(fit_file);
        manifest["input"] = {{"path", fit_file}, {"sha256", sha256_hex(text)}};
        json j;
        try {
          j = json::parse(text);
        } catch (const json::exception& e) {
          throw InputError("cannot parse '" + fit_file + "': " + e.what());
        }
        if (!j.contains("coefficients") || !j.contains("covariance")) {
          throw InputError("'" + fit_file + "' is not a coefficients.json artifact");
        }
        if (j["covariance"].is_null()) throw CommandError(kExitSingular, "stored fit has no covariance");
        std::vector<std::string> terms;
        std::vector<double> theta, cov;
        for (const auto& c : j["coefficients"]) {
          terms.push_back((c["submodel"] == "mean" ? "mean:" : "prec:") + c["term"].get<std::string>());
          theta.push_back(c["estimate"].get<double>());
        }
        for (const auto& row : j["covariance"]) {
          for (const auto& v : row) cov.push_back(v.get<double>());
        }
        if (cov.size() != theta.size() * theta.size()) throw InputError("covariance has the wrong size");
        const auto r = parse_nulls(nulls, terms);
        std::vector<std::size_t> idx;
        std::vector<double> vals;
        for (const auto& x : r) {
          idx.push_back(x.index);
          vals.push_back(x.value);
        }
        check(rb_wald_coordinates_raw(theta.data(), cov.data(), theta.size(), idx.data(), vals.data(),
                                      idx.size(), &stat, &df, &pv),
              "Wald test");
        out.write("test.json", test_json(stat, df, pv, r, terms).dump(2) + "\n");
        return;
      }
      if (model.data.empty() || model.response.empty()) {
        throw InputError("test needs --fit FILE or --data with --response");
      }
      manifest["config"]["model"] = model_config(model);
      manifest["config"]["estimator"] = est.estimator;
      manifest["config"]["alpha"] = est.alpha;
      manifest["config"]["numeric"] = numeric_config(num);
      const LoadedData d = load_data(model);
      manifest["input"] = {{"path", model.data}, {"sha256", d.checksum}, {"rows", d.n}};
      const auto r = parse_nulls(nulls, d.terms);
      const TunedFit f = run_fit(d, est, num);
      require_usable(f.fit.get());
      std::vector<std::size_t> idx;
      std::vector<double> vals;
      for (const auto& x : r) {
        idx.push_back(x.index);
        vals.push_back(x.value);
      }
      check(rb_wald_coordinates(f.fit.get(), idx.data(), vals.data(), idx.size(), &stat, &df, &pv), "Wald test");
      json j = test_json(stat, df, pv, r, d.terms);
      j["alpha"] = fit_info(f.fit.get()).alpha;
      out.write("test.json", j.dump(2) + "\n");
    });
  }

  if (*tune_cmd) {
    return run_command("tune", args, out, [&](json& manifest) {
      manifest["config"] = {{"model", model_config(model)},
                            {"estimator", tune_est.estimator},
                            {"numeric", numeric_config(num)}};
      const LoadedData d = load_data(model);
      manifest["input"] = {{"path", model.data}, {"sha256", d.checksum}, {"rows", d.n}};
      const Handle<rb_tuning> t = run_tuning(d, lower(tune_est.estimator), num);
      json j{{"estimator", lower(tune_est.estimator)}, {"statistic", num.statistic}};
      j.update(tuning_summary(t.get()));
      out.write("tuning.json", j.dump(2) + "\n");
      out.write("tuning_trace.csv", tuning_trace_csv(t.get(), d.terms));
    });
  }

  if (*diag_cmd) {
    return run_command("diagnose", args, out, [&](json& manifest) {
      manifest["config"] = {{"model", model_config(model)},
                            {"estimator", est.estimator},
                            {"alpha", est.alpha},
                            {"numeric", numeric_config(num)},
                            {"replications", replications},
                            {"coverage", coverage},
                            {"absolute", absolute}};
      manifest["seed"] = seed;
      const LoadedData d = load_data(model);
      manifest["input"] = {{"path", model.data}, {"sha256", d.checksum}, {"rows", d.n}};
      const TunedFit f = run_fit(d, est, num);
      require_usable(f.fit.get());
      rb_envelope_options o;
      rb_envelope_options_default(&o);
      o.replications = replications;
      o.coverage = coverage;
      o.seed = seed;
      o.threads = threads;
      o.absolute = absolute ? 1 : 0;
      rb_envelope* raw = nullptr;
      check(rb_envelope_create(d.problem.get(), f.fit.get(), &o, &raw), "envelope");
      const Handle<rb_envelope> env(raw);
      std::vector<double> res(d.n), lev(d.n), sorted(d.n), lo(d.n), med(d.n), up(d.n), theo(d.n);
      check(rb_residuals(d.problem.get(), f.fit.get(), res.data(), lev.data(), d.n), "residuals");
      check(rb_envelope_bands(env.get(), sorted.data(), lo.data(), med.data(), up.data(), theo.data(), d.n),
            "envelope");
      const auto w = weights_of(f.fit.get(), d.n);
      std::vector<std::size_t> order(d.n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      auto key = [&](std::size_t i) { return absolute ? std::abs(res[i]) : res[i]; };
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
      std::string csv = "index,theoretical_quantile,residual,lower,median,upper,weight\n";
      for (std::size_t k = 0; k < d.n; ++k) {
        const std::size_t i = order[k];
        csv += std::to_string(i + 1) + "," + format_number(theo[k]) + "," + format_number(sorted[k]) + "," +
               format_number(lo[k]) + "," + format_number(med[k]) + "," + format_number(up[k]) + "," +
               format_number(w[i]) + "\n";
      }
      std::string rcsv = "index,y,residual,leverage,weight\n";
      for (std::size_t i = 0; i < d.n; ++i) {
        rcsv += std::to_string(i + 1) + "," + format_number(d.y[i]) + "," + format_number(res[i]) + "," +
                format_number(lev[i]) + "," + format_number(w[i]) + "\n";
      }
      rb_envelope_info info;
      check(rb_envelope_get_info(env.get(), &info), "envelope");
      const json summary{{"alpha", fit_info(f.fit.get()).alpha},
                         {"replications", info.replications},
                         {"failed_refits", info.failed},
                         {"coarse", info.coarse != 0},
                         {"unreliable", info.unreliable != 0},
                         {"points_outside", info.outside}};
      out.write("diagnostics.csv", csv);
      out.write("residuals.csv", rcsv);
      out.write("envelope.json", summary.dump(2) + "\n");
    });
  }

  return run_command("simulate", args, out, [&](json& manifest) {
    manifest["config"] = {{"scenario", scenario},   {"n", n},
                          {"contaminated", contaminated}, {"rate", rate},
                          {"replications", sim_reps}, {"experiment", experiment},
                          {"alphas", alphas},       {"alpha", sim_alpha},
                          {"replication", replication}, {"numeric", numeric_config(num)}};
    manifest["seed"] = seed;
    rb_scenario s;
    rb_scenario_default(&s);
    s.scenario = scenario[0];
    s.n = n;
    s.contaminated = contaminated ? 1 : 0;
    s.contamination_rate = rate;
    s.replications = sim_reps;
    s.seed = seed;
    s.threads = threads;
    if (experiment == "data") {
      rb_problem* raw = nullptr;
      const std::size_t p = scenario == "C" ? 4 : 3;
      std::vector<double> truth(p);
      check(rb_scenario_generate(&s, replication, &raw, truth.data(), p), "scenario");
      const Handle<rb_problem> prob(raw);
      std::size_t rows = 0, p1 = 0, p2 = 0;
      check(rb_problem_dims(prob.get(), &rows, &p1, &p2), "scenario");
      std::vector<double> y(rows), x(rows * p1);
      check(rb_problem_response(prob.get(), y.data(), rows), "scenario");
      check(rb_problem_design(prob.get(), x.data(), nullptr), "scenario");
      std::string csv = "y,x\n";
      for (std::size_t i = 0; i < rows; ++i) csv += format_number(y[i]) + "," + format_number(x[i * p1 + 1]) + "\n";
      out.write("dataset.csv", csv);
      manifest["truth"] = truth;
      return;
    }
    const rb_tuning_options t = tuning_options(num);
    double fixed = std::numeric_limits<double>::quiet_NaN();
    if (lower(sim_alpha) != "auto") fixed = parse_alpha(sim_alpha);
    rb_report* raw = nullptr;
    check(rb_simulate(&s, experiment.c_str(), alphas.data(), alphas.size(), fixed, &t, &raw), "simulation");
    const Handle<rb_report> report(raw);
    std::size_t needed = 0;
    check(rb_report_csv(report.get(), nullptr, 0, &needed), "report");
    std::string csv(needed, '\0');
    check(rb_report_csv(report.get(), csv.data(), csv.size(), &needed), "report");
    csv.resize(needed - 1);
    check(rb_report_manifest(report.get(), nullptr, 0, &needed), "report");
    std::string summary(needed, '\0');
    check(rb_report_manifest(report.get(), summary.data(), summary.size(), &needed), "report");
    summary.resize(needed - 1);
    out.write("report.csv", csv);
    out.write("summary.json", summary + "\n");
  });
}
