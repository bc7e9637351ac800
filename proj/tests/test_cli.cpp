#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kWork = fs::path(CLI_WORK_DIR);

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

/// Exit status of the CLI run with `args`; stderr goes to err.txt in the work directory.
int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" CLI_PATH "\" " + args + " 2> \"" + (kWork / "err.txt").string() + "\" > /dev/null";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string dir(const std::string& name) { return (kWork / name).string(); }

struct Setup {
  Setup() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    REQUIRE(run("simulate --experiment data --scenario A --n 40 --seed 7 --out " + dir("a")) == 0);
    REQUIRE(run("simulate --experiment data --scenario A --n 40 --contaminated --seed 7 --out " + dir("ac")) == 0);
    REQUIRE(run("simulate --experiment data --scenario C --n 80 --seed 2 --out " + dir("c")) == 0);
  }
};
const Setup& setup() {
  static Setup s;
  return s;
}

std::string data(const std::string& d) { return "--data " + dir(d) + "/dataset.csv --response y --mean-covariates x"; }

}  // namespace

TEST_CASE("fit writes agreeing CSV and JSON tables") {
  setup();
  REQUIRE(run("fit " + data("a") + " --out " + dir("fit_mle")) == 0);
  const fs::path out = kWork / "fit_mle";
  for (const char* f : {"coefficients.csv", "coefficients.json", "weights.csv", "manifest.json"}) {
    CHECK(fs::exists(out / f));
  }
  const json j = json::parse(slurp(out / "coefficients.json"));
  CHECK(j["estimator"] == "MLE");
  CHECK(j["status"] == "converged");
  REQUIRE(j["coefficients"].size() == 3);
  std::istringstream csv(slurp(out / "coefficients.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "submodel,term,estimate,std_error,z_stat,p_value");
  for (const auto& c : j["coefficients"]) {
    REQUIRE(std::getline(csv, line));
    std::istringstream fields(line);
    std::string sub, term, est, se;
    std::getline(fields, sub, ',');
    std::getline(fields, term, ',');
    std::getline(fields, est, ',');
    std::getline(fields, se, ',');
    CHECK(sub == c["submodel"].get<std::string>());
    CHECK(term == c["term"].get<std::string>());
    CHECK(std::stod(est) == c["estimate"].get<double>());
    CHECK(std::stod(se) == c["std_error"].get<double>());
  }
  const json m = json::parse(slurp(out / "manifest.json"));
  CHECK(m["exit_code"] == 0);
  CHECK(m["input"]["sha256"].get<std::string>().size() == 64);
  CHECK(m["outputs"].size() == 3);
  CHECK(m["software_version"] == "1.0.0");
}

TEST_CASE("lsmle at alpha 0 reproduces the MLE table") {
  setup();
  REQUIRE(run("fit " + data("a") + " --out " + dir("fit_mle2")) == 0);
  REQUIRE(run("fit " + data("a") + " --estimator lsmle --alpha 0 --out " + dir("fit_ls0")) == 0);
  CHECK(slurp(kWork / "fit_mle2/coefficients.csv") == slurp(kWork / "fit_ls0/coefficients.csv"));
}

TEST_CASE("reruns are byte-identical") {
  setup();
  for (const char* d : {"r1", "r2"}) {
    REQUIRE(run("diagnose " + data("ac") + " --estimator lmdpde --alpha auto --seed 9 --replications 39 --out " + dir(d)) == 0);
  }
  for (const char* f : {"diagnostics.csv", "residuals.csv", "envelope.json"}) {
    CHECK(slurp(kWork / "r1" / f) == slurp(kWork / "r2" / f));
  }
  for (const char* d : {"s1", "s2"}) {
    REQUIRE(run("simulate --scenario A --n 40 --replications 4 --seed 5 --experiment compare --out " + dir(d)) == 0);
  }
  CHECK(slurp(kWork / "s1/report.csv") == slurp(kWork / "s2/report.csv"));
  CHECK(slurp(kWork / "s1/summary.json") == slurp(kWork / "s2/summary.json"));
}

TEST_CASE("auto alpha, tuning and diagnostics formats") {
  setup();
  REQUIRE(run("tune " + data("a") + " --out " + dir("tune_clean")) == 0);
  CHECK(json::parse(slurp(kWork / "tune_clean/tuning.json"))["alpha"] == 0.0);
  REQUIRE(run("tune " + data("ac") + " --estimator lmdpde --out " + dir("tune_cont")) == 0);
  const json t = json::parse(slurp(kWork / "tune_cont/tuning.json"));
  CHECK(t["alpha"].get<double>() > 0.0);
  CHECK(slurp(kWork / "tune_cont/tuning_trace.csv").rfind("alpha,status,sqv,mean:(Intercept)", 0) == 0);

  REQUIRE(run("fit " + data("ac") + " --estimator lsmle --alpha auto --out " + dir("fit_auto")) == 0);
  const json f = json::parse(slurp(kWork / "fit_auto/coefficients.json"));
  CHECK(f["tuning"]["alpha"] == f["alpha"]);
  CHECK(fs::exists(kWork / "fit_auto/tuning_trace.csv"));

  REQUIRE(run("diagnose " + data("a") + " --seed 1 --replications 19 --coverage 0.9 --out " + dir("diag")) == 0);
  std::istringstream csv(slurp(kWork / "diag/diagnostics.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "index,theoretical_quantile,residual,lower,median,upper,weight");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 40);
  CHECK(json::parse(slurp(kWork / "diag/envelope.json"))["coarse"] == true);
}

TEST_CASE("test command: stored fit, inline fit and bad names") {
  setup();
  REQUIRE(run("fit " + data("c") + " --precision-covariates x --out " + dir("fit_c")) == 0);
  const json f = json::parse(slurp(kWork / "fit_c/coefficients.json"));
  const double g2 = f["coefficients"][3]["estimate"].get<double>();
  std::ostringstream null_at_fit;
  null_at_fit.precision(17);
  null_at_fit << "prec:x=" << g2;
  REQUIRE(run("test --fit " + dir("fit_c") + "/coefficients.json --null " + null_at_fit.str() + " --out " + dir("test_fit")) == 0);
  const json a = json::parse(slurp(kWork / "test_fit/test.json"));
  CHECK(a["p_value"].get<double>() == doctest::Approx(1.0));

  REQUIRE(run("test " + data("c") + " --precision-covariates x --null mean:x=7.5,prec:x=2 --out " + dir("test_inline")) == 0);
  const json b = json::parse(slurp(kWork / "test_inline/test.json"));
  CHECK(b["df"] == 2);
  CHECK(b["p_value"].get<double>() > 0.0);
  CHECK(b["p_value"].get<double>() <= 1.0);

  CHECK(run("test --fit " + dir("fit_c") + "/coefficients.json --null prec:Urb=0 --out " + dir("test_bad")) == 2);
  CHECK(json::parse(slurp(kWork / "test_bad/manifest.json"))["exit_code"] == 2);
}

TEST_CASE("input errors exit with status 2") {
  setup();
  spit(kWork / "bad.csv", "y,x\n0.2,1\n1.2,2\n0.3,\n0.4,NA\n0.5,abc\n-0.1,3\n");
  CHECK(run("fit --data " + dir("") + "bad.csv --response y --mean-covariates x --out " + dir("bad1")) == 2);
  const std::string err1 = slurp(kWork / "err.txt");
  CHECK(err1.find("rows 3,4") != std::string::npos);
  CHECK(err1.find("non-numeric values in rows 5") != std::string::npos);
  spit(kWork / "range.csv", "y,x\n0.2,1\n1.2,2\n0.3,3\n-0.1,3\n0.4,5\n");
  CHECK(run("fit --data " + dir("") + "range.csv --response y --mean-covariates x --out " + dir("bad2")) == 2);
  CHECK(slurp(kWork / "err.txt").find("offending rows 2,4") != std::string::npos);
  CHECK(run("fit " + data("a") + " --alpha 1.5 --out " + dir("bad3")) == 2);
  CHECK(run("fit " + data("a") + " --alpha auto --out " + dir("bad4")) == 2);
  CHECK(run("fit " + data("a") + " --mean-link nonsense --out " + dir("bad5")) == 2);
  CHECK(run("simulate --scenario A --n 40") == 2);  // seed is mandatory
  CHECK(run("frobnicate") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("non-convergence exits with status 3") {
  setup();
  CHECK(run("fit " + data("c") + " --precision-covariates x --max-iterations 1 --out " + dir("nc")) == 3);
  CHECK(json::parse(slurp(kWork / "nc/manifest.json"))["exit_code"] == 3);
}

TEST_CASE("output directory from the environment") {
  setup();
  const std::string target = dir("from_env");
  REQUIRE(run("fit " + data("a"), "ROBUSTBETA_OUT_DIR=" + target) == 0);
  CHECK(fs::exists(fs::path(target) / "coefficients.csv"));
}
