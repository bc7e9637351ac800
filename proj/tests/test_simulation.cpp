#include <doctest.h>

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "robustbeta/errors.hpp"
#include "robustbeta/simulation.hpp"

using namespace robustbeta;

TEST_CASE("scenario truths and predictor ranges") {
  struct Range {
    Scenario s;
    double mu_lo, mu_hi, phi_lo, phi_hi;
  };
  for (const Range r : {Range{Scenario::A, 0.05, 0.27, 148.4, 148.5},
                        Range{Scenario::B, 0.001, 0.27, 148.4, 148.5},
                        Range{Scenario::C, 0.047, 0.99, 2.71, 20.1}}) {
    ScenarioConfig c;
    c.scenario = r.s;
    c.n = 80;
    const ModelSpec m = scenario_design(c);
    const Predictors pr = predictors(m, scenario_truth(r.s));
    CHECK(pr.mu.minCoeff() >= r.mu_lo);
    CHECK(pr.mu.maxCoeff() <= r.mu_hi);
    CHECK(pr.phi.minCoeff() >= r.phi_lo);
    CHECK(pr.phi.maxCoeff() <= r.phi_hi);
    // The 40-row block is replicated.
    CHECK(m.x().row(3) == m.x().row(43));
  }
  CHECK(scenario_truth(Scenario::C).gamma.size() == 2);
  CHECK(parse_scenario("b") == Scenario::B);
  CHECK_THROWS_AS(parse_scenario("D"), InvalidArgument);
}

TEST_CASE("scenario config validation") {
  ScenarioConfig c;
  c.n = 50;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.n = 40;
  c.replications = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.replications = 1;
  c.contamination_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.contamination_rate = 0.05;
  CHECK(c.contaminated_count() == 2);
  c.n = 160;
  CHECK(c.contaminated_count() == 8);
}

TEST_CASE("generation is deterministic per replication") {
  ScenarioConfig c;
  c.seed = 5;
  const Dataset a = generate_scenario(c, 4), b = generate_scenario(c, 4), other = generate_scenario(c, 5);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.problem.observations.size(); ++i) {
    same = same && a.problem.observations[i].y == b.problem.observations[i].y;
    differs = differs || a.problem.observations[i].y != other.problem.observations[i].y;
  }
  CHECK(same);
  CHECK(differs);
  // The design depends on the master seed only.
  CHECK(a.problem.model.x() == other.problem.model.x());
}

TEST_CASE("contamination replaces the extreme-mean rows") {
  for (const Scenario s : {Scenario::A, Scenario::B, Scenario::C}) {
    ScenarioConfig c;
    c.scenario = s;
    c.n = 160;
    c.contaminated = true;
    const Dataset d = generate_scenario(c, 0);
    REQUIRE(d.contaminated.size() == 8);
    const Predictors pr = predictors(d.problem.model, d.truth);
    double kept_extreme = s == Scenario::A ? 1.0 : 0.0, replaced_extreme = s == Scenario::A ? 0.0 : 1.0;
    std::vector<bool> is_replaced(160, false);
    for (Index i : d.contaminated) is_replaced[static_cast<std::size_t>(i)] = true;
    for (Index i = 0; i < 160; ++i) {
      if (s == Scenario::A) {
        if (is_replaced[static_cast<std::size_t>(i)]) replaced_extreme = std::max(replaced_extreme, pr.mu[i]);
        else kept_extreme = std::min(kept_extreme, pr.mu[i]);
      } else {
        if (is_replaced[static_cast<std::size_t>(i)]) replaced_extreme = std::min(replaced_extreme, pr.mu[i]);
        else kept_extreme = std::max(kept_extreme, pr.mu[i]);
      }
    }
    if (s == Scenario::A) CHECK(replaced_extreme <= kept_extreme);
    else CHECK(replaced_extreme >= kept_extreme);
  }
  // Scenario B outliers sit near 0.002, far below the bulk.
  ScenarioConfig c;
  c.scenario = Scenario::B;
  c.n = 160;
  c.contaminated = true;
  const Dataset d = generate_scenario(c, 1);
  double mean = 0.0;
  for (Index i : d.contaminated) mean += d.problem.observations[static_cast<std::size_t>(i)].y;
  CHECK(mean / 8.0 < 0.02);
}

TEST_CASE("standard hypotheses") {
  CHECK(standard_hypothesis(1).coordinates == std::vector<Index>{1});
  CHECK(standard_hypothesis(3).coordinates == std::vector<Index>{0, 1, 2});
  CHECK(standard_hypothesis(5).coordinates == std::vector<Index>{0, 1, 3});
  CHECK_THROWS_AS(standard_hypothesis(7), InvalidArgument);
  CHECK(scenario_hypotheses(Scenario::C).front().name == "H4");
  CHECK(scenario_hypotheses(Scenario::B).size() == 3);
}

TEST_CASE("sample median") {
  CHECK(sample_median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(sample_median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(std::isnan(sample_median({})));
}

TEST_CASE("experiment runners and reports") {
  ScenarioConfig c;
  c.scenario = Scenario::B;
  c.replications = 6;
  c.seed = 9;
  c.threads = 2;
  const ExperimentReport f = run_failure_rate(c, {0.0, 0.3});
  CHECK(f.records.size() == 24);
  CHECK(f.failure_rate("LSMLE", 0.3) == 0.0);
  CHECK(f.failure_rate("LMDPDE", 0.0) == 0.0);
  CHECK(std::isnan(f.failure_rate("MLE")));

  // Thread count does not change the records.
  ScenarioConfig serial = c;
  serial.threads = 1;
  const ExperimentReport f1 = run_failure_rate(serial, {0.0, 0.3});
  for (std::size_t i = 0; i < f.records.size(); ++i) CHECK(f.records[i].theta == f1.records[i].theta);

  const ExperimentReport lv = run_empirical_levels(c, scenario_hypotheses(c.scenario));
  CHECK(lv.records.size() == 18);
  CHECK(lv.select("MLE").size() == 6);
  for (const auto& r : lv.records) {
    CHECK(r.p_values.size() == 3);
    if (r.status == FitStatus::converged) {
      for (double p : r.p_values) CHECK((p >= 0.0 && p <= 1.0));
    }
  }
  const double rate = lv.rejection_rate("LSMLE", 0);
  CHECK((rate >= 0.0 && rate <= 1.0));

  std::ostringstream csv;
  lv.write_csv(csv);
  const std::string text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 19);
  CHECK(text.find("p_H1") != std::string::npos);
  CHECK(text.find(",tuned,") != std::string::npos);

  const auto j = nlohmann::json::parse(lv.manifest_json());
  CHECK(j["config"]["seed"] == 9);
  CHECK(j["summary"].size() == 3);
  CHECK(j["hypotheses"][0] == "H1");

  const ExperimentReport fixed = run_empirical_levels(c, {standard_hypothesis(1)}, {}, 0.2);
  for (const auto* r : fixed.select("LMDPDE")) CHECK(r->alpha == 0.2);
}
