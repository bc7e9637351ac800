#include <doctest.h>

#include <cmath>
#include <vector>

#include "robustbeta/errors.hpp"
#include "robustbeta/model.hpp"

using namespace robustbeta;

namespace {

const LinkKind kMeanLinks[] = {LinkKind::logit, LinkKind::probit, LinkKind::cloglog,
                               LinkKind::cauchit};
const LinkKind kPrecisionLinks[] = {LinkKind::log, LinkKind::sqrt, LinkKind::identity};

void check_link(LinkFunction g, double x) {
  CAPTURE(g.name());
  CAPTURE(x);
  CHECK(g.inverse(g.value(x)) == doctest::Approx(x).epsilon(1e-12));
  const double h = g.maps_unit_interval() ? 1e-6 * std::max(std::min(x, 1.0 - x), 1e-3) : 1e-6 * x;
  const double upper = g.maps_unit_interval() ? std::min(x + h, 1.0 - 1e-15) : x + h;
  const double fd1 = (g.value(upper) - g.value(x - h)) / (upper - x + h);
  CHECK(g.d1(x) == doctest::Approx(fd1).epsilon(1e-6));
  const double fd2 = (g.d1(upper) - g.d1(x - h)) / (upper - x + h);
  CHECK(g.d2(x) == doctest::Approx(fd2).epsilon(1e-5).scale(std::abs(g.d1(x))));
  CHECK(g.d1(x) > 0.0);
}

}  // namespace

TEST_CASE("link functions: inverse, derivatives and monotonicity") {
  for (LinkKind k : kMeanLinks) {
    for (double x : {0.013, 0.2, 0.5, 0.77, 0.96}) check_link(LinkFunction(k), x);
  }
  for (LinkKind k : kPrecisionLinks) {
    for (double x : {0.05, 1.0, 7.5, 148.0, 2e4}) check_link(LinkFunction(k), x);
  }
}

TEST_CASE("link names round-trip and unknown names fail") {
  for (LinkKind k : kMeanLinks) CHECK(LinkFunction::parse(LinkFunction(k).name()).kind() == k);
  for (LinkKind k : kPrecisionLinks) CHECK(LinkFunction::parse(LinkFunction(k).name()).kind() == k);
  CHECK_THROWS_AS(LinkFunction::parse("loglog"), InvalidArgument);
  CHECK(LinkFunction(LinkKind::logit).eval(LinkDirection::value, 0.5) == 0.0);
}

TEST_CASE("link domains") {
  const LinkFunction logit(LinkKind::logit);
  CHECK_THROWS_AS(logit.value(0.0), DomainError);
  CHECK_THROWS_AS(logit.value(1.0), DomainError);
  CHECK_THROWS_AS(LinkFunction(LinkKind::log).value(-1.0), DomainError);
  // clamped inverse stays strictly inside the unit interval
  CHECK(logit.inverse(800.0) < 1.0);
  CHECK(logit.inverse(-800.0) > 0.0);
  CHECK(LinkFunction(LinkKind::log).inverse(-900.0) > 0.0);
}

TEST_CASE("model specification validation") {
  MatrixXd x(5, 2);
  x << 1, 0.1, 1, 0.4, 1, 0.2, 1, 0.9, 1, 0.7;
  MatrixXd z = MatrixXd::Ones(5, 1);
  ModelSpec spec(x, z);
  CHECK(spec.n() == 5);
  CHECK(spec.p() == 3);

  CHECK_THROWS_AS(ModelSpec(x, MatrixXd::Ones(4, 1)), InvalidArgument);
  CHECK_THROWS_AS(ModelSpec(x.leftCols(1).replicate(1, 2), z), InvalidArgument);  // rank deficient
  CHECK_THROWS_AS(ModelSpec(x, z, LinkKind::log), InvalidArgument);
  CHECK_THROWS_AS(ModelSpec(x, z, LinkKind::logit, LinkKind::probit), InvalidArgument);
  CHECK_THROWS_AS(ModelSpec(x.topRows(3), MatrixXd::Ones(3, 2)), InvalidArgument);
}

TEST_CASE("predictors and parameter layout") {
  MatrixXd x(4, 2);
  x << 1, 0, 1, 1, 1, 2, 1, 3;
  MatrixXd z = MatrixXd::Ones(4, 1);
  ModelSpec spec(x, z);
  ParamVector theta{VectorXd::Zero(2), VectorXd::Constant(1, std::log(4.0))};
  theta.beta << 0.5, -1.0;
  const Predictors pr = predictors(spec, theta);
  for (Index i = 0; i < 4; ++i) {
    const double eta = 0.5 - 1.0 * static_cast<double>(i);
    CHECK(pr.mu[i] == doctest::Approx(1.0 / (1.0 + std::exp(-eta))));
    CHECK(pr.phi[i] == doctest::Approx(4.0));
    const RowPredictor rp = predict_row(spec, i, theta);
    CHECK(rp.mu == pr.mu[i]);
  }
  CHECK(pr.clamped == 0);

  const VectorXd joined = theta.joined();
  const ParamVector back = ParamVector::split(joined, 2);
  CHECK(back.beta == theta.beta);
  CHECK(back.gamma == theta.gamma);

  theta.beta << 60.0, 0.0;
  CHECK(predictors(spec, theta).clamped == 4);
}

TEST_CASE("observations") {
  const Observation o = Observation::from_response(0.25);
  CHECK(o.y_star == doctest::Approx(std::log(1.0 / 3.0)));
  CHECK(o.y_dagger == doctest::Approx(std::log(0.75)));
  const Observation l = Observation::from_logit(o.y_star);
  CHECK(l.y == doctest::Approx(0.25));
  CHECK(l.y_dagger == doctest::Approx(o.y_dagger).epsilon(1e-14));
  const Observation far = Observation::from_logit(50.0);
  CHECK(far.y_dagger == doctest::Approx(-50.0).epsilon(1e-14));
  CHECK_THROWS_AS(Observation::from_response(0.0), DomainError);
  CHECK_THROWS_AS(Observation::from_response(1.0), DomainError);
  const std::vector<double> ys{0.1, 0.2};
  CHECK(make_observations(ys).size() == 2);
}
