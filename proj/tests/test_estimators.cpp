#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "robustbeta/errors.hpp"
#include "robustbeta/estimators.hpp"

using namespace robustbeta;
using testing::egb_expect;
using testing::random_instance;
using testing::rel_err;

namespace {

// Three copies of one observation with mu = 0.5, phi = 2 under logit/log links.
Problem one_point(double y) {
  MatrixXd x = MatrixXd::Ones(3, 1);
  MatrixXd z = MatrixXd::Ones(3, 1);
  return Problem(ModelSpec(x, z), make_observations(std::vector<double>{y, y, y}));
}

ParamVector half_two() { return {VectorXd::Zero(1), VectorXd::Constant(1, std::log(2.0))}; }

VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& theta) {
  VectorXd g(theta.size());
  for (Index j = 0; j < theta.size(); ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta[j]));
    VectorXd tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    g[j] = (f(tp) - f(tm)) / (2 * h);
  }
  return g;
}

double vec_rel(const VectorXd& got, const VectorXd& want) {
  return (got - want).lpNorm<Eigen::Infinity>() / std::max(1.0, want.lpNorm<Eigen::Infinity>());
}

}  // namespace

TEST_CASE("objective closed forms at a single point") {
  const Problem pb = one_point(0.5);
  const ParamVector th = half_two();
  CHECK(loglik(pb, th) == doctest::Approx(0.0).scale(1.0));
  CHECK(lmdpde_objective(pb, th, 0.5) == doctest::Approx(M_PI / 8.0 - 1.5).epsilon(1e-13));
  CHECK(lmdpde_objective(pb, th, 0.5) == doctest::Approx(-1.1073009).epsilon(1e-7));
  // identical rows: the LSMLE objective is a sum
  CHECK(lsmle_objective(pb, th, 0.5) / 3 == doctest::Approx(-0.7752551).epsilon(1e-7));
}

TEST_CASE("objective identities on random data") {
  for (unsigned seed = 1; seed <= 5; ++seed) {
    auto [pb, th] = random_instance(30, 2, 2, seed);
    double jac = 0, direct = 0;
    const Predictors pr = predictors(pb.model, th);
    for (Index i = 0; i < pb.model.n(); ++i) {
      const double y = pb.observations[i].y;
      jac += std::log(y * (1 - y));
      direct += std::lgamma(pr.phi[i]) - std::lgamma(pr.mu[i] * pr.phi[i]) -
                std::lgamma((1 - pr.mu[i]) * pr.phi[i]) + (pr.mu[i] * pr.phi[i] - 1) * std::log(y) +
                ((1 - pr.mu[i]) * pr.phi[i] - 1) * std::log1p(-y);
    }
    CHECK(loglik(pb, th) == doctest::Approx(direct).epsilon(1e-11));
    CHECK(lsmle_objective(pb, th, 0.0) == doctest::Approx(loglik(pb, th) + jac).epsilon(1e-12));
    CHECK(std::abs(lsmle_objective(pb, th, 1e-6) - lsmle_objective(pb, th, 0.0)) <= 1e-3);
    CHECK(maximand(pb, th, EstimatorKind::mle()).value == doctest::Approx(loglik(pb, th)).epsilon(1e-12));
  }
}

TEST_CASE("LMDPDE objective matches its quadrature definition") {
  auto [pb, th] = random_instance(6, 2, 1, 11);
  const double alpha = 0.35;
  const Predictors pr = predictors(pb.model, th);
  double sum = 0;
  for (Index i = 0; i < pb.model.n(); ++i) {
    const double mu = pr.mu[i], phi = pr.phi[i];
    const double kq = egb_expect(mu, phi, [&](double t) { return std::exp(alpha * egb_logpdf(t, mu, phi)); });
    sum += kq - (1 + alpha) / alpha * std::exp(alpha * egb_logpdf(pb.observations[i].y_star, mu, phi));
  }
  CHECK(lmdpde_objective(pb, th, alpha) == doctest::Approx(sum / 6.0).epsilon(1e-10));
  const double shifted = -6.0 * lmdpde_objective(pb, th, alpha) / (1 + alpha) - 6.0 / alpha;
  CHECK(maximand(pb, th, EstimatorKind::lmdpde(alpha)).value == doctest::Approx(shifted).epsilon(1e-10));
}

TEST_CASE("LMDPDE maximand stays near the log density scale for small alpha") {
  auto [pb, th] = random_instance(40, 2, 2, 12);
  const double value = maximand(pb, th, EstimatorKind::lmdpde(1e-9)).value;
  double expected = 0;
  const Predictors pr = predictors(pb.model, th);
  for (Index i = 0; i < pb.model.n(); ++i) {
    expected += egb_logpdf(pb.observations[i].y_star, pr.mu[i], pr.phi[i]) - 1.0;
  }
  CHECK(value == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("score at the symmetric point") {
  const Problem pb = one_point(0.5);
  const VectorXd u = score_u(pb.observations[0], pb.model, 0, half_two());
  CHECK(u[0] == doctest::Approx(0.0).scale(1.0));
  // g'_phi(2) = 1/2 under the log link
  CHECK(u[1] == doctest::Approx((std::log(0.5) + 1.0) * 2.0).epsilon(1e-13));
  const VectorXd us = modified_score_u_star(pb.observations[0], pb.model, 0, half_two(), 0.0);
  CHECK((u - us).norm() == 0.0);
}

TEST_CASE("estimating functions match finite differences of their objectives") {
  const LinkFunction mean_links[] = {LinkKind::logit, LinkKind::probit, LinkKind::cloglog, LinkKind::cauchit};
  const LinkFunction prec_links[] = {LinkKind::log, LinkKind::sqrt, LinkKind::identity};
  for (unsigned seed = 0; seed < 20; ++seed) {
    const LinkFunction ml = mean_links[seed % 4];
    const LinkFunction pl = prec_links[seed % 3];
    auto [pb, th] = random_instance(25, 2, 2, 100 + seed, ml, pl);
    const double alpha = 0.05 + 0.04 * seed;
    const VectorXd t0 = th.joined();
    CAPTURE(seed);
    auto obj = [&](auto f) {
      return [&, f](const VectorXd& t) { return f(ParamVector::split(t, 2)); };
    };
    const VectorXd mle = estimating_function(pb, th, EstimatorKind::mle());
    CHECK(vec_rel(mle, fd_gradient(obj([&](const ParamVector& p) { return loglik(pb, p); }), t0)) <= 1e-6);
    const VectorXd ls = estimating_function(pb, th, EstimatorKind::lsmle(alpha));
    CHECK(vec_rel(ls, fd_gradient(obj([&](const ParamVector& p) { return lsmle_objective(pb, p, alpha); }), t0)) <= 1e-6);
    const VectorXd lm = estimating_function(pb, th, EstimatorKind::lmdpde(alpha));
    const VectorXd gh = fd_gradient(obj([&](const ParamVector& p) { return lmdpde_objective(pb, p, alpha); }), t0);
    CHECK(vec_rel(lm, -25.0 / (1 + alpha) * gh) <= 1e-6);
  }
}

TEST_CASE("at alpha = 0 the three estimating functions coincide") {
  auto [pb, th] = random_instance(25, 2, 2, 7);
  const VectorXd a = estimating_function(pb, th, EstimatorKind::mle());
  CHECK(vec_rel(estimating_function(pb, th, EstimatorKind::lsmle(0.0)), a) <= 1e-14);
  CHECK(vec_rel(estimating_function(pb, th, EstimatorKind::lmdpde(0.0)), a) <= 1e-14);
  for (Index i = 0; i < 3; ++i) CHECK(centering_e(pb.model, i, th, 0.0).norm() == 0.0);
}

TEST_CASE("modified score is the gradient of log h*") {
  for (unsigned seed = 0; seed < 6; ++seed) {
    auto [pb, th] = random_instance(10, 2, 2, 300 + seed);
    const double alpha = 0.3;
    const Index row = seed;
    const Observation& o = pb.observations[row];
    auto log_h_star = [&](const VectorXd& t) {
      const RowPredictor rp = predict_row(pb.model, row, ParamVector::split(t, 2));
      return egb_logpdf(o.y_star, rp.mu, rp.phi / (1 - alpha));
    };
    const VectorXd u = modified_score_u_star(o, pb.model, row, th, alpha);
    CHECK(vec_rel(u, fd_gradient(log_h_star, th.joined())) <= 1e-6);
  }
}

TEST_CASE("Fisher consistency and centering by quadrature") {
  Rng rng(99);
  std::uniform_real_distribution<double> um(0.05, 0.95), up(0.5, 200.0), ua(0.05, 0.9);
  for (int k = 0; k < 10; ++k) {
    const double mu = um(rng), phi = up(rng), alpha = ua(rng);
    CAPTURE(mu);
    CAPTURE(phi);
    CAPTURE(alpha);
    MatrixXd x = MatrixXd::Ones(3, 1), z = MatrixXd::Ones(3, 1);
    const ModelSpec model(x, z);
    const ParamVector th{VectorXd::Constant(1, std::log(mu / (1 - mu))), VectorXd::Constant(1, std::log(phi))};
    const EstimatorKind ls = EstimatorKind::lsmle(alpha), lm = EstimatorKind::lmdpde(alpha);
    for (int c = 0; c < 2; ++c) {
      auto comp = [&](const EstimatorKind& e, double t) {
        const RowTerm r = row_term(Observation::from_logit(t), mu, phi, model.mean_link(), model.precision_link(), e);
        return c == 0 ? r.psi_mu : r.psi_phi;
      };
      CHECK(std::abs(egb_expect(mu, phi, [&](double t) { return comp(ls, t); })) <= 1e-8);
      CHECK(std::abs(egb_expect(mu, phi, [&](double t) { return comp(lm, t); })) <= 1e-8);
    }
    const VectorXd e = centering_e(model, 0, th, alpha);
    const auto u_h = [&](double t, int c) {
      const VectorXd u = score_u(Observation::from_logit(t), model, 0, th);
      return u[c] * std::exp(alpha * egb_logpdf(t, mu, phi));
    };
    for (int c = 0; c < 2; ++c) {
      const double q = egb_expect(mu, phi, [&](double t) { return u_h(t, c); });
      CHECK(rel_err(e[c], q, 1e-3) <= 1e-8);
    }
  }
  // symmetric mean: no mean-block centering
  MatrixXd x = MatrixXd::Ones(3, 1);
  const ModelSpec model(x, x);
  const ParamVector th{VectorXd::Zero(1), VectorXd::Constant(1, 1.3)};
  CHECK(std::abs(centering_e(model, 0, th, 0.4)[0]) <= 1e-15);
}

TEST_CASE("objectives stay finite where beta densities are unbounded") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-12.0, 12.0);
  auto [pb, th] = random_instance(20, 2, 2, 17);
  int evaluated = 0;
  for (int k = 0; k < 2000; ++k) {
    ParamVector t{VectorXd(2), VectorXd(2)};
    t.beta << u(rng), u(rng);
    t.gamma << 0.5 * u(rng), 0.5 * u(rng);
    const double alpha = 0.1 * (k % 10);
    const double a = lsmle_objective(pb, t, alpha);
    const VectorXd g = estimating_function(pb, t, EstimatorKind::lsmle(alpha));
    REQUIRE(std::isfinite(a));
    REQUIRE(g.allFinite());
    if (alpha > 0) {
      REQUIRE(std::isfinite(lmdpde_objective(pb, t, alpha)));
      REQUIRE(estimating_function(pb, t, EstimatorKind::lmdpde(alpha)).allFinite());
    }
    ++evaluated;
  }
  CHECK(evaluated == 2000);
}

TEST_CASE("starting values") {
  SUBCASE("symmetric intercept-only response") {
    MatrixXd x = MatrixXd::Ones(6, 1);
    const Problem pb(ModelSpec(x, x), make_observations(std::vector<double>{0.2, 0.8, 0.3, 0.7, 0.4, 0.6}));
    const ParamVector s = starting_values(pb);
    CHECK(std::abs(s.beta[0]) <= 1e-12);
    CHECK(std::isfinite(s.gamma[0]));
  }
  SUBCASE("constant response") {
    MatrixXd x = MatrixXd::Ones(4, 1);
    const Problem pb(ModelSpec(x, x), make_observations(std::vector<double>(4, 0.3)));
    const ParamVector s = starting_values(pb);
    CHECK(s.beta.allFinite());
    CHECK(s.gamma.allFinite());
  }
}

TEST_CASE("estimator kinds") {
  const EstimatorKind bad_mle{Estimator::mle, 0.2};
  CHECK_THROWS_AS(bad_mle.validate(), InvalidArgument);
  CHECK_THROWS_AS(EstimatorKind::lsmle(1.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(EstimatorKind::lmdpde(-0.1).validate(), InvalidArgument);
  CHECK(EstimatorKind::parse("LSMLE") == Estimator::lsmle);
  CHECK_THROWS_AS(EstimatorKind::parse("smle"), InvalidArgument);
  FitOptions bad;
  bad.gradient_tolerance = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("fits converge and agree at alpha = 0") {
  for (unsigned seed = 0; seed < 5; ++seed) {
    auto [pb, th] = random_instance(60, 2, 2, 500 + seed);
    const FitResult m = fit(pb, EstimatorKind::mle());
    REQUIRE(m.converged);
    CHECK(m.status == FitStatus::converged);
    CHECK(m.gradient_norm <= 1e-6);
    const FitResult a = fit(pb, EstimatorKind::lsmle(0.0));
    const FitResult b = fit(pb, EstimatorKind::lmdpde(0.0));
    CHECK((a.theta.joined() - m.theta.joined()).lpNorm<Eigen::Infinity>() <= 1e-6);
    CHECK((b.theta.joined() - m.theta.joined()).lpNorm<Eigen::Infinity>() <= 1e-6);
    CHECK((m.weights.array() == 1.0).all());
    for (double alpha : {0.1, 0.3}) {
      for (auto kind : {Estimator::lsmle, Estimator::lmdpde}) {
        const FitResult r = fit(pb, {kind, alpha});
        CAPTURE(alpha);
        CHECK(r.converged);
        CHECK(r.status == FitStatus::converged);
        CHECK(estimating_function(pb, r.theta, {kind, alpha}).lpNorm<Eigen::Infinity>() <= 1e-6);
        CHECK(r.weights.maxCoeff() == doctest::Approx(1.0));
        CHECK(r.weights.minCoeff() > 0.0);
      }
    }
  }
}

TEST_CASE("fit reports a non-finite start instead of crashing") {
  auto [pb, th] = random_instance(20, 2, 1, 3);
  FitOptions opt;
  ParamVector bad = th;
  bad.beta[0] = std::numeric_limits<double>::infinity();
  opt.start = bad;
  const FitResult r = fit(pb, EstimatorKind::lsmle(0.2), opt);
  CHECK_FALSE(r.converged);
  CHECK(r.status == FitStatus::non_finite);
}
