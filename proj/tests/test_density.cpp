#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "robustbeta/density.hpp"
#include "robustbeta/errors.hpp"
#include "robustbeta/specfun.hpp"
#include "helpers.hpp"

using namespace robustbeta;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double expect(double mu, double phi, const std::function<double(double)>& g) {
  return testing::egb_expect(mu, phi, g);
}

double softplus_ref(double x) { return std::log1p(std::exp(x)); }

}  // namespace

TEST_CASE("closed-form density values") {
  CHECK(std::exp(egb_logpdf(0.0, 0.5, 2.0)) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(beta_logpdf(0.5, 0.5, 2.0) == doctest::Approx(0.0).scale(1.0));
  CHECK(std::exp(egb_logpdf(0.0, 0.5, 4.0)) == doctest::Approx(6.0 / 16.0).epsilon(1e-15));
  CHECK(k_integral(0.5, 2.0, 1.5) == doctest::Approx(M_PI / 8.0).epsilon(1e-14));
  CHECK(k_integral(0.3, 7.0, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("EGB and beta densities are related by the logit Jacobian") {
  for (double y : {1e-4, 0.03, 0.5, 0.81, 0.9995}) {
    for (double mu : {0.05, 0.4, 0.93}) {
      for (double phi : {0.3, 5.0, 148.0}) {
        const double ys = std::log(y) - std::log1p(-y);
        CHECK(egb_logpdf(ys, mu, phi) ==
              doctest::Approx(beta_logpdf(y, mu, phi) + std::log(y) + std::log1p(-y))
                  .epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("EGB density integrates to one, including unbounded beta densities") {
  for (double mu : {0.002, 0.05, 0.5, 0.98}) {
    for (double phi : {0.5, 2.7, 20.1, 148.4}) {
      CAPTURE(mu);
      CAPTURE(phi);
      CHECK(expect(mu, phi, [](double) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("EGB tails stay finite far from the mode") {
  for (double t : {-700.0, -50.0, 50.0, 700.0}) {
    const double v = egb_logpdf(t, 0.3, 10.0);
    CHECK(std::isfinite(v));
    CHECK(v < -10.0);
  }
  CHECK(softplus(800.0) == 800.0);
  CHECK(softplus(-3.0) == doctest::Approx(softplus_ref(-3.0)).epsilon(1e-15));
}

TEST_CASE("moment scalars against quadrature") {
  for (double mu : {0.07, 0.5, 0.81}) {
    for (double phi : {0.6, 9.0, 150.0}) {
      for (double scale : {1.0, 1.4}) {
        CAPTURE(mu);
        CAPTURE(phi);
        CAPTURE(scale);
        const PerObsMoments m = moments(mu, phi, scale);
        const double s = phi * scale;
        const double mean = expect(mu, s, [](double t) { return t; });
        const double dag = expect(mu, s, [](double t) { return -softplus(t); });
        CHECK(m.mu_star == doctest::Approx(mean).epsilon(1e-9).scale(1.0));
        CHECK(m.mu_dagger == doctest::Approx(dag).epsilon(1e-9).scale(1.0));
        const double var =
            expect(mu, s, [&](double t) { return (t - m.mu_star) * (t - m.mu_star); });
        CHECK(m.v == doctest::Approx(var).epsilon(1e-8));
        const double dvar = expect(mu, s, [&](double t) {
          const double w = mu * (t - m.mu_star) + (-softplus(t) - m.mu_dagger);
          return w * w;
        });
        CHECK(m.d == doctest::Approx(dvar).epsilon(1e-8));
        const double cov = expect(mu, s, [&](double t) {
          return (t - m.mu_star) * (mu * (t - m.mu_star) + (-softplus(t) - m.mu_dagger));
        });
        CHECK(m.c == doctest::Approx(phi * cov).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("d stays positive and accurate for very large precision") {
  for (double phi : {1e3, 1e6, 1e9}) {
    const PerObsMoments m = moments(0.3, phi);
    CHECK(m.d > 0.0);
    CHECK(m.d * 2.0 * phi * phi == doctest::Approx(1.0).epsilon(1e-2));
  }
}

TEST_CASE("power integral equals quadrature of h^xi") {
  for (double mu : {0.1, 0.66}) {
    for (double phi : {0.8, 30.0}) {
      for (double xi : {1.1, 1.7, 2.8}) {
        const double q =
            integrate([&](double t) { return std::exp(xi * egb_logpdf(t, mu, phi)); }, -kInf, kInf)
                .value;
        CHECK(k_integral(mu, phi, xi) == doctest::Approx(q).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("beta sampler moments") {
  Rng rng(2024);
  const double mu = 0.2, phi = 12.0;
  double sum = 0, sum2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double y = sample_beta(mu, phi, rng);
    REQUIRE(y > 0.0);
    REQUIRE(y < 1.0);
    sum += y;
    sum2 += y * y;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(mean == doctest::Approx(mu).epsilon(0.01));
  CHECK(var == doctest::Approx(mu * (1 - mu) / (1 + phi)).epsilon(0.02));
  // tiny shapes never return an exact 0 or 1
  for (int i = 0; i < 2000; ++i) {
    const double y = sample_beta(0.002, 5.0, rng);
    REQUIRE(y > 0.0);
    REQUIRE(y < 1.0);
  }
}

TEST_CASE("density domain errors") {
  CHECK_THROWS_AS(egb_logpdf(0.0, 1.0, 2.0), DomainError);
  CHECK_THROWS_AS(egb_logpdf(0.0, 0.5, 0.0), DomainError);
  CHECK_THROWS_AS(beta_logpdf(1.0, 0.5, 2.0), DomainError);
  CHECK_THROWS_AS(moments(0.5, 2.0, -1.0), DomainError);
  CHECK_THROWS_AS(k_integral(0.5, 2.0, 0.0), DomainError);
}
