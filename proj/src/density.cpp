#include "robustbeta/density.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "robustbeta/errors.hpp"
#include "robustbeta/specfun.hpp"

namespace robustbeta {
namespace {

void check_mean_precision(double mu, double phi, const char* where) {
  if (!(mu > 0.0 && mu < 1.0)) {
    throw DomainError(std::string(where) + ": mean must lie in (0,1), got " + std::to_string(mu));
  }
  if (!(phi > 0.0) || !std::isfinite(phi)) {
    throw DomainError(std::string(where) + ": precision must be positive, got " +
                      std::to_string(phi));
  }
}

// psi'(x) - 1/x, kept accurate for large x where the two terms nearly cancel.
double trigamma_excess(double x) {
  if (x < 10.0) return trigamma(x) - 1.0 / x;
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  return 0.5 * inv2 + inv * inv2 *
                          (1.0 / 6.0 -
                           inv2 * (1.0 / 30.0 -
                                   inv2 * (1.0 / 42.0 -
                                           inv2 * (1.0 / 30.0 -
                                                   inv2 * (5.0 / 66.0 -
                                                           inv2 * (691.0 / 2730.0 -
                                                                   inv2 * (7.0 / 6.0)))))));
}

}  // namespace

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double beta_logpdf(double y, double mu, double phi) {
  if (!(y > 0.0 && y < 1.0)) {
    throw DomainError("beta_logpdf: y must lie in (0,1), got " + std::to_string(y));
  }
  check_mean_precision(mu, phi, "beta_logpdf");
  const double a = mu * phi;
  const double b = (1.0 - mu) * phi;
  return -log_beta(a, b) + (a - 1.0) * std::log(y) + (b - 1.0) * std::log1p(-y);
}

double egb_logpdf(double y_star, double mu, double phi) {
  check_mean_precision(mu, phi, "egb_logpdf");
  if (std::isnan(y_star)) throw DomainError("egb_logpdf: NaN argument");
  const double a = mu * phi;
  const double b = (1.0 - mu) * phi;
  return -log_beta(a, b) - y_star * b - phi * softplus(-y_star);
}

PerObsMoments moments(double mu, double phi, double scale) {
  check_mean_precision(mu, phi, "moments");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("moments: scale must be positive");
  PerObsMoments m;
  const double s = phi * scale;
  const double a = mu * s;
  const double b = (1.0 - mu) * s;
  m.precision = s;
  const double psi_b = digamma(b);
  m.mu_star = digamma(a) - psi_b;
  m.mu_dagger = psi_b - digamma(s);
  m.trigamma_a = trigamma(a);
  m.trigamma_b = trigamma(b);
  m.trigamma_s = trigamma(s);
  m.v = m.trigamma_a + m.trigamma_b;
  m.c = phi * (mu * m.trigamma_a - (1.0 - mu) * m.trigamma_b);
  // The 1/x parts of the three trigammas cancel exactly: mu^2/a + (1-mu)^2/b - 1/s = 0.
  m.d = mu * mu * trigamma_excess(a) + (1.0 - mu) * (1.0 - mu) * trigamma_excess(b) -
        trigamma_excess(s);
  return m;
}

double log_k_integral(double mu, double phi, double exponent) {
  check_mean_precision(mu, phi, "k_integral");
  if (!(exponent > 0.0) || !std::isfinite(exponent)) {
    throw DomainError("k_integral: exponent must be positive");
  }
  const double a = mu * phi;
  const double b = (1.0 - mu) * phi;
  return log_beta(a * exponent, b * exponent) - exponent * log_beta(a, b);
}

double k_integral(double mu, double phi, double exponent) {
  const double log_k = log_k_integral(mu, phi, exponent);
  if (log_k > std::log(std::numeric_limits<double>::max())) {
    throw NumericalError("k_integral: value overflows double precision");
  }
  return std::exp(log_k);
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(stream), hi(stream), lo(index), hi(index)};
  return Rng(seq);
}

double sample_beta(double mu, double phi, Rng& rng) {
  check_mean_precision(mu, phi, "sample_beta");
  std::gamma_distribution<double> draw_a(mu * phi, 1.0);
  std::gamma_distribution<double> draw_b((1.0 - mu) * phi, 1.0);
  for (;;) {
    const double ga = draw_a(rng);
    const double gb = draw_b(rng);
    const double y = ga / (ga + gb);
    if (y > 0.0 && y < 1.0) return y;
  }
}

}  // namespace robustbeta
