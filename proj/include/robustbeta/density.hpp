#pragma once

#include <cstdint>
#include <random>

namespace robustbeta {

using Rng = std::mt19937_64;

/// Digamma/trigamma building blocks of one observation, evaluated at precision phi * scale.
///
/// With s = phi * scale, a = mu s and b = (1 - mu) s:
///   mu_star   = psi(a) - psi(b)                      (mean of the logit response)
///   mu_dagger = psi(b) - psi(s)                      (mean of log(1 - y))
///   v         = psi'(a) + psi'(b)                    (variance of the logit response)
///   c         = phi [mu psi'(a) - (1 - mu) psi'(b)]  (note: unscaled phi as prefactor)
///   d         = mu^2 psi'(a) + (1 - mu)^2 psi'(b) - psi'(s)
struct PerObsMoments {
  double precision = 0.0;  // s
  double mu_star = 0.0;
  double mu_dagger = 0.0;
  double trigamma_a = 0.0;
  double trigamma_b = 0.0;
  double trigamma_s = 0.0;
  double v = 0.0;
  double c = 0.0;
  double d = 0.0;
};

double beta_logpdf(double y, double mu, double phi);

/// Log density of log(y / (1 - y)) for y ~ Beta(mu, phi).
double egb_logpdf(double y_star, double mu, double phi);

PerObsMoments moments(double mu, double phi, double scale = 1.0);

/// Integral of h(.; mu, phi)^exponent over the real line, in closed form.
double k_integral(double mu, double phi, double exponent);
double log_k_integral(double mu, double phi, double exponent);

/// Beta(mu, phi) draw via the gamma ratio; exact 0 or 1 draws are redrawn.
double sample_beta(double mu, double phi, Rng& rng);

/// Independent stream for (seed, stream, index) via std::seed_seq; used to give every
/// replication its own generator regardless of scheduling.
Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// log(1 + exp(x)) without overflow.
double softplus(double x);

}  // namespace robustbeta
