#include "robustbeta/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "robustbeta/errors.hpp"

namespace robustbeta {
namespace {

constexpr double kLnSqrt2Pi = 0.918938533204672741780329736406;
constexpr double kAsymptoticThreshold = 10.0;

void require_positive(double x, const char* name) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError(std::string(name) + ": argument must be positive and finite, got " +
                      std::to_string(x));
  }
}

// lgamma(x) - [(x - 1/2) ln x - x + ln sqrt(2 pi)], valid for x >= 10.
double stirling_correction(double x) {
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  return inv *
         (1.0 / 12.0 +
          inv2 * (-1.0 / 360.0 +
                  inv2 * (1.0 / 1260.0 +
                          inv2 * (-1.0 / 1680.0 +
                                  inv2 * (1.0 / 1188.0 +
                                          inv2 * (-691.0 / 360360.0 + inv2 * (1.0 / 156.0)))))));
}

double log_gamma_small(double x) { return std::log(std::tgamma(x)); }

}  // namespace

double log_beta(double a, double b) {
  require_positive(a, "log_beta");
  require_positive(b, "log_beta");
  const double p = std::min(a, b);
  const double q = std::max(a, b);
  const double ratio = p / (p + q);

  if (p >= kAsymptoticThreshold) {
    const double corr = stirling_correction(p) + stirling_correction(q) - stirling_correction(p + q);
    return -0.5 * std::log(q) + kLnSqrt2Pi + corr + (p - 0.5) * std::log(ratio) +
           q * std::log1p(-ratio);
  }
  if (q >= kAsymptoticThreshold) {
    const double corr = stirling_correction(q) - stirling_correction(p + q);
    return log_gamma_small(p) + corr + p - p * std::log(p + q) + (q - 0.5) * std::log1p(-ratio);
  }
  return std::log(std::tgamma(p) * (std::tgamma(q) / std::tgamma(p + q)));
}

double digamma(double x) {
  require_positive(x, "digamma");
  double shift = 0.0;
  while (x < kAsymptoticThreshold) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv2 *
      (1.0 / 12.0 -
       inv2 * (1.0 / 120.0 -
               inv2 * (1.0 / 252.0 -
                       inv2 * (1.0 / 240.0 -
                               inv2 * (1.0 / 132.0 -
                                       inv2 * (691.0 / 32760.0 - inv2 * (1.0 / 12.0)))))));
  return shift + std::log(x) - 0.5 * inv - series;
}

double trigamma(double x) {
  require_positive(x, "trigamma");
  double shift = 0.0;
  while (x < kAsymptoticThreshold) {
    shift += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv * inv2 *
      (1.0 / 6.0 -
       inv2 * (1.0 / 30.0 -
               inv2 * (1.0 / 42.0 -
                       inv2 * (1.0 / 30.0 -
                               inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0 - inv2 * (7.0 / 6.0)))))));
  return shift + inv + 0.5 * inv2 + series;
}

QuadratureResult integrate(const std::function<double(double)>& f, double lower, double upper,
                           const QuadratureSpec& spec) {
  if (!(spec.absolute_tolerance > 0.0) || !(spec.relative_tolerance > 0.0) ||
      spec.max_subdivisions < 1 || !(spec.scale > 0.0) || !std::isfinite(spec.scale) ||
      !std::isfinite(spec.center)) {
    throw InvalidArgument("integrate: tolerances must be positive and max_subdivisions >= 1");
  }
  if (std::isnan(lower) || std::isnan(upper)) {
    throw InvalidArgument("integrate: NaN integration limit");
  }
  if (lower == upper) return {};

  bool saw_nan = false;
  auto guarded = [&](double u) {
    const double value = spec.scale * f(spec.center + spec.scale * u);
    if (std::isnan(value)) saw_nan = true;
    return std::isnan(value) ? 0.0 : value;
  };

  const auto depth = static_cast<unsigned>(
      std::max(1.0, std::ceil(std::log2(static_cast<double>(spec.max_subdivisions)))));
  QuadratureResult result;
  result.value = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(
      guarded, (lower - spec.center) / spec.scale, (upper - spec.center) / spec.scale, depth, spec.relative_tolerance, &result.error, &result.l1_norm);

  if (saw_nan) throw NumericalError("integrate: integrand returned NaN");
  if (!std::isfinite(result.value)) throw NumericalError("integrate: non-finite integral");
  const double target =
      std::max(spec.absolute_tolerance, spec.relative_tolerance * result.l1_norm);
  if (result.error > target) {
    char text[160];
    std::snprintf(text, sizeof text,
                  "integrate: error estimate %.3e above target %.3e after maximum subdivision",
                  result.error, target);
    throw NumericalError(text);
  }
  return result;
}

}  // namespace robustbeta
