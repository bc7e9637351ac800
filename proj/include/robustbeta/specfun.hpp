#pragma once

#include <functional>

namespace robustbeta {

/// ln B(a, b) for a, b > 0. Stirling-corrected for large arguments so that the
/// result keeps full relative precision when one shape is tiny and the other huge.
double log_beta(double a, double b);

/// Digamma function psi(x), x > 0.
double digamma(double x);

/// Trigamma function psi'(x), x > 0.
double trigamma(double x);

struct QuadratureSpec {
  double absolute_tolerance = 1e-13;
  double relative_tolerance = 1e-11;
  int max_subdivisions = 1 << 15;
  // Affine change of variable x = center + scale * u before integrating; puts the bulk of a
  // wide or shifted integrand where the infinite-range mapping resolves it.
  double center = 0.0;
  double scale = 1.0;
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  // Integral of |f|; the error target is relative to it so that integrals equal to zero can converge.
  double l1_norm = 0.0;
};

/// Adaptive Gauss-Kronrod integration of f over [lower, upper]. Either limit may be infinite.
/// Throws NumericalError if f returns NaN or the error target is not met.
QuadratureResult integrate(const std::function<double(double)>& f, double lower, double upper,
                           const QuadratureSpec& spec = {});

}  // namespace robustbeta
