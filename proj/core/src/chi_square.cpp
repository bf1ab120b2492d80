#include <cmath>
#include <limits>

#include "osslam/association.hpp"
#include "osslam/error.hpp"

namespace osslam {

namespace {

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 1000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(log_prefix);
  }
  // Lentz continued fraction for Q(a, x).
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(log_prefix) * h;
}

}  // namespace

double chi_square_cdf(double x, int dof) {
  if (dof < 1) throw UsageError("chi-square dof must be >= 1");
  return gamma_p(0.5 * dof, 0.5 * x);
}

double chi_square_quantile(int dof, double confidence) {
  if (dof < 1) throw UsageError("chi-square dof must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw UsageError("chi-square confidence must lie in (0, 1)");

  // Bracket, then Newton steps guarded by bisection.
  const double k = dof;
  double lo = 0.0;
  double hi = std::max(1.0, 2.0 * k);
  while (chi_square_cdf(hi, dof) < confidence) hi *= 2.0;
  double x = 0.5 * (lo + hi);
  const double log_norm = -0.5 * k * std::log(2.0) - std::lgamma(0.5 * k);
  for (int it = 0; it < 200; ++it) {
    const double f = chi_square_cdf(x, dof) - confidence;
    if (f > 0.0) hi = x; else lo = x;
    if (std::abs(f) < 1e-15 || hi - lo < 1e-14 * std::max(1.0, x)) break;
    const double pdf = std::exp(log_norm + (0.5 * k - 1.0) * std::log(x) - 0.5 * x);
    double next = x - f / pdf;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    x = next;
  }
  return x;
}

}  // namespace osslam
