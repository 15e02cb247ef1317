#include "cafe/numerics.hpp"

#include <cmath>
#include <stdexcept>

namespace cafe::num {

Probability::Probability(double v) : value_(v) {
  if (std::isnan(v) || v < 0.0 || v > 1.0)
    throw std::domain_error("probability must lie in [0, 1] and not be NaN");
}

namespace {

constexpr int kMaxIter = 500;
constexpr double kRelTol = 1e-16;

// Series for P(a, x); converges quickly when x < a + 1.
double gamma_p_series(double a, double x) {
  double denom = a;
  double term = 1.0 / a;
  double sum = term;
  for (int i = 0; i < kMaxIter; ++i) {
    denom += 1.0;
    term *= x / denom;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kRelTol) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz continued fraction for Q(a, x); for x >= a + 1.
double gamma_q_continued_fraction(double a, double x) {
  constexpr double kTiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kRelTol) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Inverse CDF on the lower half p in (0, 0.5]. Rational approximation
// (Acklam) refined by one Halley step; the correction is computed in log
// space so the density reciprocal cannot overflow in the far tail.
double quantile_lower_half(double p) {
  static constexpr double A[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double B[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double C[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double D[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double kLow = 0.02425;

  double x;
  if (p < kLow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) /
        ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) *
        q /
        (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0);
  }

  const double err = normal_cdf(x) - p;
  if (err != 0.0) {
    const double log_u =
        std::log(std::fabs(err)) + 0.5 * x * x + 0.5 * std::log(2.0 * M_PI);
    const double u = std::copysign(std::exp(log_u), err);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

}  // namespace

double lower_regularized_gamma(double a, double x) {
  if (!(a > 0.0) || std::isnan(x) || x < 0.0)
    throw std::domain_error("lower_regularized_gamma: need a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_continued_fraction(a, x);
}

double upper_regularized_gamma(double a, double x) {
  if (!(a > 0.0) || std::isnan(x) || x < 0.0)
    throw std::domain_error("upper_regularized_gamma: need a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_continued_fraction(a, x);
}

Probability chi2_survival(double t, int k) {
  if (k < 1) throw std::domain_error("chi2_survival: k must be >= 1");
  if (std::isnan(t) || t < 0.0)
    throw std::domain_error("chi2_survival: t must be >= 0");
  return Probability(upper_regularized_gamma(0.5 * k, 0.5 * t));
}

double normal_cdf(double z) {
  if (std::isnan(z)) throw std::domain_error("normal_cdf: NaN input");
  const double tail = 0.5 * upper_regularized_gamma(0.5, 0.5 * z * z);
  return z >= 0.0 ? 1.0 - tail : tail;
}

double normal_quantile(Probability prob) {
  const double p = prob.value();
  if (p <= 0.0 || p >= 1.0)
    throw std::domain_error("normal_quantile: p must lie strictly inside (0, 1)");
  // Reflect the upper half so both tails run through the well-conditioned
  // small-p path.
  if (p > 0.5) return -quantile_lower_half(1.0 - p);
  return quantile_lower_half(p);
}

Probability gumbel_survival(double g) {
  if (std::isnan(g)) throw std::domain_error("gumbel_survival: NaN input");
  return Probability(-std::expm1(-std::exp(-g)));
}

double gumbel_quantile(Probability prob) {
  const double p = prob.value();
  if (p <= 0.0 || p >= 1.0)
    throw std::domain_error("gumbel_quantile: p must lie strictly inside (0, 1)");
  return -std::log(-std::log1p(-p));
}

}  // namespace cafe::num
