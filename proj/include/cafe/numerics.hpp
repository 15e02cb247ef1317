#pragma once

namespace cafe::num {

// A probability value. Construction enforces [0, 1] and rejects NaN, so a
// Probability in hand is always safe to report or compare.
class Probability {
 public:
  explicit Probability(double v);
  double value() const noexcept { return value_; }

 private:
  double value_;
};

// Regularized incomplete gamma pair: P(a, x) and Q(a, x) = 1 - P(a, x).
// Series expansion below x = a + 1, continued fraction above.
double lower_regularized_gamma(double a, double x);
double upper_regularized_gamma(double a, double x);

// P(ChiSq_k > t). Absolute error <= 1e-10 for t in [0, 200], k <= 100.
Probability chi2_survival(double t, int k);

// Standard normal CDF, built on the incomplete gamma pair above.
double normal_cdf(double z);

// Inverse standard normal CDF. Rational first guess refined by one Halley
// step against normal_cdf; absolute error <= 1e-9 on (1e-12, 1 - 1e-12).
// Rejects p = 0 and p = 1.
double normal_quantile(Probability p);

// P(G > g) for a standard Gumbel variable G, i.e. 1 - exp(-exp(-g)).
// Stays positive down to ~1e-300 instead of underflowing to zero.
Probability gumbel_survival(double g);

// Inverse of gumbel_survival on (0, 1).
double gumbel_quantile(Probability p);

}  // namespace cafe::num
