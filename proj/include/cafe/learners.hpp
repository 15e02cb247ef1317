#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cafe/data_model.hpp"

namespace cafe {

// Ordered basis expansion over named covariates: raw columns, pairwise
// products ("interaction:a*b") and squares ("square:a"). Column names resolve
// against whichever dataset the map is applied to.
class FeatureMap {
 public:
  struct Term {
    enum class Kind { raw, interaction, square };
    Kind kind = Kind::raw;
    std::string a;
    std::string b;  // interaction partner
  };

  FeatureMap() = default;
  static FeatureMap parse(const std::vector<std::string>& specs);

  std::size_t dimension() const noexcept { return terms_.size(); }
  const std::vector<Term>& terms() const noexcept { return terms_; }
  std::vector<std::string> names() const;
  std::vector<double> expand(const TrialDataset& ds, std::size_t row) const;

 private:
  std::vector<Term> terms_;
};

// Linear effect predictor: contrast[0] + expand(x) . contrast[1..].
struct CateModel {
  std::vector<double> contrast;  // intercept first
  FeatureMap features;

  double predict(const TrialDataset& ds, std::size_t row) const;
  std::vector<double> predict_all(const TrialDataset& ds) const;
};

// Per-arm least squares; the predictor is the difference of the two fits.
CateModel fit_t_learner(const TrialDataset& os, const FeatureMap& features);

// Single least squares on (features, A, A x features); the predictor is the
// fitted A-contrast.
CateModel fit_s_learner(const TrialDataset& os, const FeatureMap& features);

struct PropensityModel {
  std::vector<double> coefficients;  // intercept first
  FeatureMap features;

  // sigmoid of the linear form, clamped to [1e-6, 1 - 1e-6]
  double predict(const TrialDataset& ds, std::size_t row) const;
  std::vector<double> predict_all(const TrialDataset& ds) const;
};

// Maximum-likelihood logistic fit by damped Newton steps; converges when the
// mean-gradient max-norm drops below 1e-8 within 100 iterations. Coefficients
// running past magnitude 30 are reported as non-convergence (separation).
PropensityModel fit_logistic_propensity(const TrialDataset& os,
                                        const FeatureMap& features);

struct RLearnerOptions {
  std::uint64_t seed = 0;  // fold shuffling
  // Supply either nuisance per row to skip estimating it (mainly for
  // controlled experiments); values must lie strictly inside (0, 1).
  std::optional<std::vector<double>> known_propensity;
  std::optional<std::vector<double>> known_outcome_mean;
};

struct RLearnerFit {
  CateModel model;
  std::size_t dropped_rows = 0;  // |A - e_hat| < 1e-6
};

// Residual-on-residual fit: 2-fold cross-fitted nuisances (least-squares
// outcome mean, logistic propensity), then weighted least squares of
// (Y - m_hat)/(A - e_hat) on the features with weights (A - e_hat)^2.
RLearnerFit fit_r_learner(const TrialDataset& os, const FeatureMap& features,
                          const RLearnerOptions& options = {});

}  // namespace cafe
