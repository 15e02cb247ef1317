#include "cafe/learners.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cafe/error.hpp"

namespace cafe {

namespace {

struct ResolvedTerm {
  FeatureMap::Term::Kind kind;
  std::size_t a = 0;
  std::size_t b = 0;
};

std::vector<ResolvedTerm> resolve_terms(const FeatureMap& fm,
                                        const TrialDataset& ds) {
  std::vector<ResolvedTerm> out;
  out.reserve(fm.dimension());
  for (const auto& term : fm.terms()) {
    ResolvedTerm rt;
    rt.kind = term.kind;
    rt.a = ds.covariate_index(term.a);
    if (term.kind == FeatureMap::Term::Kind::interaction)
      rt.b = ds.covariate_index(term.b);
    out.push_back(rt);
  }
  return out;
}

double eval_term(const TrialDataset& ds, std::size_t row,
                 const ResolvedTerm& rt) {
  switch (rt.kind) {
    case FeatureMap::Term::Kind::raw:
      return ds.covariate(row, rt.a);
    case FeatureMap::Term::Kind::interaction:
      return ds.covariate(row, rt.a) * ds.covariate(row, rt.b);
    case FeatureMap::Term::Kind::square: {
      const double v = ds.covariate(row, rt.a);
      return v * v;
    }
  }
  return 0.0;
}

// Intercept column first, then the expanded terms, over the given rows.
Eigen::MatrixXd design_matrix(const TrialDataset& ds,
                              const std::vector<ResolvedTerm>& terms,
                              const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd x(rows.size(), terms.size() + 1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    x(static_cast<Eigen::Index>(r), 0) = 1.0;
    for (std::size_t c = 0; c < terms.size(); ++c)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c + 1)) =
          eval_term(ds, rows[r], terms[c]);
  }
  return x;
}

// Least squares with a rank check; column_names has one entry per design
// column and feeds the rank-deficiency message.
Eigen::VectorXd least_squares(const Eigen::MatrixXd& x,
                              const Eigen::VectorXd& y,
                              const std::vector<std::string>& column_names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols()) {
    const auto perm = qr.colsPermutation().indices();
    const auto offender = static_cast<std::size_t>(perm(qr.rank()));
    throw RankError("design matrix is rank deficient; dependent term: " +
                    column_names.at(offender));
  }
  return qr.solve(y);
}

std::vector<std::string> design_names(const FeatureMap& fm) {
  std::vector<std::string> names{"intercept"};
  for (const auto& n : fm.names()) names.push_back(n);
  return names;
}

std::vector<std::size_t> arm_rows(const TrialDataset& ds, int arm) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.treatment()[i] == arm) rows.push_back(i);
  return rows;
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double log1p_exp(double t) {
  return std::max(t, 0.0) + std::log1p(std::exp(-std::fabs(t)));
}

// Logistic fit over the given rows; throws ValidationError when a class is
// missing and ConvergenceError on separation or iteration exhaustion.
Eigen::VectorXd logistic_coefficients(const TrialDataset& ds,
                                      const std::vector<ResolvedTerm>& terms,
                                      const std::vector<std::size_t>& rows,
                                      const FeatureMap& fm) {
  std::size_t ones = 0;
  for (std::size_t i : rows) ones += ds.treatment()[i] == 1 ? 1u : 0u;
  if (ones == 0 || ones == rows.size())
    throw ValidationError(
        "logistic fit needs both treatment classes; the sample has only A = " +
        std::string(ones == 0 ? "0" : "1"));

  const Eigen::MatrixXd x = design_matrix(ds, terms, rows);
  if (x.rows() <= x.cols())
    throw ValidationError("logistic fit needs more rows than coefficients");
  Eigen::VectorXd y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    y(static_cast<Eigen::Index>(i)) = ds.treatment()[rows[i]];

  const auto n = static_cast<double>(x.rows());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());

  auto log_likelihood = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = x * b;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
      ll += y(i) * eta(i) - log1p_exp(eta(i));
    return ll;
  };

  double ll = log_likelihood(beta);
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd p(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      p(i) = sigmoid(eta(i));
      w(i) = p(i) * (1.0 - p(i));
    }
    const Eigen::VectorXd grad = x.transpose() * (y - p) / n;
    if (grad.cwiseAbs().maxCoeff() < 1e-8) return beta;

    const Eigen::MatrixXd hess =
        x.transpose() * w.asDiagonal() * x / n;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);

    double scale = 1.0;
    Eigen::VectorXd next = beta + step;
    double ll_next = log_likelihood(next);
    for (int halving = 0; halving < 30 && ll_next < ll; ++halving) {
      scale *= 0.5;
      next = beta + scale * step;
      ll_next = log_likelihood(next);
    }
    // No improving step within rounding noise: already at the optimum.
    if (ll_next < ll) return beta;
    beta = next;
    ll = ll_next;
    if (beta.cwiseAbs().maxCoeff() > 30.0)
      throw ConvergenceError(
          "logistic coefficients diverged past magnitude 30; the classes "
          "appear perfectly separated");
  }
  return beta;
}

}  // namespace

FeatureMap FeatureMap::parse(const std::vector<std::string>& specs) {
  FeatureMap fm;
  for (const auto& spec : specs) {
    Term term;
    if (spec.rfind("interaction:", 0) == 0) {
      const std::string body = spec.substr(12);
      const auto star = body.find('*');
      if (star == std::string::npos || star == 0 || star + 1 == body.size())
        throw ValidationError("interaction term needs the form "
                              "'interaction:a*b', got '" +
                              spec + "'");
      term.kind = Term::Kind::interaction;
      term.a = body.substr(0, star);
      term.b = body.substr(star + 1);
    } else if (spec.rfind("square:", 0) == 0) {
      term.kind = Term::Kind::square;
      term.a = spec.substr(7);
      if (term.a.empty())
        throw ValidationError("square term needs a column name, got '" +
                              spec + "'");
    } else {
      if (spec.empty()) throw ValidationError("empty feature name");
      term.kind = Term::Kind::raw;
      term.a = spec;
    }
    fm.terms_.push_back(std::move(term));
  }
  return fm;
}

std::vector<std::string> FeatureMap::names() const {
  std::vector<std::string> out;
  out.reserve(terms_.size());
  for (const auto& term : terms_) {
    switch (term.kind) {
      case Term::Kind::raw:
        out.push_back(term.a);
        break;
      case Term::Kind::interaction:
        out.push_back(term.a + "*" + term.b);
        break;
      case Term::Kind::square:
        out.push_back(term.a + "^2");
        break;
    }
  }
  return out;
}

std::vector<double> FeatureMap::expand(const TrialDataset& ds,
                                       std::size_t row) const {
  const auto resolved = resolve_terms(*this, ds);
  std::vector<double> out;
  out.reserve(resolved.size());
  for (const auto& rt : resolved) out.push_back(eval_term(ds, row, rt));
  return out;
}

double CateModel::predict(const TrialDataset& ds, std::size_t row) const {
  const auto resolved = resolve_terms(features, ds);
  double v = contrast.at(0);
  for (std::size_t j = 0; j < resolved.size(); ++j)
    v += contrast.at(j + 1) * eval_term(ds, row, resolved[j]);
  return v;
}

std::vector<double> CateModel::predict_all(const TrialDataset& ds) const {
  const auto resolved = resolve_terms(features, ds);
  std::vector<double> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double v = contrast.at(0);
    for (std::size_t j = 0; j < resolved.size(); ++j)
      v += contrast.at(j + 1) * eval_term(ds, i, resolved[j]);
    out[i] = v;
  }
  return out;
}

CateModel fit_t_learner(const TrialDataset& os, const FeatureMap& features) {
  const auto terms = resolve_terms(features, os);
  const auto names = design_names(features);
  std::vector<Eigen::VectorXd> arm_fit(2);
  for (int arm = 0; arm < 2; ++arm) {
    const auto rows = arm_rows(os, arm);
    if (rows.size() <= features.dimension() + 1)
      throw ValidationError(
          "arm A=" + std::to_string(arm) + " has " +
          std::to_string(rows.size()) + " rows; the per-arm fit needs more "
          "than " + std::to_string(features.dimension() + 1));
    const Eigen::MatrixXd x = design_matrix(os, terms, rows);
    Eigen::VectorXd y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      y(static_cast<Eigen::Index>(i)) = os.outcome()[rows[i]];
    arm_fit[arm] = least_squares(x, y, names);
  }
  CateModel model;
  model.features = features;
  model.contrast.resize(features.dimension() + 1);
  for (std::size_t j = 0; j < model.contrast.size(); ++j)
    model.contrast[j] = arm_fit[1](static_cast<Eigen::Index>(j)) -
                        arm_fit[0](static_cast<Eigen::Index>(j));
  return model;
}

CateModel fit_s_learner(const TrialDataset& os, const FeatureMap& features) {
  const auto terms = resolve_terms(features, os);
  const std::size_t p = features.dimension();
  const std::size_t cols = 2 * p + 2;  // 1, f, A, A*f
  if (os.size() <= cols)
    throw ValidationError("pooled fit needs more than " +
                          std::to_string(cols) + " rows, got " +
                          std::to_string(os.size()));

  Eigen::MatrixXd x(os.size(), cols);
  Eigen::VectorXd y(os.size());
  for (std::size_t i = 0; i < os.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double a = os.treatment()[i];
    x(r, 0) = 1.0;
    for (std::size_t c = 0; c < p; ++c) {
      const double v = eval_term(os, i, terms[c]);
      x(r, static_cast<Eigen::Index>(1 + c)) = v;
      x(r, static_cast<Eigen::Index>(2 + p + c)) = a * v;
    }
    x(r, static_cast<Eigen::Index>(1 + p)) = a;
    y(r) = os.outcome()[i];
  }

  std::vector<std::string> names{"intercept"};
  for (const auto& n : features.names()) names.push_back(n);
  names.push_back("a");
  for (const auto& n : features.names()) names.push_back("a*" + n);

  const Eigen::VectorXd coef = least_squares(x, y, names);
  CateModel model;
  model.features = features;
  model.contrast.resize(p + 1);
  model.contrast[0] = coef(static_cast<Eigen::Index>(1 + p));
  for (std::size_t c = 0; c < p; ++c)
    model.contrast[c + 1] = coef(static_cast<Eigen::Index>(2 + p + c));
  return model;
}

double PropensityModel::predict(const TrialDataset& ds,
                                std::size_t row) const {
  const auto resolved = resolve_terms(features, ds);
  double eta = coefficients.at(0);
  for (std::size_t j = 0; j < resolved.size(); ++j)
    eta += coefficients.at(j + 1) * eval_term(ds, row, resolved[j]);
  return std::clamp(sigmoid(eta), 1e-6, 1.0 - 1e-6);
}

std::vector<double> PropensityModel::predict_all(
    const TrialDataset& ds) const {
  std::vector<double> out(ds.size());
  const auto resolved = resolve_terms(features, ds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double eta = coefficients.at(0);
    for (std::size_t j = 0; j < resolved.size(); ++j)
      eta += coefficients.at(j + 1) * eval_term(ds, i, resolved[j]);
    out[i] = std::clamp(sigmoid(eta), 1e-6, 1.0 - 1e-6);
  }
  return out;
}

PropensityModel fit_logistic_propensity(const TrialDataset& os,
                                        const FeatureMap& features) {
  const auto terms = resolve_terms(features, os);
  std::vector<std::size_t> rows(os.size());
  std::iota(rows.begin(), rows.end(), 0u);
  const Eigen::VectorXd beta =
      logistic_coefficients(os, terms, rows, features);
  PropensityModel model;
  model.features = features;
  model.coefficients.assign(beta.data(), beta.data() + beta.size());
  return model;
}

RLearnerFit fit_r_learner(const TrialDataset& os, const FeatureMap& features,
                          const RLearnerOptions& options) {
  const std::size_t n = os.size();
  const auto terms = resolve_terms(features, os);
  const auto names = design_names(features);

  if (options.known_propensity && options.known_propensity->size() != n)
    throw ValidationError("known propensity length does not match rows");
  if (options.known_outcome_mean && options.known_outcome_mean->size() != n)
    throw ValidationError("known outcome mean length does not match rows");
  if (options.known_propensity)
    for (double e : *options.known_propensity)
      if (!(e > 0.0 && e < 1.0))
        throw ValidationError(
            "known propensity values must lie strictly inside (0, 1)");

  std::vector<double> m_hat(n), e_hat(n);
  const bool need_m = !options.known_outcome_mean.has_value();
  const bool need_e = !options.known_propensity.has_value();
  if (!need_m) m_hat = *options.known_outcome_mean;
  if (!need_e) e_hat = *options.known_propensity;

  if (need_m || need_e) {
    // 2-fold cross-fit: each half's nuisances come from a model trained on
    // the other half
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::mt19937_64 gen(options.seed);
    std::shuffle(order.begin(), order.end(), gen);
    const std::size_t half = n / 2;
    std::vector<std::vector<std::size_t>> fold(2);
    for (std::size_t pos = 0; pos < n; ++pos)
      fold[pos < half ? 0 : 1].push_back(order[pos]);

    for (int f = 0; f < 2; ++f) {
      const auto& test = fold[f];
      const auto& train = fold[1 - f];
      if (need_m) {
        if (train.size() <= features.dimension() + 1)
          throw ValidationError("cross-fit fold too small for the outcome fit");
        const Eigen::MatrixXd x = design_matrix(os, terms, train);
        Eigen::VectorXd y(train.size());
        for (std::size_t i = 0; i < train.size(); ++i)
          y(static_cast<Eigen::Index>(i)) = os.outcome()[train[i]];
        const Eigen::VectorXd coef = least_squares(x, y, names);
        for (std::size_t i : test) {
          double v = coef(0);
          for (std::size_t c = 0; c < terms.size(); ++c)
            v += coef(static_cast<Eigen::Index>(c + 1)) *
                 eval_term(os, i, terms[c]);
          m_hat[i] = v;
        }
      }
      if (need_e) {
        const Eigen::VectorXd coef =
            logistic_coefficients(os, terms, train, features);
        for (std::size_t i : test) {
          double eta = coef(0);
          for (std::size_t c = 0; c < terms.size(); ++c)
            eta += coef(static_cast<Eigen::Index>(c + 1)) *
                   eval_term(os, i, terms[c]);
          e_hat[i] = std::clamp(sigmoid(eta), 1e-6, 1.0 - 1e-6);
        }
      }
    }
  }

  std::vector<std::size_t> kept;
  kept.reserve(n);
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::fabs(os.treatment()[i] - e_hat[i]) < 1e-6)
      ++dropped;
    else
      kept.push_back(i);
  }
  if (kept.empty())
    throw ValidationError(
        "no rows left for the residual fit: |A - e_hat| < 1e-6 everywhere");
  if (kept.size() <= features.dimension() + 1)
    throw ValidationError("too few rows left after dropping " +
                          std::to_string(dropped) +
                          " near-boundary propensities");

  // weighted least squares via the sqrt-weight transform
  Eigen::MatrixXd x(kept.size(), features.dimension() + 1);
  Eigen::VectorXd y(kept.size());
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const std::size_t i = kept[r];
    const double denom = os.treatment()[i] - e_hat[i];
    const double sw = std::fabs(denom);
    const double pseudo = (os.outcome()[i] - m_hat[i]) / denom;
    const auto er = static_cast<Eigen::Index>(r);
    x(er, 0) = sw;
    for (std::size_t c = 0; c < terms.size(); ++c)
      x(er, static_cast<Eigen::Index>(c + 1)) =
          sw * eval_term(os, i, terms[c]);
    y(er) = sw * pseudo;
  }
  const Eigen::VectorXd coef = least_squares(x, y, names);

  RLearnerFit fit;
  fit.dropped_rows = dropped;
  fit.model.features = features;
  fit.model.contrast.assign(coef.data(), coef.data() + coef.size());
  return fit;
}

}  // namespace cafe
