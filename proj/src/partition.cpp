#include "cafe/partition.hpp"

#include <algorithm>
#include <cmath>

#include "cafe/error.hpp"

namespace cafe {

PartitionRule parse_partition_variable(const std::string& text) {
  PartitionRule rule;
  if (text == "propensity") {
    rule.variable = PartitionRule::Variable::propensity;
  } else if (text == "cate") {
    rule.variable = PartitionRule::Variable::cate;
  } else if (text.rfind("covariate:", 0) == 0) {
    rule.variable = PartitionRule::Variable::covariate;
    rule.covariate = text.substr(10);
    if (rule.covariate.empty())
      throw ValidationError("partition variable 'covariate:' needs a name");
  } else {
    throw ValidationError(
        "unknown partition variable '" + text +
        "'; expected propensity, cate or covariate:<name>");
  }
  return rule;
}

std::vector<std::size_t> Partition::members(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < group_of.size(); ++i)
    if (group_of[i] == k) out.push_back(i);
  return out;
}

int default_group_count(std::size_t n) {
  if (n == 0) throw ValidationError("sample size must be positive");
  // k = floor(n^(2/7))  <=>  k^7 <= n^2 < (k+1)^7
  auto pow7 = [](unsigned long long k) {
    unsigned long long r = 1;
    for (int i = 0; i < 7; ++i) r *= k;
    return r;
  };
  const unsigned long long n2 =
      static_cast<unsigned long long>(n) * static_cast<unsigned long long>(n);
  auto k = static_cast<unsigned long long>(
      std::floor(std::pow(static_cast<double>(n), 2.0 / 7.0)));
  if (k < 1) k = 1;
  while (pow7(k + 1) <= n2) ++k;
  while (k > 1 && pow7(k) > n2) --k;
  return std::max(2, static_cast<int>(k));
}

Partition quantile_partition(const std::vector<double>& values, int k) {
  if (k < 1) throw ValidationError("group count must be at least 1");
  const std::size_t n = values.size();
  if (n < 2 * static_cast<std::size_t>(k))
    throw ValidationError("need at least 2 rows per group: n = " +
                          std::to_string(n) + ", groups = " +
                          std::to_string(k));
  for (double v : values)
    if (!std::isfinite(v))
      throw ValidationError("partition values must be finite");

  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());

  // type-7 empirical quantiles at j/K
  std::vector<double> cuts;
  cuts.reserve(k - 1);
  for (int j = 1; j < k; ++j) {
    const double h =
        static_cast<double>(n - 1) * static_cast<double>(j) / k;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);
    double q = sorted[lo];
    if (frac > 0.0 && lo + 1 < n) q += frac * (sorted[lo + 1] - sorted[lo]);
    cuts.push_back(q);
  }

  Partition part;
  part.group_count = k;
  part.cut_points = cuts;
  part.group_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    // ties at a cut stay in the lower group
    const auto below = std::upper_bound(cuts.begin(), cuts.end(), values[i],
                                        [](double v, double c) { return v <= c; });
    part.group_of[i] = 1 + static_cast<int>(below - cuts.begin());
  }

  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (int g : part.group_of) ++sizes[static_cast<std::size_t>(g - 1)];
  for (int g = 1; g <= k; ++g) {
    if (sizes[static_cast<std::size_t>(g - 1)] == 0)
      throw DegeneratePartitionError(
          "degenerate partition: group " + std::to_string(g) +
          " of " + std::to_string(k) +
          " is empty (tied values collapse the quantile cuts; retry with "
          "fewer groups)");
  }
  return part;
}

namespace {

std::string describe(const PartitionRule& rule) {
  switch (rule.variable) {
    case PartitionRule::Variable::propensity:
      return "propensity";
    case PartitionRule::Variable::cate:
      return "cate";
    case PartitionRule::Variable::covariate:
      return "covariate:" + rule.covariate;
  }
  return "?";
}

}  // namespace

Partition build_partition(const TrialDataset& ds, const PredictionSet& preds,
                          const PartitionRule& rule) {
  if (preds.tau_hat.size() != ds.size())
    throw ValidationError("predictions and dataset have different lengths");
  if (rule.groups == 1)
    throw ValidationError(
        "explicit group count must be at least 2 (the max-type reference law "
        "is undefined at one group)");
  if (rule.groups < 0)
    throw ValidationError("group count cannot be negative");

  std::vector<double> scalar;
  switch (rule.variable) {
    case PartitionRule::Variable::propensity:
      if (!preds.e_hat)
        throw ValidationError(
            "propensity partition requested but predictions carry no e_hat "
            "column");
      scalar = *preds.e_hat;
      break;
    case PartitionRule::Variable::cate:
      scalar = preds.tau_hat;
      break;
    case PartitionRule::Variable::covariate:
      scalar = ds.covariate_column(ds.covariate_index(rule.covariate));
      break;
  }

  const int k =
      rule.groups == 0 ? default_group_count(ds.size()) : rule.groups;
  Partition part = quantile_partition(scalar, k);
  part.variable = describe(rule);
  return part;
}

}  // namespace cafe
