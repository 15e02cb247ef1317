#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cafe/data_model.hpp"

namespace cafe {

// How to slice the sample into groups. groups == 0 means "auto": pick the
// count from the sample size.
struct PartitionRule {
  enum class Variable { propensity, cate, covariate };
  Variable variable = Variable::propensity;
  std::string covariate;  // used when variable == covariate
  int groups = 0;
};

// Parses "propensity", "cate" or "covariate:<name>". Group count is not part
// of the string; set it on the returned rule.
PartitionRule parse_partition_variable(const std::string& text);

struct Partition {
  int group_count = 0;
  std::vector<int> group_of;       // 1-based group labels, one per row
  std::vector<double> cut_points;  // strictly increasing, size group_count - 1
  std::string variable;            // descriptor such as "covariate:x5"

  // Row indices of group k (1-based), in row order.
  std::vector<std::size_t> members(int k) const;
};

// max(2, floor(n^(2/7))), computed with integer checks so exact powers such
// as n = 128 do not fall victim to pow() rounding.
int default_group_count(std::size_t n);

// Cut points at the empirical quantiles j/K (type-7 interpolation); unit i
// goes to the half-open interval (lower, upper] holding values[i], with the
// lowest interval closed on the left, so ties at a cut fall to the lower
// group. Throws DegeneratePartitionError when any group ends up empty.
Partition quantile_partition(const std::vector<double>& values, int k);

// Applies the rule to the chosen scalar (propensity predictions, effect
// predictions, or a named covariate column). Outcomes are never read, so the
// grouping cannot depend on them.
Partition build_partition(const TrialDataset& ds, const PredictionSet& preds,
                          const PartitionRule& rule);

}  // namespace cafe
