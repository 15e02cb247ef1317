#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cafe/data_model.hpp"
#include "cafe/numerics.hpp"
#include "cafe/partition.hpp"

namespace cafe {

// Per-group comparison of the trial's difference-in-means effect against the
// mean of the black-box predictions, standardized by the plug-in variance.
struct GroupSummary {
  int group = 0;  // 1-based
  std::size_t n = 0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  double dim_effect = 0.0;       // mean(Y | A=1) - mean(Y | A=0) in the group
  double variance = 0.0;         // s1^2/n1 + s0^2/n0, each with n-1 denominator
  double prediction_mean = 0.0;  // group mean of tau_hat
  double z = 0.0;                // (dim_effect - prediction_mean) / sqrt(variance)
};

// Requires every group to hold >= 2 treated and >= 2 control units and a
// positive plug-in variance; throws OccupancyError / ZeroVarianceError naming
// the group otherwise.
std::vector<GroupSummary> group_summaries(const TrialDataset& ds,
                                          const PredictionSet& preds,
                                          const Partition& part);

enum class Statistic { cafe, cafe_m };

struct TestReport {
  Statistic statistic = Statistic::cafe;
  double value = 0.0;  // sum of z^2, or max |z|
  int group_count = 0;
  // reference law: chi-squared(group_count) for cafe; for cafe_m a Gumbel
  // with the location/scale below
  double gumbel_location = 0.0;
  double gumbel_scale = 0.0;
  num::Probability p_value{1.0};
  num::Probability alpha{0.05};
  bool reject = false;
  std::vector<GroupSummary> groups;
  std::string partition_variable;  // descriptor for reports; empty if unset
  std::vector<double> cut_points;
};

// Sum-of-squares statistic against its chi-squared reference.
TestReport cafe_test(const std::vector<GroupSummary>& summaries,
                     num::Probability alpha);

// Max-absolute statistic against its Gumbel reference; needs >= 2 groups.
TestReport cafe_m_test(const std::vector<GroupSummary>& summaries,
                       num::Probability alpha);

enum class DecisionLabel { d1, d2, d3 };

// Follow-up sample for the second stage: a held-out observational test set,
// its predictions, and a partition of its rows (same rule family and group
// count as stage 1). Must be disjoint from the data that trained the
// predictions; that is the caller's responsibility.
struct StageTwoData {
  TrialDataset data;
  PredictionSet predictions;
  Partition partition;
};

struct Decision {
  DecisionLabel label = DecisionLabel::d1;
  TestReport stage1;
  std::optional<TestReport> stage2;
};

// D1 when stage 1 holds. Otherwise runs the same construction on the
// follow-up sample: D2 when that stays quiet (the predictions track the
// confounded contrast), D3 when it rejects too (the model family itself is
// off). stage2_statistic defaults to the stage-1 statistic.
Decision two_stage_diagnose(const TestReport& stage1,
                            const std::optional<StageTwoData>& follow_up,
                            num::Probability alpha,
                            std::optional<Statistic> stage2_statistic = {});

const char* to_string(DecisionLabel label);
const char* to_string(Statistic stat);

}  // namespace cafe
