#include "cafe/engine.hpp"

#include <cmath>

#include "cafe/error.hpp"

namespace cafe {

using num::Probability;

std::vector<GroupSummary> group_summaries(const TrialDataset& ds,
                                          const PredictionSet& preds,
                                          const Partition& part) {
  const std::size_t n = ds.size();
  if (preds.tau_hat.size() != n)
    throw ValidationError("predictions and dataset have different lengths");
  if (part.group_of.size() != n)
    throw ValidationError("partition and dataset have different lengths");
  if (part.group_count < 1) throw ValidationError("partition has no groups");

  std::vector<GroupSummary> out;
  out.reserve(static_cast<std::size_t>(part.group_count));
  for (int k = 1; k <= part.group_count; ++k) {
    const auto members = part.members(k);
    GroupSummary g;
    g.group = k;
    g.n = members.size();

    double sum1 = 0.0, sum0 = 0.0, pred_sum = 0.0;
    for (std::size_t i : members) {
      if (ds.treatment()[i] == 1) {
        ++g.n_treated;
        sum1 += ds.outcome()[i];
      } else {
        ++g.n_control;
        sum0 += ds.outcome()[i];
      }
      pred_sum += preds.tau_hat[i];
    }
    if (g.n_treated < 2 || g.n_control < 2)
      throw OccupancyError(
          "group " + std::to_string(k) + " has " +
          std::to_string(g.n_treated) + " treated and " +
          std::to_string(g.n_control) +
          " control units; the variance plug-in needs at least 2 of each");

    const double mean1 = sum1 / static_cast<double>(g.n_treated);
    const double mean0 = sum0 / static_cast<double>(g.n_control);
    double ss1 = 0.0, ss0 = 0.0;
    for (std::size_t i : members) {
      const double y = ds.outcome()[i];
      if (ds.treatment()[i] == 1)
        ss1 += (y - mean1) * (y - mean1);
      else
        ss0 += (y - mean0) * (y - mean0);
    }
    const double var1 = ss1 / static_cast<double>(g.n_treated - 1);
    const double var0 = ss0 / static_cast<double>(g.n_control - 1);

    g.dim_effect = mean1 - mean0;
    g.variance = var1 / static_cast<double>(g.n_treated) +
                 var0 / static_cast<double>(g.n_control);
    if (g.variance <= 0.0)
      throw ZeroVarianceError(
          "group " + std::to_string(k) +
          " has zero plug-in variance (constant outcomes in both arms)");
    g.prediction_mean = pred_sum / static_cast<double>(g.n);
    g.z = (g.dim_effect - g.prediction_mean) / std::sqrt(g.variance);
    out.push_back(g);
  }
  return out;
}

TestReport cafe_test(const std::vector<GroupSummary>& summaries,
                     Probability alpha) {
  if (summaries.empty())
    throw ValidationError("need at least one group summary");
  TestReport report;
  report.statistic = Statistic::cafe;
  report.group_count = static_cast<int>(summaries.size());
  double total = 0.0;
  for (const auto& g : summaries) total += g.z * g.z;
  report.value = total;
  report.p_value = num::chi2_survival(total, report.group_count);
  report.alpha = alpha;
  report.reject = report.p_value.value() < alpha.value();
  report.groups = summaries;
  return report;
}

TestReport cafe_m_test(const std::vector<GroupSummary>& summaries,
                       Probability alpha) {
  if (summaries.size() < 2)
    throw ValidationError(
        "the max-type statistic needs at least 2 groups: its reference-law "
        "location is 0 at one group, leaving the scale undefined");
  TestReport report;
  report.statistic = Statistic::cafe_m;
  report.group_count = static_cast<int>(summaries.size());
  double max_abs = 0.0;
  for (const auto& g : summaries) max_abs = std::max(max_abs, std::fabs(g.z));
  report.value = max_abs;
  report.gumbel_location = num::normal_quantile(
      Probability(1.0 - 1.0 / (2.0 * report.group_count)));
  report.gumbel_scale = 1.0 / report.gumbel_location;
  report.p_value = num::gumbel_survival(
      (max_abs - report.gumbel_location) / report.gumbel_scale);
  report.alpha = alpha;
  report.reject = report.p_value.value() < alpha.value();
  report.groups = summaries;
  return report;
}

Decision two_stage_diagnose(const TestReport& stage1,
                            const std::optional<StageTwoData>& follow_up,
                            Probability alpha,
                            std::optional<Statistic> stage2_statistic) {
  Decision decision;
  decision.stage1 = stage1;
  if (stage1.p_value.value() >= alpha.value()) {
    decision.label = DecisionLabel::d1;
    return decision;
  }
  if (!follow_up)
    throw ValidationError(
        "attribution unavailable: stage 1 rejected but no follow-up "
        "observational test set was supplied");

  const auto sums = group_summaries(follow_up->data, follow_up->predictions,
                                    follow_up->partition);
  const Statistic stat = stage2_statistic.value_or(stage1.statistic);
  TestReport stage2 = stat == Statistic::cafe ? cafe_test(sums, alpha)
                                              : cafe_m_test(sums, alpha);
  stage2.partition_variable = follow_up->partition.variable;
  stage2.cut_points = follow_up->partition.cut_points;
  decision.label = stage2.p_value.value() >= alpha.value()
                       ? DecisionLabel::d2
                       : DecisionLabel::d3;
  decision.stage2 = std::move(stage2);
  return decision;
}

const char* to_string(DecisionLabel label) {
  switch (label) {
    case DecisionLabel::d1:
      return "D1";
    case DecisionLabel::d2:
      return "D2";
    case DecisionLabel::d3:
      return "D3";
  }
  return "?";
}

const char* to_string(Statistic stat) {
  switch (stat) {
    case Statistic::cafe:
      return "cafe";
    case Statistic::cafe_m:
      return "cafe-m";
  }
  return "?";
}

}  // namespace cafe
