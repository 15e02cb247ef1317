#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cafe/data_model.hpp"
#include "cafe/engine.hpp"
#include "cafe/learners.hpp"
#include "cafe/partition.hpp"

namespace cafe {

enum class SettingId { p1, p2, p3 };
enum class SpecVariant { correct, misspecified };
enum class LearnerKind { t_learner, s_learner, r_learner };

std::string to_string(SettingId setting);
std::string to_string(SpecVariant variant);
std::string to_string(LearnerKind learner);
SettingId parse_setting(const std::string& text);
SpecVariant parse_variant(const std::string& text);
LearnerKind parse_learner(const std::string& text);

// Held-out attribution protocol: fit on a train share of the observational
// rows, then re-test the fitted model against the held-out share.
struct TwoStageSpec {
  double train_fraction = 0.9;
  Statistic stage1_statistic = Statistic::cafe;
  std::optional<Statistic> stage2_statistic;      // default: stage-1 choice
  std::optional<PartitionRule> stage2_partition;  // default: scenario rule
};

struct ScenarioSpec {
  SettingId setting = SettingId::p1;
  std::size_t m = 200;  // observational rows
  std::size_t n = 40;   // trial rows
  LearnerKind learner = LearnerKind::t_learner;
  SpecVariant variant = SpecVariant::correct;
  PartitionRule partition;  // groups == 0 means the automatic count
  double alpha = 0.05;
  std::size_t replicates = 100;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 means hardware concurrency
  std::optional<TwoStageSpec> two_stage;
};

void validate(const ScenarioSpec& spec);

struct GeneratedData {
  TrialDataset os;
  TrialDataset rct;
  std::function<double(const std::vector<double>&)> truth;
};

// Deterministic in (spec.seed, replicate_index); execution order never
// matters.
GeneratedData generate_setting(const ScenarioSpec& spec,
                               std::size_t replicate_index);

// Model terms each setting's learners work with. The misspecified variants
// drop the term the scenario is designed to hide: x5 in setting P1 (from
// both maps), the x1*x2 interaction in P2, the x1^2 square in P3.
FeatureMap cate_features(SettingId setting, SpecVariant variant);
FeatureMap propensity_features(SettingId setting, SpecVariant variant);

struct ReplicateOutcome {
  std::size_t index = 0;
  bool failed = false;
  std::string failure;
  double p_cafe = 0.0;
  double p_cafe_m = 0.0;
  bool reject_cafe = false;
  bool reject_cafe_m = false;
  std::optional<DecisionLabel> decision;
  double stage1_p = 0.0;  // two-stage runs only
  double stage2_p = 0.0;  // set only when stage 2 actually ran
  bool stage2_ran = false;
};

struct QqData {
  std::vector<std::array<double, 2>> points;  // (theoretical, empirical)
  double ks = 0.0;
};

// Sorted p-values against Uniform(0,1) plotting positions (i - 0.5) / R,
// with the largest absolute gap as the Kolmogorov-Smirnov distance.
QqData qq_points(const std::vector<double>& p_values);

struct ScenarioReport {
  ScenarioSpec spec;
  std::vector<ReplicateOutcome> replicates;  // replicate-index order
  std::vector<std::size_t> failed_indices;
  double rejection_rate_cafe = 0.0;
  double rejection_rate_cafe_m = 0.0;
  std::array<std::size_t, 3> decision_counts{0, 0, 0};  // D1, D2, D3
  QqData qq_cafe;
  QqData qq_cafe_m;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

// Runs all replicates (in parallel when spec.threads != 1) and aggregates in
// replicate-index order, so the report is identical for any thread count.
// Aborts with an error when more than 5% of replicates fail.
ScenarioReport run_scenario(const ScenarioSpec& spec,
                            const ProgressFn& progress = {});

// Flat `key = value` TOML: strings, integers, floats, booleans, # comments.
ScenarioSpec parse_scenario_text(const std::string& text,
                                 const std::string& name);
ScenarioSpec parse_scenario_file(const std::string& path);

}  // namespace cafe
