#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cafe/data_model.hpp"
#include "cafe/engine.hpp"
#include "cafe/error.hpp"
#include "cafe/partition.hpp"
#include "cafe/report.hpp"
#include "cafe/sim.hpp"

namespace {

// Exit codes: 0 fit not rejected, 2 rejected, 1 operational error;
// diagnose maps its verdicts to 10 (D1), 11 (D2), 12 (D3).
enum : int {
  kExitOk = 0,
  kExitError = 1,
  kExitRejected = 2,
  kExitD1 = 10,
  kExitD2 = 11,
  kExitD3 = 12,
};

struct SchemaFlags {
  std::string treatment = "a";
  std::string outcome = "y";
  std::string covariates;  // comma separated; empty means every other column
  std::string id;

  cafe::Schema to_schema() const {
    cafe::Schema schema;
    schema.treatment = treatment;
    schema.outcome = outcome;
    if (!covariates.empty()) {
      std::string current;
      for (char c : covariates) {
        if (c == ',') {
          if (!current.empty()) schema.covariates.push_back(current);
          current.clear();
        } else {
          current += c;
        }
      }
      if (!current.empty()) schema.covariates.push_back(current);
    }
    if (!id.empty()) schema.id = id;
    return schema;
  }
};

void add_schema_flags(CLI::App* cmd, SchemaFlags& schema) {
  cmd->add_option("--treatment", schema.treatment,
                  "treatment column name (default a)");
  cmd->add_option("--outcome", schema.outcome,
                  "outcome column name (default y)");
  cmd->add_option("--covariates", schema.covariates,
                  "comma-separated covariate columns (default: all others)");
  cmd->add_option("--id", schema.id, "optional id column for prediction joins");
}

double checked_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw cafe::ValidationError("alpha must lie inside (0, 1)");
  return alpha;
}

int resolved_groups(const std::string& groups) {
  if (groups == "auto") return 0;
  try {
    const int k = std::stoi(groups);
    if (k >= 2 && std::to_string(k) == groups) return k;
  } catch (...) {
  }
  throw cafe::ValidationError("--groups needs 'auto' or an integer >= 2, got '" +
                              groups + "'");
}

struct TestArgs {
  std::string rct_path;
  std::string predictions_path;
  SchemaFlags schema;
  std::string partition_by = "cate";
  std::string groups = "auto";
  double alpha = 0.05;
  std::string stat = "both";
  std::string out_path;
};

int cmd_test(const TestArgs& args) {
  const cafe::TrialDataset rct =
      cafe::load_dataset(args.rct_path, args.schema.to_schema(), cafe::Source::rct);
  const cafe::PredictionSet preds =
      cafe::attach_predictions(rct, args.predictions_path);

  cafe::PartitionRule rule = cafe::parse_partition_variable(args.partition_by);
  rule.groups = resolved_groups(args.groups);
  const cafe::Partition part = cafe::build_partition(rct, preds, rule);
  const auto summaries = cafe::group_summaries(rct, preds, part);
  const cafe::num::Probability alpha(checked_alpha(args.alpha));

  std::vector<cafe::TestReport> reports;
  if (args.stat == "cafe" || args.stat == "both")
    reports.push_back(cafe::cafe_test(summaries, alpha));
  if (args.stat == "cafe-m" || args.stat == "both")
    reports.push_back(cafe::cafe_m_test(summaries, alpha));
  if (reports.empty())
    throw cafe::ValidationError("--stat needs cafe, cafe-m or both, got '" +
                                args.stat + "'");

  nlohmann::ordered_json out;
  bool rejected = false;
  for (cafe::TestReport& report : reports) {
    report.partition_variable = part.variable;
    report.cut_points = part.cut_points;
    std::fputs(cafe::format_test_report(report).c_str(), stdout);
    std::fputs("\n", stdout);
    out[cafe::to_string(report.statistic)] = cafe::test_report_json(report);
    rejected = rejected || report.reject;
  }
  if (!args.out_path.empty()) cafe::write_json_file(args.out_path, out);
  return rejected ? kExitRejected : kExitOk;
}

struct DiagnoseArgs {
  std::string rct_path;
  std::string predictions_path;
  std::string os_test_path;
  std::string os_predictions_path;
  SchemaFlags schema;
  std::string partition_by = "cate";
  std::string groups = "auto";
  double alpha = 0.05;
  std::string stat = "cafe";
  std::string stage2_stat;
  std::string stage2_partition_by;
  std::string out_path;
};

cafe::Statistic parse_statistic(const std::string& text, const char* flag) {
  if (text == "cafe") return cafe::Statistic::cafe;
  if (text == "cafe-m") return cafe::Statistic::cafe_m;
  throw cafe::ValidationError(std::string(flag) +
                              " needs cafe or cafe-m, got '" + text + "'");
}

int cmd_diagnose(const DiagnoseArgs& args) {
  const cafe::Schema schema = args.schema.to_schema();
  const cafe::TrialDataset rct =
      cafe::load_dataset(args.rct_path, schema, cafe::Source::rct);
  const cafe::PredictionSet preds =
      cafe::attach_predictions(rct, args.predictions_path);

  cafe::PartitionRule rule = cafe::parse_partition_variable(args.partition_by);
  rule.groups = resolved_groups(args.groups);
  const cafe::Partition part = cafe::build_partition(rct, preds, rule);
  const auto summaries = cafe::group_summaries(rct, preds, part);
  const cafe::num::Probability alpha(checked_alpha(args.alpha));

  const cafe::Statistic stage1_stat = parse_statistic(args.stat, "--stat");
  cafe::TestReport stage1 = stage1_stat == cafe::Statistic::cafe
                                ? cafe::cafe_test(summaries, alpha)
                                : cafe::cafe_m_test(summaries, alpha);
  stage1.partition_variable = part.variable;
  stage1.cut_points = part.cut_points;

  std::optional<cafe::Statistic> stage2_stat;
  if (!args.stage2_stat.empty())
    stage2_stat = parse_statistic(args.stage2_stat, "--stage2-stat");

  std::optional<cafe::StageTwoData> follow_up;
  if (stage1.reject && !args.os_test_path.empty()) {
    cafe::TrialDataset os = cafe::load_dataset(args.os_test_path, schema,
                                               cafe::Source::observational);
    if (args.os_predictions_path.empty())
      throw cafe::ValidationError(
          "--os-predictions is required alongside --os-test");
    cafe::PredictionSet os_preds =
        cafe::attach_predictions(os, args.os_predictions_path);
    cafe::PartitionRule rule2 =
        args.stage2_partition_by.empty()
            ? rule
            : cafe::parse_partition_variable(args.stage2_partition_by);
    rule2.groups = part.group_count;  // stage 2 reuses the stage-1 group count
    cafe::Partition part2 = cafe::build_partition(os, os_preds, rule2);
    follow_up = cafe::StageTwoData{std::move(os), std::move(os_preds),
                                   std::move(part2)};
  }

  const cafe::Decision decision =
      cafe::two_stage_diagnose(stage1, follow_up, alpha, stage2_stat);
  std::fputs(cafe::format_decision(decision).c_str(), stdout);
  if (!args.out_path.empty())
    cafe::write_json_file(args.out_path, cafe::decision_json(decision));

  switch (decision.label) {
    case cafe::DecisionLabel::d1: return kExitD1;
    case cafe::DecisionLabel::d2: return kExitD2;
    case cafe::DecisionLabel::d3: return kExitD3;
  }
  return kExitError;
}

struct SimulateArgs {
  std::string config_path;
  std::string out_path;
  std::string pvalues_csv;
  std::string qq_csv;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

int cmd_simulate(const SimulateArgs& args) {
  cafe::ScenarioSpec spec = cafe::parse_scenario_file(args.config_path);
  if (args.seed) spec.seed = *args.seed;
  if (args.threads) spec.threads = *args.threads;

  const std::size_t batch = std::max<std::size_t>(1, spec.replicates / 20);
  const auto progress = [batch](std::size_t done, std::size_t total) {
    if (done % batch == 0 || done == total)
      std::fprintf(stderr, "completed %zu/%zu replicates\n", done, total);
  };
  const cafe::ScenarioReport report = cafe::run_scenario(spec, progress);

  std::fputs(cafe::format_scenario_report(report).c_str(), stdout);
  if (!args.out_path.empty())
    cafe::write_json_file(args.out_path, cafe::scenario_report_json(report));
  if (!args.pvalues_csv.empty()) cafe::write_pvalues_csv(args.pvalues_csv, report);
  if (!args.qq_csv.empty()) cafe::write_qq_csv(args.qq_csv, report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "cafe: goodness-of-fit tests for treatment-effect predictions "
      "against randomized-trial data"};
  app.require_subcommand(1);

  TestArgs test_args;
  CLI::App* test = app.add_subcommand(
      "test", "test predictions against a randomized trial");
  test->add_option("--rct", test_args.rct_path, "trial CSV")->required();
  test->add_option("--predictions", test_args.predictions_path,
                   "per-row predictions CSV (tau_hat, optional e_hat, id)")
      ->required();
  add_schema_flags(test, test_args.schema);
  test->add_option("--partition-by", test_args.partition_by,
                   "propensity, cate or covariate:<name> (default cate)");
  test->add_option("--groups", test_args.groups,
                   "group count, or auto (default)");
  test->add_option("--alpha", test_args.alpha, "test level (default 0.05)");
  test->add_option("--stat", test_args.stat, "cafe, cafe-m or both (default)");
  test->add_option("--out", test_args.out_path, "write the report JSON here");

  DiagnoseArgs diag_args;
  CLI::App* diagnose = app.add_subcommand(
      "diagnose",
      "attribute a rejection to confounding or misspecification using a "
      "held-out observational test set");
  diagnose->add_option("--rct", diag_args.rct_path, "trial CSV")->required();
  diagnose->add_option("--predictions", diag_args.predictions_path,
                       "trial predictions CSV")
      ->required();
  diagnose->add_option("--os-test", diag_args.os_test_path,
                       "held-out observational CSV (disjoint from training)");
  diagnose->add_option("--os-predictions", diag_args.os_predictions_path,
                       "predictions CSV for the held-out rows");
  add_schema_flags(diagnose, diag_args.schema);
  diagnose->add_option("--partition-by", diag_args.partition_by,
                       "propensity, cate or covariate:<name> (default cate)");
  diagnose->add_option("--groups", diag_args.groups,
                       "group count, or auto (default)");
  diagnose->add_option("--alpha", diag_args.alpha, "test level (default 0.05)");
  diagnose->add_option("--stat", diag_args.stat,
                       "stage-1 statistic: cafe (default) or cafe-m");
  diagnose->add_option("--stage2-stat", diag_args.stage2_stat,
                       "stage-2 statistic (default: same as stage 1)");
  diagnose->add_option("--stage2-partition-by", diag_args.stage2_partition_by,
                       "stage-2 partition rule (default: same as stage 1)");
  diagnose->add_option("--out", diag_args.out_path,
                       "write the decision JSON here");

  SimulateArgs sim_args;
  std::uint64_t seed_value = 0;
  unsigned threads_value = 0;
  CLI::App* simulate =
      app.add_subcommand("simulate", "run a Monte Carlo scenario");
  simulate->add_option("--config", sim_args.config_path, "scenario TOML file")
      ->required();
  simulate->add_option("--out", sim_args.out_path, "write the report JSON here");
  simulate->add_option("--pvalues-csv", sim_args.pvalues_csv,
                       "write per-replicate p-values CSV here");
  simulate->add_option("--qq-csv", sim_args.qq_csv,
                       "write sorted p-value vs uniform-position CSV here");
  CLI::Option* seed_opt = simulate->add_option(
      "--seed", seed_value, "override the scenario seed");
  CLI::Option* threads_opt = simulate->add_option(
      "--threads", threads_value, "override the scenario thread count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  if (seed_opt->count() > 0) sim_args.seed = seed_value;
  if (threads_opt->count() > 0) sim_args.threads = threads_value;

  try {
    if (test->parsed()) return cmd_test(test_args);
    if (diagnose->parsed()) return cmd_diagnose(diag_args);
    if (simulate->parsed()) return cmd_simulate(sim_args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
