#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cafe/report.hpp"
#include "cafe/sim.hpp"

using cafe::Decision;
using cafe::DecisionLabel;
using cafe::GroupSummary;
using cafe::ScenarioSpec;
using cafe::Statistic;
using cafe::TestReport;
using cafe::num::Probability;

namespace {

TestReport sample_report() {
  TestReport report;
  report.statistic = Statistic::cafe;
  report.value = 3.0;
  report.group_count = 3;
  report.p_value = Probability(0.3916251762710877);
  report.alpha = Probability(0.05);
  report.reject = false;
  report.partition_variable = "covariate:x5";
  report.cut_points = {1.5, 3.25};
  GroupSummary g;
  g.group = 1;
  g.n = 40;
  g.n_treated = 21;
  g.n_control = 19;
  g.dim_effect = 1.75;
  g.prediction_mean = 1.5;
  g.variance = 0.25;
  g.z = 0.5;
  report.groups = {g};
  return report;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("test report JSON carries the full group table in stable order") {
  const auto j = cafe::test_report_json(sample_report());
  CHECK(j["statistic"] == "cafe");
  CHECK(j["value"] == 3.0);
  CHECK(j["groups"] == 3);
  CHECK(j["p_value"] == 0.3916251762710877);
  CHECK(j["alpha"] == 0.05);
  CHECK(j["reject"] == false);
  CHECK(j["reference"]["law"] == "chi-squared");
  CHECK(j["reference"]["dof"] == 3);
  CHECK(j["partition"]["variable"] == "covariate:x5");
  CHECK(j["partition"]["cut_points"].size() == 2);
  REQUIRE(j["group_table"].size() == 1);
  CHECK(j["group_table"][0]["n_treated"] == 21);
  CHECK(j["group_table"][0]["z"] == 0.5);

  std::vector<std::string> keys;
  for (const auto& item : j.items()) keys.push_back(item.key());
  CHECK(keys == std::vector<std::string>{"statistic", "value", "groups",
                                         "reference", "p_value", "alpha",
                                         "reject", "partition", "group_table"});

  TestReport max_form = sample_report();
  max_form.statistic = Statistic::cafe_m;
  max_form.gumbel_location = 0.9674;
  max_form.gumbel_scale = 1.0337;
  const auto jm = cafe::test_report_json(max_form);
  CHECK(jm["reference"]["law"] == "gumbel");
  CHECK(jm["reference"]["location"] == 0.9674);
  CHECK(jm["reference"]["scale"] == 1.0337);
}

TEST_CASE("reported probabilities are floored at 1e-300") {
  CHECK(cafe::reported_probability(Probability(0.0)) == 1e-300);
  CHECK(cafe::reported_probability(Probability(0.5)) == 0.5);
  CHECK(cafe::reported_probability(Probability(1.0)) == 1.0);

  TestReport report = sample_report();
  report.p_value = Probability(0.0);
  CHECK(cafe::test_report_json(report)["p_value"] == 1e-300);
}

TEST_CASE("decision JSON nests both stages") {
  Decision d;
  d.label = DecisionLabel::d2;
  d.stage1 = sample_report();
  d.stage1.reject = true;
  d.stage2 = sample_report();
  const auto j = cafe::decision_json(d);
  CHECK(j["decision"] == "D2");
  CHECK(j["stage1"]["reject"] == true);
  CHECK(j["stage2"]["reject"] == false);

  Decision accept;
  accept.label = DecisionLabel::d1;
  accept.stage1 = sample_report();
  const auto ja = cafe::decision_json(accept);
  CHECK(ja["decision"] == "D1");
  CHECK(ja["stage2"].is_null());
}

TEST_CASE("scenario JSON is byte-identical across reruns and thread counts") {
  ScenarioSpec spec;
  spec.setting = cafe::SettingId::p1;
  spec.m = 200;
  spec.n = 40;
  spec.replicates = 8;
  spec.seed = 21;
  spec.threads = 1;
  const auto first = cafe::run_scenario(spec);
  spec.threads = 4;
  const auto second = cafe::run_scenario(spec);

  const std::string a = cafe::scenario_report_json(first).dump(2);
  const std::string b = cafe::scenario_report_json(second).dump(2);
  CHECK(a == b);

  const auto j = cafe::scenario_report_json(first);
  CHECK(j["scenario"]["setting"] == "P1");
  CHECK(j["scenario"]["partition"]["variable"] == "propensity");
  CHECK(j["replicates"] == 8);
  CHECK(j["failures"].empty());
  REQUIRE(j["per_replicate"].size() == 8);
  CHECK(j["per_replicate"][0]["index"] == 0);
  CHECK(j["per_replicate"][0].contains("p_cafe"));
  CHECK(j["rejection_rate"].contains("cafe"));
  CHECK(j["rejection_rate"].contains("cafe-m"));
  CHECK(j["ks_distance"]["cafe"].is_number());
  CHECK(!j.contains("decisions"));
}

TEST_CASE("two-stage scenario JSON counts decisions") {
  ScenarioSpec spec;
  spec.setting = cafe::SettingId::p1;
  spec.variant = cafe::SpecVariant::misspecified;
  spec.m = 600;
  spec.n = 60;
  spec.partition.variable = cafe::PartitionRule::Variable::covariate;
  spec.partition.covariate = "x5";
  spec.partition.groups = 2;
  spec.replicates = 6;
  spec.seed = 3;
  spec.threads = 2;
  cafe::TwoStageSpec two;
  spec.two_stage = two;

  const auto j = cafe::scenario_report_json(cafe::run_scenario(spec));
  REQUIRE(j.contains("decisions"));
  const std::size_t total = j["decisions"]["D1"].get<std::size_t>() +
                            j["decisions"]["D2"].get<std::size_t>() +
                            j["decisions"]["D3"].get<std::size_t>();
  CHECK(total == 6);
  CHECK(j["scenario"]["two_stage"]["train_fraction"] == 0.9);
  bool saw_decision = false;
  for (const auto& rep : j["per_replicate"])
    if (rep.contains("decision")) saw_decision = true;
  CHECK(saw_decision);
}

TEST_CASE("per-replicate CSV and qq CSV round numbers through text") {
  ScenarioSpec spec;
  spec.replicates = 5;
  spec.seed = 11;
  spec.threads = 1;
  const auto report = cafe::run_scenario(spec);

  const std::string pv_path = "report_test_pvalues.csv";
  cafe::write_pvalues_csv(pv_path, report);
  const std::string pv = slurp(pv_path);
  CHECK(pv.rfind("replicate,p_cafe,p_cafe_m,reject_cafe,reject_cafe_m,decision,status\n", 0) == 0);
  CHECK(std::count(pv.begin(), pv.end(), '\n') == 6);

  const std::string qq_path = "report_test_qq.csv";
  cafe::write_qq_csv(qq_path, report);
  const std::string qq = slurp(qq_path);
  CHECK(qq.rfind("position,cafe,cafe_m\n", 0) == 0);
  CHECK(std::count(qq.begin(), qq.end(), '\n') == 6);

  std::remove(pv_path.c_str());
  std::remove(qq_path.c_str());
}

TEST_CASE("plain-text rendering names the verdict") {
  const std::string text = cafe::format_test_report(sample_report());
  CHECK(text.find("cafe") != std::string::npos);
  CHECK(text.find("0.3916") != std::string::npos);
  CHECK(text.find("fail to reject") != std::string::npos);
  CHECK(text.find("covariate:x5") != std::string::npos);
  CHECK(text.find("group") != std::string::npos);

  Decision d;
  d.label = DecisionLabel::d3;
  d.stage1 = sample_report();
  d.stage1.reject = true;
  d.stage2 = sample_report();
  d.stage2->reject = true;
  const std::string verdict = cafe::format_decision(d);
  CHECK(verdict.find("D3") != std::string::npos);
  CHECK(verdict.find("stage 1") != std::string::npos);
  CHECK(verdict.find("stage 2") != std::string::npos);

  ScenarioSpec spec;
  spec.replicates = 4;
  spec.seed = 2;
  spec.threads = 1;
  const std::string summary =
      cafe::format_scenario_report(cafe::run_scenario(spec));
  CHECK(summary.find("rejection rate") != std::string::npos);
  CHECK(summary.find("P1") != std::string::npos);
}
