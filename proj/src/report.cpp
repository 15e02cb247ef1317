#include "cafe/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "cafe/error.hpp"

namespace cafe {

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string full(double v) { return fmt("%.17g", v); }

nlohmann::ordered_json reference_json(const TestReport& report) {
  nlohmann::ordered_json ref;
  if (report.statistic == Statistic::cafe) {
    ref["law"] = "chi-squared";
    ref["dof"] = report.group_count;
  } else {
    ref["law"] = "gumbel";
    ref["location"] = report.gumbel_location;
    ref["scale"] = report.gumbel_scale;
  }
  return ref;
}

nlohmann::ordered_json partition_rule_json(const PartitionRule& rule) {
  nlohmann::ordered_json j;
  std::string variable;
  switch (rule.variable) {
    case PartitionRule::Variable::propensity: variable = "propensity"; break;
    case PartitionRule::Variable::cate: variable = "cate"; break;
    case PartitionRule::Variable::covariate:
      variable = "covariate:" + rule.covariate;
      break;
  }
  j["variable"] = variable;
  j["groups"] = rule.groups == 0 ? "auto" : std::to_string(rule.groups);
  return j;
}

nlohmann::ordered_json scenario_spec_json(const ScenarioSpec& spec) {
  nlohmann::ordered_json j;
  j["setting"] = to_string(spec.setting);
  j["variant"] = to_string(spec.variant);
  j["learner"] = to_string(spec.learner);
  j["m"] = spec.m;
  j["n"] = spec.n;
  j["partition"] = partition_rule_json(spec.partition);
  j["alpha"] = spec.alpha;
  j["replicates"] = spec.replicates;
  j["seed"] = spec.seed;
  if (spec.two_stage) {
    nlohmann::ordered_json two;
    two["train_fraction"] = spec.two_stage->train_fraction;
    two["stage1_stat"] = to_string(spec.two_stage->stage1_statistic);
    if (spec.two_stage->stage2_statistic)
      two["stage2_stat"] = to_string(*spec.two_stage->stage2_statistic);
    else
      two["stage2_stat"] = nullptr;
    if (spec.two_stage->stage2_partition)
      two["stage2_partition"] =
          partition_rule_json(*spec.two_stage->stage2_partition);
    else
      two["stage2_partition"] = nullptr;
    j["two_stage"] = two;
  } else {
    j["two_stage"] = nullptr;
  }
  return j;
}

}  // namespace

double reported_probability(num::Probability p) {
  return std::max(p.value(), 1e-300);
}

nlohmann::ordered_json test_report_json(const TestReport& report) {
  nlohmann::ordered_json j;
  j["statistic"] = to_string(report.statistic);
  j["value"] = report.value;
  j["groups"] = report.group_count;
  j["reference"] = reference_json(report);
  j["p_value"] = reported_probability(report.p_value);
  j["alpha"] = report.alpha.value();
  j["reject"] = report.reject;
  nlohmann::ordered_json partition;
  partition["variable"] = report.partition_variable;
  partition["cut_points"] = report.cut_points;
  j["partition"] = partition;
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (const GroupSummary& g : report.groups) {
    nlohmann::ordered_json row;
    row["group"] = g.group;
    row["n"] = g.n;
    row["n_treated"] = g.n_treated;
    row["n_control"] = g.n_control;
    row["dim_effect"] = g.dim_effect;
    row["prediction_mean"] = g.prediction_mean;
    row["variance"] = g.variance;
    row["z"] = g.z;
    table.push_back(row);
  }
  j["group_table"] = table;
  return j;
}

nlohmann::ordered_json decision_json(const Decision& decision) {
  nlohmann::ordered_json j;
  j["decision"] = to_string(decision.label);
  j["stage1"] = test_report_json(decision.stage1);
  if (decision.stage2)
    j["stage2"] = test_report_json(*decision.stage2);
  else
    j["stage2"] = nullptr;
  return j;
}

nlohmann::ordered_json scenario_report_json(const ScenarioReport& report) {
  nlohmann::ordered_json j;
  j["scenario"] = scenario_spec_json(report.spec);
  j["replicates"] = report.replicates.size();
  j["failures"] = report.failed_indices;
  nlohmann::ordered_json rates;
  rates["cafe"] = report.rejection_rate_cafe;
  rates["cafe-m"] = report.rejection_rate_cafe_m;
  j["rejection_rate"] = rates;
  nlohmann::ordered_json ks;
  ks["cafe"] = report.qq_cafe.ks;
  ks["cafe-m"] = report.qq_cafe_m.ks;
  j["ks_distance"] = ks;
  if (report.spec.two_stage) {
    nlohmann::ordered_json decisions;
    decisions["D1"] = report.decision_counts[0];
    decisions["D2"] = report.decision_counts[1];
    decisions["D3"] = report.decision_counts[2];
    j["decisions"] = decisions;
  }
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const ReplicateOutcome& rep : report.replicates) {
    nlohmann::ordered_json row;
    row["index"] = rep.index;
    if (rep.failed) {
      row["error"] = rep.failure;
    } else {
      row["p_cafe"] = rep.p_cafe;
      row["p_cafe_m"] = rep.p_cafe_m;
      row["reject_cafe"] = rep.reject_cafe;
      row["reject_cafe_m"] = rep.reject_cafe_m;
      if (rep.decision) {
        row["decision"] = to_string(*rep.decision);
        row["stage1_p"] = rep.stage1_p;
        if (rep.stage2_ran) row["stage2_p"] = rep.stage2_p;
      }
    }
    rows.push_back(row);
  }
  j["per_replicate"] = rows;
  return j;
}

std::string format_test_report(const TestReport& report) {
  std::string out;
  out += "statistic   " + std::string(to_string(report.statistic)) + "\n";
  out += "value       " + fmt("%.6g", report.value) + "\n";
  out += "groups      " + std::to_string(report.group_count) + "\n";
  if (report.statistic == Statistic::cafe_m) {
    out += "reference   gumbel(location " + fmt("%.6g", report.gumbel_location) +
           ", scale " + fmt("%.6g", report.gumbel_scale) + ")\n";
  } else {
    out += "reference   chi-squared(" + std::to_string(report.group_count) +
           ")\n";
  }
  out += "p-value     " + fmt("%.6g", reported_probability(report.p_value)) +
         "\n";
  out += "alpha       " + fmt("%.6g", report.alpha.value()) + "\n";
  out += std::string("verdict     ") +
         (report.reject ? "reject" : "fail to reject") + "\n";
  if (!report.partition_variable.empty()) {
    out += "partition   " + report.partition_variable;
    if (!report.cut_points.empty()) {
      out += "  (cuts:";
      for (double c : report.cut_points) out += " " + fmt("%.6g", c);
      out += ")";
    }
    out += "\n";
  }
  out += "\n";
  char row[160];
  std::snprintf(row, sizeof row, "%5s %5s %8s %8s %10s %10s %10s %9s\n",
                "group", "n", "treated", "control", "effect", "predicted",
                "variance", "z");
  out += row;
  for (const GroupSummary& g : report.groups) {
    std::snprintf(row, sizeof row,
                  "%5d %5zu %8zu %8zu %10.4f %10.4f %10.4f %9.4f\n", g.group,
                  g.n, g.n_treated, g.n_control, g.dim_effect,
                  g.prediction_mean, g.variance, g.z);
    out += row;
  }
  return out;
}

std::string format_decision(const Decision& decision) {
  std::string out;
  out += "stage 1 (trial vs predictions): p = " +
         fmt("%.6g", reported_probability(decision.stage1.p_value)) +
         (decision.stage1.reject ? " -> reject\n" : " -> fit holds\n");
  if (decision.stage2) {
    out += "stage 2 (held-out check):       p = " +
           fmt("%.6g", reported_probability(decision.stage2->p_value)) +
           (decision.stage2->reject ? " -> reject\n" : " -> fit holds\n");
  }
  switch (decision.label) {
    case DecisionLabel::d1:
      out += "decision D1: no lack of fit detected\n";
      break;
    case DecisionLabel::d2:
      out +=
          "decision D2: predictions track the observational contrast; the "
          "gap points at unobserved confounding\n";
      break;
    case DecisionLabel::d3:
      out +=
          "decision D3: predictions miss the observational contrast too; "
          "the model itself looks misspecified\n";
      break;
  }
  return out;
}

std::string format_scenario_report(const ScenarioReport& report) {
  const ScenarioSpec& spec = report.spec;
  std::string out;
  out += "setting " + to_string(spec.setting) + " (" + to_string(spec.variant) +
         "), learner " + to_string(spec.learner) + ", m=" +
         std::to_string(spec.m) + " n=" + std::to_string(spec.n) + "\n";
  out += "replicates " + std::to_string(report.replicates.size()) + " (" +
         std::to_string(report.failed_indices.size()) + " failed), alpha " +
         fmt("%.6g", spec.alpha) + "\n";
  out += "rejection rate   cafe " + fmt("%.4f", report.rejection_rate_cafe) +
         "   cafe-m " + fmt("%.4f", report.rejection_rate_cafe_m) + "\n";
  out += "KS distance      cafe " + fmt("%.4f", report.qq_cafe.ks) +
         "   cafe-m " + fmt("%.4f", report.qq_cafe_m.ks) + "\n";
  if (spec.two_stage) {
    out += "decisions        D1 " + std::to_string(report.decision_counts[0]) +
           "  D2 " + std::to_string(report.decision_counts[1]) + "  D3 " +
           std::to_string(report.decision_counts[2]) + "\n";
  }
  return out;
}

void write_json_file(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  out << j.dump(2) << "\n";
}

void write_pvalues_csv(const std::string& path, const ScenarioReport& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  out << "replicate,p_cafe,p_cafe_m,reject_cafe,reject_cafe_m,decision,status\n";
  for (const ReplicateOutcome& rep : report.replicates) {
    out << rep.index << ",";
    if (rep.failed) {
      out << ",,,,,failed\n";
      continue;
    }
    out << full(rep.p_cafe) << "," << full(rep.p_cafe_m) << ","
        << (rep.reject_cafe ? 1 : 0) << "," << (rep.reject_cafe_m ? 1 : 0)
        << "," << (rep.decision ? to_string(*rep.decision) : "") << ",ok\n";
  }
}

void write_qq_csv(const std::string& path, const ScenarioReport& report) {
  if (report.qq_cafe.points.size() != report.qq_cafe_m.points.size())
    throw Error("qq tables disagree in length");
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  out << "position,cafe,cafe_m\n";
  for (std::size_t i = 0; i < report.qq_cafe.points.size(); ++i) {
    out << full(report.qq_cafe.points[i][0]) << ","
        << full(report.qq_cafe.points[i][1]) << ","
        << full(report.qq_cafe_m.points[i][1]) << "\n";
  }
}

}  // namespace cafe
