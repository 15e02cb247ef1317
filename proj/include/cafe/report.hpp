#pragma once

#include <string>

#include "json.hpp"

#include "cafe/engine.hpp"
#include "cafe/sim.hpp"

namespace cafe {

// Smallest probability the reports print. Values below it (including exact
// zeros from extreme statistics) are floored so JSON consumers never see a
// denormal-or-zero p-value.
double reported_probability(num::Probability p);

nlohmann::ordered_json test_report_json(const TestReport& report);
nlohmann::ordered_json decision_json(const Decision& decision);
nlohmann::ordered_json scenario_report_json(const ScenarioReport& report);

std::string format_test_report(const TestReport& report);
std::string format_decision(const Decision& decision);
std::string format_scenario_report(const ScenarioReport& report);

void write_json_file(const std::string& path, const nlohmann::ordered_json& j);
void write_pvalues_csv(const std::string& path, const ScenarioReport& report);
void write_qq_csv(const std::string& path, const ScenarioReport& report);

}  // namespace cafe
