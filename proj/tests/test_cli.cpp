#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  REQUIRE(out.good());
  out << content;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int run_cli(const std::string& args, const std::string& stdout_path = "/dev/null",
            const std::string& stderr_path = "/dev/null") {
  const std::string cmd = std::string(CAFE_CLI_PATH) + " " + args + " > " +
                          stdout_path + " 2> " + stderr_path;
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WEXITSTATUS(rc);
}

// two groups whose difference-in-means effects (1.0 and 2.0) are matched by
// the prediction column exactly
const char* kRctExact =
    "x,a,y\n"
    "1,1,2\n1,1,2.5\n1,0,1\n1,0,1.5\n"
    "3,1,5\n3,1,6\n3,0,3\n3,0,4\n";
const char* kPredsExact = "tau_hat\n1\n1\n1\n1\n2\n2\n2\n2\n";

// three groups, each with effect 1.0 and plug-in sd sqrt(0.125); predictions
// sit three standard errors below, so every group lands at z = 3
const char* kRctShifted =
    "x,a,y\n"
    "1,1,2\n1,1,2.5\n1,0,1\n1,0,1.5\n"
    "3,1,2\n3,1,2.5\n3,0,1\n3,0,1.5\n"
    "5,1,2\n5,1,2.5\n5,0,1\n5,0,1.5\n";
const char* kPredsShifted =
    "tau_hat\n-0.0606601717798212\n-0.0606601717798212\n-0.0606601717798212\n"
    "-0.0606601717798212\n-0.0606601717798212\n-0.0606601717798212\n"
    "-0.0606601717798212\n-0.0606601717798212\n-0.0606601717798212\n"
    "-0.0606601717798212\n-0.0606601717798212\n-0.0606601717798212\n";

}  // namespace

TEST_CASE("test: exact-fit predictions pass with p = 1 and exit 0") {
  write_file("cli_rct_ok.csv", kRctExact);
  write_file("cli_preds_ok.csv", kPredsExact);
  const int rc = run_cli(
      "test --rct cli_rct_ok.csv --predictions cli_preds_ok.csv "
      "--partition-by covariate:x --groups 2 --out cli_ok.json",
      "cli_ok_stdout.txt");
  CHECK(rc == 0);

  const auto j = nlohmann::ordered_json::parse(slurp("cli_ok.json"));
  CHECK(j["cafe"]["p_value"] == 1.0);
  CHECK(j["cafe"]["reject"] == false);
  CHECK(j["cafe-m"]["reject"] == false);
  const std::string text = slurp("cli_ok_stdout.txt");
  CHECK(text.find("fail to reject") != std::string::npos);
}

TEST_CASE("test: occupancy failure names the group and exits 1") {
  write_file("cli_rct_occ.csv",
             "x,a,y\n"
             "1,1,2\n1,1,2.5\n1,0,1\n1,0,1.5\n"
             "3,1,5\n3,0,3\n3,0,4\n3,0,6\n");
  write_file("cli_preds_occ.csv", "tau_hat\n1\n1\n1\n1\n2\n2\n2\n2\n");
  const int rc = run_cli(
      "test --rct cli_rct_occ.csv --predictions cli_preds_occ.csv "
      "--partition-by covariate:x --groups 2",
      "/dev/null", "cli_occ_err.txt");
  CHECK(rc == 1);
  const std::string err = slurp("cli_occ_err.txt");
  CHECK(err.find("group 2") != std::string::npos);
}

TEST_CASE("test: three groups at z = 3 reject and exit 2") {
  write_file("cli_rct_z3.csv", kRctShifted);
  write_file("cli_preds_z3.csv", kPredsShifted);
  const int rc = run_cli(
      "test --rct cli_rct_z3.csv --predictions cli_preds_z3.csv "
      "--partition-by covariate:x --groups 3 --stat cafe --out cli_z3.json");
  CHECK(rc == 2);
  const auto j = nlohmann::ordered_json::parse(slurp("cli_z3.json"));
  CHECK(j["cafe"]["value"] == doctest::Approx(27.0).epsilon(1e-9));
  CHECK(j["cafe"]["reject"] == true);
}

TEST_CASE("test: unreadable input exits 1") {
  CHECK(run_cli("test --rct missing.csv --predictions also_missing.csv") == 1);
}

TEST_CASE("diagnose: accepted fit is D1 with exit 10") {
  write_file("cli_rct_ok.csv", kRctExact);
  write_file("cli_preds_ok.csv", kPredsExact);
  const int rc = run_cli(
      "diagnose --rct cli_rct_ok.csv --predictions cli_preds_ok.csv "
      "--partition-by covariate:x --groups 2 --out cli_d1.json",
      "cli_d1_stdout.txt");
  CHECK(rc == 10);
  const auto j = nlohmann::ordered_json::parse(slurp("cli_d1.json"));
  CHECK(j["decision"] == "D1");
  CHECK(j["stage2"].is_null());
}

TEST_CASE("diagnose: rejection with a tracking held-out set is D2, exit 11") {
  write_file("cli_rct_z3.csv", kRctShifted);
  write_file("cli_preds_z3.csv", kPredsShifted);
  // held-out rows: same per-group effect 1.0, predictions equal to it
  write_file("cli_os_track.csv", kRctShifted);
  write_file("cli_os_preds_track.csv",
             "tau_hat\n1\n1\n1\n1\n1\n1\n1\n1\n1\n1\n1\n1\n");
  const int rc = run_cli(
      "diagnose --rct cli_rct_z3.csv --predictions cli_preds_z3.csv "
      "--os-test cli_os_track.csv --os-predictions cli_os_preds_track.csv "
      "--partition-by covariate:x --groups 3 --out cli_d2.json",
      "cli_d2_stdout.txt");
  CHECK(rc == 11);
  const auto j = nlohmann::ordered_json::parse(slurp("cli_d2.json"));
  CHECK(j["decision"] == "D2");
  CHECK(j["stage1"]["reject"] == true);
  CHECK(j["stage2"]["reject"] == false);
  CHECK(slurp("cli_d2_stdout.txt").find("confounding") != std::string::npos);
}

TEST_CASE("diagnose: rejection on both samples is D3, exit 12") {
  write_file("cli_rct_z3.csv", kRctShifted);
  write_file("cli_preds_z3.csv", kPredsShifted);
  write_file("cli_os_off.csv", kRctShifted);
  write_file("cli_os_preds_off.csv",
             "tau_hat\n2.0606601717798212\n2.0606601717798212\n"
             "2.0606601717798212\n2.0606601717798212\n2.0606601717798212\n"
             "2.0606601717798212\n2.0606601717798212\n2.0606601717798212\n"
             "2.0606601717798212\n2.0606601717798212\n2.0606601717798212\n"
             "2.0606601717798212\n");
  const int rc = run_cli(
      "diagnose --rct cli_rct_z3.csv --predictions cli_preds_z3.csv "
      "--os-test cli_os_off.csv --os-predictions cli_os_preds_off.csv "
      "--partition-by covariate:x --groups 3 --out cli_d3.json");
  CHECK(rc == 12);
  const auto j = nlohmann::ordered_json::parse(slurp("cli_d3.json"));
  CHECK(j["decision"] == "D3");
  CHECK(j["stage2"]["reject"] == true);
}

TEST_CASE("diagnose: rejection without a held-out set exits 1") {
  write_file("cli_rct_z3.csv", kRctShifted);
  write_file("cli_preds_z3.csv", kPredsShifted);
  const int rc = run_cli(
      "diagnose --rct cli_rct_z3.csv --predictions cli_preds_z3.csv "
      "--partition-by covariate:x --groups 3",
      "/dev/null", "cli_noos_err.txt");
  CHECK(rc == 1);
  CHECK(slurp("cli_noos_err.txt").find("attribution unavailable") !=
        std::string::npos);
}

TEST_CASE("simulate: scenario runs, reports, and reruns byte-identically") {
  write_file("cli_scenario.toml",
             "setting = \"P1\"\n"
             "m = 80\n"
             "n = 40\n"
             "learner = \"t\"\n"
             "variant = \"correct\"\n"
             "partition = \"propensity\"\n"
             "replicates = 8\n"
             "seed = 5\n"
             "threads = 2\n");
  CHECK(run_cli("simulate --config cli_scenario.toml --out cli_sim1.json "
                "--pvalues-csv cli_sim1.csv") == 0);
  CHECK(run_cli("simulate --config cli_scenario.toml --out cli_sim2.json "
                "--threads 1") == 0);
  const std::string a = slurp("cli_sim1.json");
  const std::string b = slurp("cli_sim2.json");
  REQUIRE(!a.empty());
  CHECK(a == b);
  CHECK(slurp("cli_sim1.csv").rfind("replicate,", 0) == 0);

  const auto j = nlohmann::ordered_json::parse(a);
  CHECK(j["replicates"] == 8);
  CHECK(j["scenario"]["seed"] == 5);
}

TEST_CASE("simulate: invalid scenarios exit 1") {
  write_file("cli_bad_reps.toml", "replicates = 0\n");
  CHECK(run_cli("simulate --config cli_bad_reps.toml") == 1);
  write_file("cli_bad_setting.toml", "setting = \"P9\"\n");
  CHECK(run_cli("simulate --config cli_bad_setting.toml") == 1);
  CHECK(run_cli("simulate --config cli_nonexistent.toml") == 1);
}

TEST_CASE("help and usage errors") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("test --help") == 0);
  CHECK(run_cli("") == 1);                  // missing subcommand
  CHECK(run_cli("test --rct only.csv") == 1);  // missing required flag
}
