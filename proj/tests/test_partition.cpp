#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "cafe/data_model.hpp"
#include "cafe/error.hpp"
#include "cafe/partition.hpp"

using cafe::DegeneratePartitionError;
using cafe::Partition;
using cafe::PartitionRule;
using cafe::Source;
using cafe::TrialDataset;
using cafe::ValidationError;

TEST_CASE("default group count: frozen values and integer boundaries") {
  CHECK(cafe::default_group_count(40) == 2);
  CHECK(cafe::default_group_count(80) == 3);
  CHECK(cafe::default_group_count(120) == 3);
  CHECK(cafe::default_group_count(1) == 2);   // floor of 2
  CHECK(cafe::default_group_count(10) == 2);
  // exact powers: 128^(2/7) = 4 and 16384^(2/7) = 16, immune to pow() rounding
  CHECK(cafe::default_group_count(128) == 4);
  CHECK(cafe::default_group_count(127) == 3);
  CHECK(cafe::default_group_count(16384) == 16);
  CHECK(cafe::default_group_count(16383) == 15);
}

TEST_CASE("quantile partition: median split of 1..10") {
  std::vector<double> values(10);
  std::iota(values.begin(), values.end(), 1.0);
  const Partition part = cafe::quantile_partition(values, 2);
  CHECK(part.group_count == 2);
  for (int i = 0; i < 5; ++i) CHECK(part.group_of[i] == 1);
  for (int i = 5; i < 10; ++i) CHECK(part.group_of[i] == 2);
  REQUIRE(part.cut_points.size() == 1);
  CHECK(part.cut_points[0] == 5.5);
}

TEST_CASE("quantile partition: constant values are degenerate") {
  const std::vector<double> values(8, 3.0);
  CHECK_THROWS_AS(cafe::quantile_partition(values, 2),
                  DegeneratePartitionError);
}

TEST_CASE("quantile partition: ties at a cut point fall to the lower group") {
  // median of (1,1,2,2) is 1.5; with the repeated value 2 at the cut of
  // (1,2,2,3) the tied units go down
  const std::vector<double> values = {1, 2, 2, 3};
  const Partition part = cafe::quantile_partition(values, 2);
  CHECK(part.group_of == std::vector<int>{1, 1, 1, 2});
}

TEST_CASE("quantile partition: uniform draws split into near-equal quarters") {
  std::mt19937 gen(12345);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> values(1000);
  for (auto& v : values) v = unif(gen);
  const Partition part = cafe::quantile_partition(values, 4);
  std::vector<int> sizes(4, 0);
  for (int g : part.group_of) ++sizes[g - 1];
  for (int s : sizes) {
    CHECK(s >= 230);
    CHECK(s <= 270);
  }
  CHECK(std::accumulate(sizes.begin(), sizes.end(), 0) == 1000);
}

TEST_CASE("quantile partition: preconditions") {
  const std::vector<double> tiny = {1, 2, 3};
  CHECK_THROWS_AS(cafe::quantile_partition(tiny, 2), ValidationError);
  const std::vector<double> bad = {1, 2, std::nan(""), 4};
  CHECK_THROWS_AS(cafe::quantile_partition(bad, 2), ValidationError);
}

TEST_CASE("quantile partition: assignment is monotone in the values") {
  std::mt19937 gen(99);
  std::uniform_real_distribution<double> unif(-3.0, 3.0);
  std::vector<double> values(200);
  for (auto& v : values) v = unif(gen);
  const Partition part = cafe::quantile_partition(values, 5);
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = 0; j < values.size(); ++j)
      if (values[i] <= values[j]) CHECK(part.group_of[i] <= part.group_of[j]);
}

namespace {

TrialDataset two_covariate_dataset(const std::vector<double>& x1,
                                   const std::vector<double>& x2,
                                   std::vector<double> outcome) {
  std::vector<double> cov;
  std::vector<int> treat;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    cov.push_back(x1[i]);
    cov.push_back(x2[i]);
    treat.push_back(static_cast<int>(i % 2));
  }
  return TrialDataset(Source::rct, {"x1", "x2"}, cov, treat,
                      std::move(outcome));
}

}  // namespace

TEST_CASE("build partition: covariate rule takes the named column") {
  const std::vector<double> x1 = {9, 8, 7, 6, 5, 4, 3, 2, 1, 0};
  const std::vector<double> x2 = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto ds = two_covariate_dataset(x1, x2, std::vector<double>(10, 1.0));
  cafe::PredictionSet preds;
  preds.tau_hat.assign(10, 0.0);

  PartitionRule rule;
  rule.variable = PartitionRule::Variable::covariate;
  rule.covariate = "x2";
  rule.groups = 2;
  const Partition part = cafe::build_partition(ds, preds, rule);
  CHECK(part.variable == "covariate:x2");
  for (int i = 0; i < 5; ++i) CHECK(part.group_of[i] == 1);
  for (int i = 5; i < 10; ++i) CHECK(part.group_of[i] == 2);
}

TEST_CASE("build partition: propensity rule requires e_hat") {
  auto ds = two_covariate_dataset({1, 2, 3, 4, 5, 6}, {6, 5, 4, 3, 2, 1},
                                  std::vector<double>(6, 0.0));
  cafe::PredictionSet preds;
  preds.tau_hat.assign(6, 0.0);
  PartitionRule rule;
  rule.variable = PartitionRule::Variable::propensity;
  rule.groups = 2;
  CHECK_THROWS_WITH_AS(cafe::build_partition(ds, preds, rule),
                       doctest::Contains("e_hat"), ValidationError);
}

TEST_CASE("build partition: constant predictions degenerate under cate rule") {
  auto ds = two_covariate_dataset({1, 2, 3, 4, 5, 6}, {6, 5, 4, 3, 2, 1},
                                  std::vector<double>(6, 0.0));
  cafe::PredictionSet preds;
  preds.tau_hat.assign(6, 2.5);
  PartitionRule rule;
  rule.variable = PartitionRule::Variable::cate;
  rule.groups = 2;
  CHECK_THROWS_AS(cafe::build_partition(ds, preds, rule),
                  DegeneratePartitionError);
}

TEST_CASE("build partition: auto group count follows the sample-size rule") {
  std::vector<double> x1(80), x2(80), y(80, 0.0);
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < 80; ++i) {
    x1[i] = unif(gen);
    x2[i] = unif(gen);
  }
  auto ds = two_covariate_dataset(x1, x2, y);
  cafe::PredictionSet preds;
  preds.tau_hat.assign(80, 0.0);
  PartitionRule rule;
  rule.variable = PartitionRule::Variable::covariate;
  rule.covariate = "x1";
  rule.groups = 0;  // auto
  const Partition part = cafe::build_partition(ds, preds, rule);
  CHECK(part.group_count == 3);
  PartitionRule explicit_one = rule;
  explicit_one.groups = 1;
  CHECK_THROWS_AS(cafe::build_partition(ds, preds, explicit_one),
                  ValidationError);
}

TEST_CASE("build partition: never reads outcomes") {
  std::vector<double> x1(40), x2(40), y(40);
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < 40; ++i) {
    x1[i] = unif(gen);
    x2[i] = unif(gen);
    y[i] = unif(gen);
  }
  auto ds = two_covariate_dataset(x1, x2, y);
  std::vector<double> y_perm = y;
  std::shuffle(y_perm.begin(), y_perm.end(), gen);
  auto ds_perm = two_covariate_dataset(x1, x2, y_perm);

  cafe::PredictionSet preds;
  preds.tau_hat = x2;
  PartitionRule rule;
  rule.variable = PartitionRule::Variable::cate;
  rule.groups = 3;
  const Partition a = cafe::build_partition(ds, preds, rule);
  const Partition b = cafe::build_partition(ds_perm, preds, rule);
  CHECK(a.group_of == b.group_of);
  CHECK(a.cut_points == b.cut_points);
}

TEST_CASE("partition rule parsing") {
  const auto a = cafe::parse_partition_variable("propensity");
  CHECK(a.variable == PartitionRule::Variable::propensity);
  const auto b = cafe::parse_partition_variable("cate");
  CHECK(b.variable == PartitionRule::Variable::cate);
  const auto c = cafe::parse_partition_variable("covariate:x5");
  CHECK(c.variable == PartitionRule::Variable::covariate);
  CHECK(c.covariate == "x5");
  CHECK_THROWS_AS(cafe::parse_partition_variable("covariate:"),
                  ValidationError);
  CHECK_THROWS_AS(cafe::parse_partition_variable("magic"), ValidationError);
}

TEST_CASE("partition members enumerate each group in row order") {
  std::vector<double> values(12);
  std::iota(values.begin(), values.end(), 0.0);
  std::shuffle(values.begin(), values.end(), std::mt19937(3));
  const Partition part = cafe::quantile_partition(values, 3);
  std::size_t total = 0;
  for (int k = 1; k <= part.group_count; ++k) {
    const auto members = part.members(k);
    total += members.size();
    for (std::size_t idx : members) CHECK(part.group_of[idx] == k);
    CHECK(std::is_sorted(members.begin(), members.end()));
  }
  CHECK(total == values.size());
}
