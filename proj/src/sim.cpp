#include "cafe/sim.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "cafe/error.hpp"
#include "cafe/rng.hpp"

namespace cafe {

namespace {

// Stream keys for the per-replicate generators.
enum : std::uint64_t {
  kStreamOs = 1,
  kStreamRct = 2,
  kStreamSplit = 3,
  kStreamLearner = 4,
};

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

struct SettingRecipe {
  std::vector<std::string> names;
  double noise_sd = 1.0;
};

SettingRecipe recipe_for(SettingId setting) {
  switch (setting) {
    case SettingId::p1:
      return {{"x1", "x2", "x3", "x4", "x5"}, 2.0};
    case SettingId::p2:
      return {{"x1", "x2"}, 1.0};
    case SettingId::p3:
      return {{"x1", "x2", "x3", "x4", "x5"}, 1.0};
  }
  throw ValidationError("unknown setting");
}

void draw_covariates(SettingId setting, RngStream& g, std::vector<double>& x) {
  switch (setting) {
    case SettingId::p1:
      for (double& v : x) v = g.uniform(0.0, 5.0);
      return;
    case SettingId::p2:
      for (double& v : x) v = g.uniform(0.0, 3.0);
      return;
    case SettingId::p3:
      for (double& v : x) v = g.normal(0.0, std::sqrt(2.0));
      return;
  }
}

double baseline_mean(SettingId setting, const std::vector<double>& x) {
  switch (setting) {
    case SettingId::p1:
      return x[0] - x[1] + 0.5 * x[2] + x[4];
    case SettingId::p2:
      return x[1];
    case SettingId::p3:
      return x[0] - x[1] + 0.5 * x[2] + 0.6 * x[3] + x[4];
  }
  return 0.0;
}

double true_effect(SettingId setting, const std::vector<double>& x) {
  switch (setting) {
    case SettingId::p1:
      return 0.5 * x[0] + 0.5 * x[1] - 0.5 * x[3] + x[4];
    case SettingId::p2:
      return 3.0 * x[0] - 2.0 * x[1] + 0.5 * x[0] * x[1];
    case SettingId::p3:
      return 0.3 * x[0] + 0.2 * x[1] - 0.4 * x[2] + 0.2 * x[3] - 0.5 * x[4] +
             x[0] * x[0];
  }
  return 0.0;
}

double study_propensity(SettingId setting, const std::vector<double>& x) {
  switch (setting) {
    case SettingId::p1:
    case SettingId::p3:
      return sigmoid(0.5 * x[0] - 0.3 * x[1] + 0.2 * x[2] + 0.1 * x[3] -
                     0.1 * x[4]);
    case SettingId::p2:
      return sigmoid(0.5 * x[0] - 0.3 * x[1]);
  }
  return 0.5;
}

TrialDataset draw_sample(SettingId setting, Source source, std::size_t rows,
                         RngStream& g) {
  const SettingRecipe recipe = recipe_for(setting);
  const std::size_t dim = recipe.names.size();
  std::vector<double> covariates;
  covariates.reserve(rows * dim);
  std::vector<int> treatment(rows);
  std::vector<double> outcome(rows);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < rows; ++i) {
    draw_covariates(setting, g, x);
    covariates.insert(covariates.end(), x.begin(), x.end());
    const double p =
        source == Source::rct ? 0.5 : study_propensity(setting, x);
    const int a = g.bernoulli(p);
    const double eps = g.normal(0.0, recipe.noise_sd);
    treatment[i] = a;
    outcome[i] = baseline_mean(setting, x) +
                 (a == 1 ? true_effect(setting, x) : 0.0) + eps;
  }
  return TrialDataset(source, recipe.names, std::move(covariates),
                      std::move(treatment), std::move(outcome));
}

FeatureMap raw_map(std::size_t dim, bool drop_last) {
  std::vector<std::string> spec;
  for (std::size_t j = 0; j + (drop_last ? 1 : 0) < dim; ++j)
    spec.push_back("x" + std::to_string(j + 1));
  return FeatureMap::parse(spec);
}

// Splits 0..n-1 into a sorted train/test pair, deterministically per stream.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(
    std::size_t n, double train_fraction, RngStream& g) {
  const auto perm = g.shuffled_indices(n);
  std::size_t train_count =
      std::size_t(std::llround(train_fraction * double(n)));
  train_count = std::clamp<std::size_t>(train_count, 1, n - 1);
  std::vector<std::size_t> train(perm.begin(), perm.begin() + train_count);
  std::vector<std::size_t> test(perm.begin() + train_count, perm.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

CateModel fit_cate(const TrialDataset& train, const FeatureMap& features,
                   LearnerKind kind, RngStream& learner_stream) {
  switch (kind) {
    case LearnerKind::t_learner:
      return fit_t_learner(train, features);
    case LearnerKind::s_learner:
      return fit_s_learner(train, features);
    case LearnerKind::r_learner: {
      RLearnerOptions options;
      options.seed = learner_stream.next_u64();
      return fit_r_learner(train, features, options).model;
    }
  }
  throw ValidationError("unknown learner kind");
}

void stamp_partition(TestReport& report, const Partition& part) {
  report.partition_variable = part.variable;
  report.cut_points = part.cut_points;
}

ReplicateOutcome run_one(const ScenarioSpec& spec, std::size_t index) {
  ReplicateOutcome out;
  out.index = index;

  const GeneratedData gen = generate_setting(spec, index);
  RngStream split_stream(spec.seed, index, kStreamSplit);
  RngStream learner_stream(spec.seed, index, kStreamLearner);

  TrialDataset train = gen.os;
  std::optional<TrialDataset> held_out;
  if (spec.two_stage) {
    const auto [train_rows, test_rows] =
        split_rows(gen.os.size(), spec.two_stage->train_fraction, split_stream);
    train = gen.os.subset(train_rows);
    held_out = gen.os.subset(test_rows);
  }

  const FeatureMap cate_map = cate_features(spec.setting, spec.variant);
  const FeatureMap prop_map = propensity_features(spec.setting, spec.variant);
  const CateModel model = fit_cate(train, cate_map, spec.learner, learner_stream);
  const PropensityModel propensity = fit_logistic_propensity(train, prop_map);

  PredictionSet rct_preds;
  rct_preds.tau_hat = model.predict_all(gen.rct);
  rct_preds.e_hat = propensity.predict_all(gen.rct);
  const Partition part = build_partition(gen.rct, rct_preds, spec.partition);
  const auto summaries = group_summaries(gen.rct, rct_preds, part);

  const num::Probability alpha(spec.alpha);
  TestReport cafe_report = cafe_test(summaries, alpha);
  TestReport cafe_m_report = cafe_m_test(summaries, alpha);
  stamp_partition(cafe_report, part);
  stamp_partition(cafe_m_report, part);

  out.p_cafe = cafe_report.p_value.value();
  out.p_cafe_m = cafe_m_report.p_value.value();
  out.reject_cafe = cafe_report.reject;
  out.reject_cafe_m = cafe_m_report.reject;

  if (spec.two_stage) {
    const TestReport& stage1 =
        spec.two_stage->stage1_statistic == Statistic::cafe ? cafe_report
                                                            : cafe_m_report;
    out.stage1_p = stage1.p_value.value();

    std::optional<StageTwoData> follow_up;
    if (stage1.reject) {
      PredictionSet os_preds;
      os_preds.tau_hat = model.predict_all(*held_out);
      os_preds.e_hat = propensity.predict_all(*held_out);
      PartitionRule rule2 = spec.two_stage->stage2_partition.value_or(spec.partition);
      if (rule2.groups == 0) rule2.groups = part.group_count;
      Partition part2 = build_partition(*held_out, os_preds, rule2);
      follow_up = StageTwoData{*held_out, std::move(os_preds), std::move(part2)};
    }
    const Decision decision = two_stage_diagnose(
        stage1, follow_up, alpha, spec.two_stage->stage2_statistic);
    out.decision = decision.label;
    if (decision.stage2) {
      out.stage2_ran = true;
      out.stage2_p = decision.stage2->p_value.value();
    }
  }
  return out;
}

std::uint64_t want_u64(const std::string& raw, const std::string& key,
                       const std::string& name) {
  std::uint64_t value = 0;
  const auto [ptr, ec] =
      std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc{} || ptr != raw.data() + raw.size())
    throw ValidationError(name + ": key '" + key +
                          "' needs a non-negative integer, got '" + raw + "'");
  return value;
}

double want_double(const std::string& raw, const std::string& key,
                   const std::string& name) {
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc{} || ptr != raw.data() + raw.size())
    throw ValidationError(name + ": key '" + key + "' needs a number, got '" +
                          raw + "'");
  return value;
}

bool want_bool(const std::string& raw, const std::string& key,
               const std::string& name) {
  if (raw == "true") return true;
  if (raw == "false") return false;
  throw ValidationError(name + ": key '" + key +
                        "' needs true or false, got '" + raw + "'");
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string to_string(SettingId setting) {
  switch (setting) {
    case SettingId::p1: return "P1";
    case SettingId::p2: return "P2";
    case SettingId::p3: return "P3";
  }
  return "?";
}

std::string to_string(SpecVariant variant) {
  return variant == SpecVariant::correct ? "correct" : "misspecified";
}

std::string to_string(LearnerKind learner) {
  switch (learner) {
    case LearnerKind::t_learner: return "t";
    case LearnerKind::s_learner: return "s";
    case LearnerKind::r_learner: return "r";
  }
  return "?";
}

SettingId parse_setting(const std::string& text) {
  if (text == "P1" || text == "p1") return SettingId::p1;
  if (text == "P2" || text == "p2") return SettingId::p2;
  if (text == "P3" || text == "p3") return SettingId::p3;
  throw ValidationError("unknown setting '" + text +
                        "' (expected P1, P2 or P3)");
}

SpecVariant parse_variant(const std::string& text) {
  if (text == "correct") return SpecVariant::correct;
  if (text == "misspecified") return SpecVariant::misspecified;
  throw ValidationError("unknown variant '" + text +
                        "' (expected correct or misspecified)");
}

LearnerKind parse_learner(const std::string& text) {
  if (text == "t") return LearnerKind::t_learner;
  if (text == "s") return LearnerKind::s_learner;
  if (text == "r") return LearnerKind::r_learner;
  throw ValidationError("unknown learner '" + text + "' (expected t, s or r)");
}

void validate(const ScenarioSpec& spec) {
  if (spec.m < 1) throw ValidationError("scenario: m must be >= 1");
  if (spec.n < 1) throw ValidationError("scenario: n must be >= 1");
  if (spec.replicates < 1)
    throw ValidationError("scenario: replicates must be >= 1");
  if (!(spec.alpha > 0.0 && spec.alpha < 1.0))
    throw ValidationError("scenario: alpha must lie inside (0, 1)");
  if (spec.partition.groups < 0)
    throw ValidationError("scenario: groups must be >= 0");
  if (spec.partition.variable == PartitionRule::Variable::covariate &&
      spec.partition.covariate.empty())
    throw ValidationError("scenario: covariate partition needs a name");
  if (spec.two_stage) {
    const double f = spec.two_stage->train_fraction;
    if (!(f > 0.0 && f < 1.0))
      throw ValidationError("scenario: train_fraction must lie inside (0, 1)");
  }
}

GeneratedData generate_setting(const ScenarioSpec& spec,
                               std::size_t replicate_index) {
  validate(spec);
  RngStream os_stream(spec.seed, replicate_index, kStreamOs);
  RngStream rct_stream(spec.seed, replicate_index, kStreamRct);
  GeneratedData out{
      draw_sample(spec.setting, Source::observational, spec.m, os_stream),
      draw_sample(spec.setting, Source::rct, spec.n, rct_stream),
      {}};
  const SettingId setting = spec.setting;
  out.truth = [setting](const std::vector<double>& x) {
    return true_effect(setting, x);
  };
  return out;
}

FeatureMap cate_features(SettingId setting, SpecVariant variant) {
  const bool omit = variant == SpecVariant::misspecified;
  switch (setting) {
    case SettingId::p1:
      return raw_map(5, omit);
    case SettingId::p2: {
      std::vector<std::string> spec = {"x1", "x2"};
      if (!omit) spec.push_back("interaction:x1*x2");
      return FeatureMap::parse(spec);
    }
    case SettingId::p3: {
      std::vector<std::string> spec = {"x1", "x2", "x3", "x4", "x5"};
      if (!omit) spec.push_back("square:x1");
      return FeatureMap::parse(spec);
    }
  }
  throw ValidationError("unknown setting");
}

FeatureMap propensity_features(SettingId setting, SpecVariant variant) {
  switch (setting) {
    case SettingId::p1:
      // the hidden-covariate variant hides x5 from the propensity model too
      return raw_map(5, variant == SpecVariant::misspecified);
    case SettingId::p2:
      return raw_map(2, false);
    case SettingId::p3:
      return raw_map(5, false);
  }
  throw ValidationError("unknown setting");
}

QqData qq_points(const std::vector<double>& p_values) {
  if (p_values.empty())
    throw ValidationError("qq_points: need at least one p-value");
  std::vector<double> sorted = p_values;
  std::sort(sorted.begin(), sorted.end());
  QqData out;
  out.points.reserve(sorted.size());
  const double r = double(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double position = (double(i) + 0.5) / r;
    out.points.push_back({position, sorted[i]});
    out.ks = std::max(out.ks, std::fabs(sorted[i] - position));
  }
  return out;
}

ScenarioReport run_scenario(const ScenarioSpec& spec,
                            const ProgressFn& progress) {
  validate(spec);
  const std::size_t total = spec.replicates;
  std::vector<ReplicateOutcome> slots(total);

  unsigned threads = spec.threads;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = unsigned(std::min<std::size_t>(threads, total));

  std::atomic<std::size_t> cursor{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t index = cursor.fetch_add(1);
      if (index >= total) return;
      try {
        slots[index] = run_one(spec, index);
      } catch (const std::exception& e) {
        slots[index].index = index;
        slots[index].failed = true;
        slots[index].failure = e.what();
      }
      const std::size_t completed = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(completed, total);
      }
    }
  };

  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ScenarioReport report;
  report.spec = spec;
  report.replicates = std::move(slots);

  std::vector<double> p_cafe, p_cafe_m;
  std::size_t successes = 0, reject_cafe = 0, reject_cafe_m = 0;
  for (const ReplicateOutcome& rep : report.replicates) {
    if (rep.failed) {
      report.failed_indices.push_back(rep.index);
      continue;
    }
    ++successes;
    reject_cafe += rep.reject_cafe ? 1 : 0;
    reject_cafe_m += rep.reject_cafe_m ? 1 : 0;
    p_cafe.push_back(rep.p_cafe);
    p_cafe_m.push_back(rep.p_cafe_m);
    if (rep.decision) ++report.decision_counts[std::size_t(*rep.decision)];
  }

  const std::size_t failures = report.failed_indices.size();
  if (failures * 20 > total) {
    const auto& first = report.replicates[report.failed_indices.front()];
    throw Error("scenario aborted: " + std::to_string(failures) + " of " +
                std::to_string(total) +
                " replicates failed; first failure (replicate " +
                std::to_string(first.index) + "): " + first.failure);
  }

  if (successes > 0) {
    report.rejection_rate_cafe = double(reject_cafe) / double(successes);
    report.rejection_rate_cafe_m = double(reject_cafe_m) / double(successes);
    report.qq_cafe = qq_points(p_cafe);
    report.qq_cafe_m = qq_points(p_cafe_m);
  }
  return report;
}

ScenarioSpec parse_scenario_text(const std::string& text,
                                 const std::string& name) {
  ScenarioSpec spec;
  bool two_stage_enabled = false;
  TwoStageSpec two;
  std::vector<std::string> stage_keys;
  std::set<std::string> seen;

  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    // strip comments, respecting quoted strings
    bool in_quote = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quote = !in_quote;
      if (line[i] == '#' && !in_quote) {
        line.erase(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[')
      throw ValidationError(name +
                            ": sections are not supported; use flat keys");
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(name + ": expected key = value, got '" + line +
                            "'");
    const std::string key = trim(line.substr(0, eq));
    std::string raw = trim(line.substr(eq + 1));
    if (key.empty() || raw.empty())
      throw ValidationError(name + ": expected key = value, got '" + line +
                            "'");
    if (!seen.insert(key).second)
      throw ValidationError(name + ": duplicate key '" + key + "'");

    bool quoted = false;
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
      quoted = true;
      raw = raw.substr(1, raw.size() - 2);
    }
    auto string_value = [&]() -> const std::string& {
      if (!quoted)
        throw ValidationError(name + ": key '" + key +
                              "' needs a quoted string");
      return raw;
    };
    auto plain_value = [&]() -> const std::string& {
      if (quoted)
        throw ValidationError(name + ": key '" + key +
                              "' must not be quoted");
      return raw;
    };

    if (key == "setting") {
      spec.setting = parse_setting(string_value());
    } else if (key == "m") {
      spec.m = std::size_t(want_u64(plain_value(), key, name));
    } else if (key == "n") {
      spec.n = std::size_t(want_u64(plain_value(), key, name));
    } else if (key == "learner") {
      spec.learner = parse_learner(string_value());
    } else if (key == "variant") {
      spec.variant = parse_variant(string_value());
    } else if (key == "partition") {
      const int groups = spec.partition.groups;
      spec.partition = parse_partition_variable(string_value());
      spec.partition.groups = groups;
    } else if (key == "groups") {
      spec.partition.groups = int(want_u64(plain_value(), key, name));
    } else if (key == "alpha") {
      spec.alpha = want_double(plain_value(), key, name);
    } else if (key == "replicates") {
      spec.replicates = std::size_t(want_u64(plain_value(), key, name));
    } else if (key == "seed") {
      spec.seed = want_u64(plain_value(), key, name);
    } else if (key == "threads") {
      spec.threads = unsigned(want_u64(plain_value(), key, name));
    } else if (key == "two_stage") {
      two_stage_enabled = want_bool(plain_value(), key, name);
    } else if (key == "train_fraction") {
      two.train_fraction = want_double(plain_value(), key, name);
      stage_keys.push_back(key);
    } else if (key == "stage1_stat") {
      const std::string& v = string_value();
      if (v == "cafe") two.stage1_statistic = Statistic::cafe;
      else if (v == "cafe-m") two.stage1_statistic = Statistic::cafe_m;
      else throw ValidationError(name + ": stage1_stat must be cafe or cafe-m");
      stage_keys.push_back(key);
    } else if (key == "stage2_stat") {
      const std::string& v = string_value();
      if (v == "cafe") two.stage2_statistic = Statistic::cafe;
      else if (v == "cafe-m") two.stage2_statistic = Statistic::cafe_m;
      else throw ValidationError(name + ": stage2_stat must be cafe or cafe-m");
      stage_keys.push_back(key);
    } else if (key == "stage2_partition") {
      two.stage2_partition = parse_partition_variable(string_value());
      stage_keys.push_back(key);
    } else {
      throw ValidationError(name + ": unknown key '" + key + "'");
    }
  }

  if (!stage_keys.empty() && !two_stage_enabled)
    throw ValidationError(name + ": key '" + stage_keys.front() +
                          "' requires two_stage = true");
  if (two_stage_enabled) spec.two_stage = two;
  validate(spec);
  return spec;
}

ScenarioSpec parse_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario_text(buffer.str(), path);
}

}  // namespace cafe
