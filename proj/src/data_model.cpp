#include "cafe/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cafe/error.hpp"

namespace cafe {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

struct CsvTable {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // -1 when the column is absent
  int column(const std::string& col) const {
    const auto it = std::find(header.begin(), header.end(), col);
    return it == header.end() ? -1
                              : static_cast<int>(it - header.begin());
  }
};

CsvTable read_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in)
    throw ParseError("cannot open file: " + file.string());
  CsvTable table;
  table.name = file.filename().string();
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("empty file: " + table.name);
  table.header = split_fields(line);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != table.header.size())
      throw ParseError("row " + std::to_string(table.rows.size() + 1) + " of " +
                       table.name + ": expected " +
                       std::to_string(table.header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

int require_column(const CsvTable& table, const std::string& col) {
  const int idx = table.column(col);
  if (idx < 0)
    throw ParseError("missing column '" + col + "' in " + table.name);
  return idx;
}

double parse_number(const std::string& cell, std::size_t row,
                    const std::string& col) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto res = std::from_chars(begin, end, v);
  const bool bad =
      res.ec != std::errc() || res.ptr != end || !std::isfinite(v);
  if (bad)
    throw ParseError("row " + std::to_string(row + 1) + ", column '" + col +
                     "': cannot use '" + cell + "' as a finite number");
  return v;
}

int parse_treatment(const std::string& cell, std::size_t row) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw ParseError("row " + std::to_string(row + 1) +
                     ": cannot parse treatment value '" + cell + "'");
  if (v != 0.0 && v != 1.0)
    throw ValidationError("row " + std::to_string(row + 1) +
                          ": treatment must be 0 or 1, got '" + cell + "'");
  return v == 1.0 ? 1 : 0;
}

void format_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

}  // namespace

TrialDataset::TrialDataset(Source source,
                           std::vector<std::string> covariate_names,
                           std::vector<double> covariates_row_major,
                           std::vector<int> treatment,
                           std::vector<double> outcome,
                           std::vector<std::string> ids)
    : source_(source),
      covariate_names_(std::move(covariate_names)),
      covariates_(std::move(covariates_row_major)),
      treatment_(std::move(treatment)),
      outcome_(std::move(outcome)),
      ids_(std::move(ids)) {
  const std::size_t n = outcome_.size();
  if (n == 0) throw ValidationError("dataset must contain at least one row");
  if (treatment_.size() != n)
    throw ValidationError("treatment and outcome lengths differ");
  if (covariates_.size() != n * covariate_names_.size())
    throw ValidationError("covariate matrix size does not match names x rows");
  if (!ids_.empty() && ids_.size() != n)
    throw ValidationError("id column length does not match rows");
  for (std::size_t i = 0; i < n; ++i) {
    if (treatment_[i] != 0 && treatment_[i] != 1)
      throw ValidationError("row " + std::to_string(i + 1) +
                            ": treatment must be 0 or 1");
    if (!std::isfinite(outcome_[i]))
      throw ValidationError("row " + std::to_string(i + 1) +
                            ": outcome is not finite");
  }
  for (double v : covariates_)
    if (!std::isfinite(v))
      throw ValidationError("covariate matrix contains a non-finite value");
  std::unordered_set<std::string> seen;
  for (const auto& name : covariate_names_)
    if (!seen.insert(name).second)
      throw ValidationError("duplicate covariate name '" + name + "'");
}

std::vector<double> TrialDataset::covariate_column(std::size_t col) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = covariate(i, col);
  return out;
}

std::size_t TrialDataset::covariate_index(const std::string& name) const {
  const auto it =
      std::find(covariate_names_.begin(), covariate_names_.end(), name);
  if (it == covariate_names_.end())
    throw ValidationError("unknown covariate '" + name + "'");
  return static_cast<std::size_t>(it - covariate_names_.begin());
}

TrialDataset TrialDataset::subset(const std::vector<std::size_t>& rows) const {
  std::vector<double> cov;
  cov.reserve(rows.size() * dim());
  std::vector<int> treat;
  treat.reserve(rows.size());
  std::vector<double> out;
  out.reserve(rows.size());
  std::vector<std::string> ids;
  for (std::size_t r : rows) {
    if (r >= size())
      throw ValidationError("subset row index out of range");
    for (std::size_t c = 0; c < dim(); ++c) cov.push_back(covariate(r, c));
    treat.push_back(treatment_[r]);
    out.push_back(outcome_[r]);
    if (!ids_.empty()) ids.push_back(ids_[r]);
  }
  return TrialDataset(source_, covariate_names_, std::move(cov),
                      std::move(treat), std::move(out), std::move(ids));
}

TrialDataset load_dataset(const std::filesystem::path& file,
                          const Schema& schema, Source source) {
  const CsvTable table = read_csv(file);
  if (table.rows.empty())
    throw ParseError("empty dataset: " + table.name + " has no data rows");

  const int treat_col = require_column(table, schema.treatment);
  const int outcome_col = require_column(table, schema.outcome);
  int id_col = -1;
  if (schema.id) id_col = require_column(table, *schema.id);

  std::vector<std::string> cov_names;
  std::vector<int> cov_cols;
  if (!schema.covariates.empty()) {
    for (const auto& name : schema.covariates) {
      cov_cols.push_back(require_column(table, name));
      cov_names.push_back(name);
    }
  } else {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      const int ci = static_cast<int>(c);
      if (ci == treat_col || ci == outcome_col || ci == id_col) continue;
      cov_cols.push_back(ci);
      cov_names.push_back(table.header[c]);
    }
  }

  const std::size_t n = table.rows.size();
  std::vector<double> cov;
  cov.reserve(n * cov_cols.size());
  std::vector<int> treat(n);
  std::vector<double> outcome(n);
  std::vector<std::string> ids;
  if (id_col >= 0) ids.reserve(n);

  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = table.rows[r];
    for (std::size_t j = 0; j < cov_cols.size(); ++j)
      cov.push_back(parse_number(row[cov_cols[j]], r, cov_names[j]));
    treat[r] = parse_treatment(row[treat_col], r);
    outcome[r] = parse_number(row[outcome_col], r, schema.outcome);
    if (id_col >= 0) ids.push_back(row[id_col]);
  }

  return TrialDataset(source, std::move(cov_names), std::move(cov),
                      std::move(treat), std::move(outcome), std::move(ids));
}

PredictionSet attach_predictions(const TrialDataset& ds,
                                 const std::filesystem::path& file) {
  const CsvTable table = read_csv(file);
  const int tau_col = require_column(table, "tau_hat");
  const int e_col = table.column("e_hat");
  const int id_col = table.column("id");

  if (table.rows.size() != ds.size())
    throw ValidationError("prediction rows (" +
                          std::to_string(table.rows.size()) +
                          ") do not match dataset rows (" +
                          std::to_string(ds.size()) + ")");

  // Row r of the output comes from file row order[r].
  std::vector<std::size_t> order(ds.size());
  if (id_col >= 0 && !ds.ids().empty()) {
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      if (!by_id.emplace(table.rows[r][id_col], r).second)
        throw ValidationError("duplicate id '" + table.rows[r][id_col] +
                              "' in prediction file");
    }
    std::unordered_set<std::string> ds_seen;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (!ds_seen.insert(ds.ids()[i]).second)
        throw ValidationError("duplicate id '" + ds.ids()[i] +
                              "' in dataset; id join is ambiguous");
      const auto it = by_id.find(ds.ids()[i]);
      if (it == by_id.end())
        throw ValidationError("id '" + ds.ids()[i] +
                              "' not found in prediction file");
      order[i] = it->second;
    }
  } else {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  }

  PredictionSet pred;
  pred.tau_hat.resize(ds.size());
  if (e_col >= 0) pred.e_hat.emplace(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& row = table.rows[order[i]];
    pred.tau_hat[i] = parse_number(row[tau_col], order[i], "tau_hat");
    if (e_col >= 0) {
      const double e = parse_number(row[e_col], order[i], "e_hat");
      if (e <= 0.0 || e >= 1.0)
        throw ValidationError("row " + std::to_string(order[i] + 1) +
                              ", column 'e_hat': propensity must lie strictly "
                              "inside (0, 1)");
      (*pred.e_hat)[i] = e;
    }
  }
  return pred;
}

void write_dataset(const TrialDataset& ds, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw ParseError("cannot open file for writing: " + file.string());
  std::string line;
  const bool with_ids = !ds.ids().empty();
  if (with_ids) line += "id,";
  for (const auto& name : ds.covariate_names()) {
    line += name;
    line += ',';
  }
  line += "a,y\n";
  out << line;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    line.clear();
    if (with_ids) {
      line += ds.ids()[i];
      line += ',';
    }
    for (std::size_t c = 0; c < ds.dim(); ++c) {
      format_double(line, ds.covariate(i, c));
      line += ',';
    }
    line += std::to_string(ds.treatment()[i]);
    line += ',';
    format_double(line, ds.outcome()[i]);
    line += '\n';
    out << line;
  }
  if (!out) throw ParseError("failed writing " + file.string());
}

std::vector<CovariateRange> load_range_table(
    const std::filesystem::path& file) {
  const CsvTable table = read_csv(file);
  const int name_col = require_column(table, "covariate");
  const int lo_col = require_column(table, "min");
  const int hi_col = require_column(table, "max");
  std::vector<CovariateRange> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    CovariateRange range;
    range.name = table.rows[r][name_col];
    range.lo = parse_number(table.rows[r][lo_col], r, "min");
    range.hi = parse_number(table.rows[r][hi_col], r, "max");
    if (range.lo > range.hi)
      throw ValidationError("range for '" + range.name + "' has min > max");
    out.push_back(std::move(range));
  }
  return out;
}

std::vector<std::string> support_warnings(
    const TrialDataset& trial, const std::vector<CovariateRange>& reference) {
  std::vector<std::string> warnings;
  for (std::size_t c = 0; c < trial.dim(); ++c) {
    const auto& name = trial.covariate_names()[c];
    const auto it =
        std::find_if(reference.begin(), reference.end(),
                     [&](const CovariateRange& r) { return r.name == name; });
    if (it == reference.end()) continue;
    double lo = trial.covariate(0, c);
    double hi = lo;
    for (std::size_t i = 1; i < trial.size(); ++i) {
      lo = std::min(lo, trial.covariate(i, c));
      hi = std::max(hi, trial.covariate(i, c));
    }
    if (lo < it->lo || hi > it->hi) {
      std::string msg = "covariate '" + name + "': trial range [";
      format_double(msg, lo);
      msg += ", ";
      format_double(msg, hi);
      msg += "] leaves the reference range [";
      format_double(msg, it->lo);
      msg += ", ";
      format_double(msg, it->hi);
      msg += "]";
      warnings.push_back(std::move(msg));
    }
  }
  return warnings;
}

}  // namespace cafe
