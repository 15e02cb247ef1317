#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cafe {

enum class Source { rct, observational };

// Column-name mapping for CSV ingestion. An empty covariate list means
// "every column not otherwise mapped".
struct Schema {
  std::string treatment = "a";
  std::string outcome = "y";
  std::vector<std::string> covariates;
  std::optional<std::string> id;
};

// One trial sample: covariates, binary treatment, outcome. Immutable after
// construction; construction validates every invariant.
class TrialDataset {
 public:
  TrialDataset(Source source, std::vector<std::string> covariate_names,
               std::vector<double> covariates_row_major,
               std::vector<int> treatment, std::vector<double> outcome,
               std::vector<std::string> ids = {});

  std::size_t size() const noexcept { return outcome_.size(); }
  std::size_t dim() const noexcept { return covariate_names_.size(); }
  Source source() const noexcept { return source_; }

  double covariate(std::size_t row, std::size_t col) const {
    return covariates_[row * dim() + col];
  }
  std::vector<double> covariate_column(std::size_t col) const;
  const std::vector<std::string>& covariate_names() const noexcept {
    return covariate_names_;
  }
  // Throws ValidationError when the name is not a covariate.
  std::size_t covariate_index(const std::string& name) const;

  const std::vector<int>& treatment() const noexcept { return treatment_; }
  const std::vector<double>& outcome() const noexcept { return outcome_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  // New dataset holding the given rows, in the given order.
  TrialDataset subset(const std::vector<std::size_t>& rows) const;

 private:
  Source source_;
  std::vector<std::string> covariate_names_;
  std::vector<double> covariates_;  // row major, size n * p
  std::vector<int> treatment_;
  std::vector<double> outcome_;
  std::vector<std::string> ids_;  // empty when the source file had no id column
};

// Black-box effect predictions evaluated at the rows of a paired dataset.
struct PredictionSet {
  std::vector<double> tau_hat;
  std::optional<std::vector<double>> e_hat;  // strictly inside (0, 1)
};

TrialDataset load_dataset(const std::filesystem::path& file,
                          const Schema& schema, Source source);

// Reads `tau_hat` (and optional `e_hat`) aligned to `ds`: by row order, or by
// id when both the dataset and the prediction file carry an id column.
PredictionSet attach_predictions(const TrialDataset& ds,
                                 const std::filesystem::path& file);

// 17-significant-digit CSV so that load(write(ds)) is bit-exact.
void write_dataset(const TrialDataset& ds, const std::filesystem::path& file);

struct CovariateRange {
  std::string name;
  double lo;
  double hi;
};

// CSV with header `covariate,min,max`.
std::vector<CovariateRange> load_range_table(const std::filesystem::path& file);

// Advisory overlap check: one message per covariate whose trial range leaves
// the reference range. Never throws on disjoint ranges.
std::vector<std::string> support_warnings(
    const TrialDataset& trial, const std::vector<CovariateRange>& reference);

}  // namespace cafe
