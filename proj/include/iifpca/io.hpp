#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "iifpca/dataset.hpp"

namespace iifpca {

/// Column layout of the input files. Covariate columns are every column after `time`.
struct CsvSchema {
  std::string subject_column = "subject_id";
  std::string time_column = "time";
  std::string value_column = "value";
  std::string followup_column = "followup_end";
  /// Recorded in the dataset metadata; times are never converted.
  std::string time_unit = "months";
  /// Require a covariate record at or before every outcome time.
  bool require_covariates = true;
};

struct LoadReport {
  std::size_t outcome_rows = 0;
  std::size_t covariate_rows = 0;
  std::size_t followup_rows = 0;
  std::size_t subjects = 0;
};

/// Reads outcome rows (subject_id, time, value) and covariate rows (subject_id, time, z1[, z2, ...]).
/// An optional follow-up file (subject_id, followup_end) sets tau_i; otherwise tau_i is the last outcome time.
/// Every violation is collected with its file and row number and raised together as one DataError.
LongitudinalDataset load_csv(const std::string& outcome_path, const std::string& covariate_path,
                             const std::optional<std::string>& followup_path = std::nullopt,
                             const CsvSchema& schema = {}, LoadReport* report = nullptr);

/// Writes the three files read by load_csv, with every float printed to 17 significant digits.
void save_csv(const LongitudinalDataset& data, const std::string& outcome_path, const std::string& covariate_path,
              const std::string& followup_path, const CsvSchema& schema = {});

enum class OutcomeTransform { identity, sqrt };
enum class CovariateTransform { identity, log };

std::string to_string(OutcomeTransform t);
std::string to_string(CovariateTransform t);
OutcomeTransform outcome_transform_from_string(const std::string& name);
CovariateTransform covariate_transform_from_string(const std::string& name);

/// Transformed copy. Appends the transforms to the "outcome_transform" and "covariate_transform"
/// metadata entries. Negative values under sqrt or nonpositive values under log raise DataError.
LongitudinalDataset apply_transform(const LongitudinalDataset& data, OutcomeTransform outcome,
                                    CovariateTransform covariate);

/// "%.17g": reads back as the same double.
std::string format_double(double x);

/// Column-oriented CSV writer for grids and summaries. Columns must have equal length.
struct CsvColumn {
  std::string name;
  std::vector<double> values;
};
void write_columns(const std::string& path, const std::vector<CsvColumn>& columns);

}  // namespace iifpca
