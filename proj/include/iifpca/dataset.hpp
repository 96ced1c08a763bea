#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace iifpca {

struct Observation {
  double time = 0.0;
  double value = 0.0;
};

struct CovariateRecord {
  double time = 0.0;
  Eigen::VectorXd value;
};

/// One subject's follow-up: outcome observations X_ij at t_ij, the covariate
/// trajectory Z_i observed at its own times, and the end of follow-up tau_i.
struct Subject {
  std::string id;
  double followup_end = 0.0;
  std::vector<Observation> outcomes;
  std::vector<CovariateRecord> covariates;

  std::size_t num_observations() const noexcept { return outcomes.size(); }
};

/// How Z(t) is read off the covariate records at an arbitrary time.
enum class CovariateLookup {
  carry_forward,  ///< record with the largest time <= t
  linear,         ///< linear interpolation between bracketing records, carried forward after the last
};

const char* to_string(CovariateLookup lookup);
CovariateLookup covariate_lookup_from_string(const std::string& name);

/// Z_i(t) under the given lookup policy. Throws DataError when no record exists at or before t.
Eigen::VectorXd covariate_at(const Subject& subject, double t,
                             CovariateLookup lookup = CovariateLookup::carry_forward);

class LongitudinalDataset {
 public:
  LongitudinalDataset() = default;
  explicit LongitudinalDataset(std::vector<Subject> subjects) : subjects_(std::move(subjects)) {}

  const std::vector<Subject>& subjects() const noexcept { return subjects_; }
  std::vector<Subject>& mutable_subjects() noexcept { return subjects_; }
  std::size_t size() const noexcept { return subjects_.size(); }
  bool empty() const noexcept { return subjects_.empty(); }
  const Subject& operator[](std::size_t i) const { return subjects_[i]; }

  /// tau = max_i tau_i (0 for an empty dataset).
  double domain_end() const noexcept;
  std::size_t total_observations() const noexcept;
  /// Dimension of the covariate vector (0 when there are no covariate records).
  int covariate_dim() const;

  /// Free-form provenance, e.g. {"time_unit": "months", "outcome_transform": "sqrt"}.
  std::map<std::string, std::string>& metadata() noexcept { return metadata_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

  /// Checks every dataset invariant and throws DataError listing all violations.
  /// With `require_covariates` each outcome time must have a carry-forward covariate.
  void validate(bool require_covariates = true) const;

 private:
  std::vector<Subject> subjects_;
  std::map<std::string, std::string> metadata_;
};

}  // namespace iifpca
