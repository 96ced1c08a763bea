#pragma once

#include <cstddef>
#include <vector>

#include "iifpca/dataset.hpp"

namespace iifpca {

/// Per-observation sampling weights w_ij, aligned with Subject::outcomes.
struct ObservationWeights {
  std::vector<std::vector<double>> values;

  static ObservationWeights unit(const LongitudinalDataset& data);

  /// Throws DataError naming subject and time for any nonpositive or non-finite weight.
  void validate(const LongitudinalDataset& data) const;
  std::size_t total() const noexcept;
};

/// Weight of the ordered within-subject pair (j, l), j != l.
struct PairWeight {
  std::size_t subject = 0;
  int j = 0;
  int l = 0;
  double weight = 0.0;
};

/// w_ijl = w_ij * w_il for every ordered pair j != l within a subject.
std::vector<PairWeight> pair_weights(const ObservationWeights& weights, const LongitudinalDataset& data);

/// Caps every weight at the given empirical quantile (0 < quantile <= 1).
ObservationWeights truncate_weights(const ObservationWeights& weights, double quantile);

}  // namespace iifpca
