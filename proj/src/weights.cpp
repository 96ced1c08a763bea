#include "iifpca/weights.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "iifpca/error.hpp"

namespace iifpca {

ObservationWeights ObservationWeights::unit(const LongitudinalDataset& data) {
  ObservationWeights w;
  w.values.reserve(data.size());
  for (const Subject& s : data.subjects()) w.values.emplace_back(s.outcomes.size(), 1.0);
  return w;
}

void ObservationWeights::validate(const LongitudinalDataset& data) const {
  if (values.size() != data.size()) throw InvalidArgument("weights: subject count does not match dataset");
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Subject& s = data[i];
    if (values[i].size() != s.outcomes.size())
      throw InvalidArgument("weights: observation count mismatch for subject " + s.id);
    for (std::size_t j = 0; j < s.outcomes.size(); ++j) {
      const double w = values[i][j];
      if (!(w > 0.0) || !std::isfinite(w)) {
        std::ostringstream os;
        os << "subject " << s.id << " at t = " << s.outcomes[j].time << ": weight " << w;
        bad.push_back(os.str());
      }
    }
  }
  if (!bad.empty()) throw DataError("nonpositive or non-finite weights", std::move(bad));
}

std::size_t ObservationWeights::total() const noexcept {
  std::size_t n = 0;
  for (const auto& v : values) n += v.size();
  return n;
}

std::vector<PairWeight> pair_weights(const ObservationWeights& weights, const LongitudinalDataset& data) {
  weights.validate(data);
  std::vector<PairWeight> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& w = weights.values[i];
    const int m = static_cast<int>(w.size());
    for (int j = 0; j < m; ++j)
      for (int l = 0; l < m; ++l)
        if (j != l) out.push_back({i, j, l, w[j] * w[l]});
  }
  return out;
}

ObservationWeights truncate_weights(const ObservationWeights& weights, double quantile) {
  if (!(quantile > 0.0 && quantile <= 1.0)) throw InvalidArgument("truncate_weights: quantile must be in (0, 1]");
  std::vector<double> all;
  for (const auto& v : weights.values) all.insert(all.end(), v.begin(), v.end());
  if (all.empty()) return weights;
  std::sort(all.begin(), all.end());
  const auto k = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(all.size()))) - 1;
  const double cap = all[std::min(k, all.size() - 1)];
  ObservationWeights out = weights;
  for (auto& v : out.values)
    for (double& w : v) w = std::min(w, cap);
  return out;
}

}  // namespace iifpca
