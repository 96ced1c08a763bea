#include "iifpca/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "iifpca/error.hpp"

namespace iifpca {

const char* to_string(CovariateLookup lookup) {
  switch (lookup) {
    case CovariateLookup::carry_forward: return "carry_forward";
    case CovariateLookup::linear: return "linear";
  }
  return "unknown";
}

CovariateLookup covariate_lookup_from_string(const std::string& name) {
  if (name == "carry_forward" || name == "locf") return CovariateLookup::carry_forward;
  if (name == "linear") return CovariateLookup::linear;
  throw InvalidArgument("unknown covariate lookup policy '" + name + "'");
}

Eigen::VectorXd covariate_at(const Subject& subject, double t, CovariateLookup lookup) {
  const auto& recs = subject.covariates;
  const auto it = std::upper_bound(recs.begin(), recs.end(), t,
                                   [](double value, const CovariateRecord& r) { return value < r.time; });
  if (it == recs.begin()) {
    std::ostringstream msg;
    msg << "subject " << subject.id << ": no covariate record at or before t = " << t;
    throw DataError(msg.str());
  }
  const CovariateRecord& prev = *(it - 1);
  if (lookup == CovariateLookup::carry_forward || it == recs.end() || prev.time == t) return prev.value;
  const CovariateRecord& next = *it;
  const double frac = (t - prev.time) / (next.time - prev.time);
  return prev.value + frac * (next.value - prev.value);
}

double LongitudinalDataset::domain_end() const noexcept {
  double tau = 0.0;
  for (const Subject& s : subjects_) tau = std::max(tau, s.followup_end);
  return tau;
}

std::size_t LongitudinalDataset::total_observations() const noexcept {
  std::size_t n = 0;
  for (const Subject& s : subjects_) n += s.outcomes.size();
  return n;
}

int LongitudinalDataset::covariate_dim() const {
  for (const Subject& s : subjects_)
    if (!s.covariates.empty()) return static_cast<int>(s.covariates.front().value.size());
  return 0;
}

void LongitudinalDataset::validate(bool require_covariates) const {
  std::vector<std::string> violations;
  const int dim = covariate_dim();
  auto where = [](const Subject& s, double t) {
    std::ostringstream os;
    os << "subject " << s.id << " at t = " << t << ": ";
    return os.str();
  };
  for (const Subject& s : subjects_) {
    if (!(s.followup_end >= 0.0) || !std::isfinite(s.followup_end))
      violations.push_back("subject " + s.id + ": invalid follow-up end");
    for (std::size_t j = 0; j < s.outcomes.size(); ++j) {
      const Observation& o = s.outcomes[j];
      if (!std::isfinite(o.time) || !std::isfinite(o.value)) {
        violations.push_back(where(s, o.time) + "non-finite outcome");
        continue;
      }
      if (o.time < 0.0 || o.time > s.followup_end) violations.push_back(where(s, o.time) + "outside [0, tau_i]");
      if (j > 0 && !(o.time > s.outcomes[j - 1].time))
        violations.push_back(where(s, o.time) + "outcome times not strictly increasing");
    }
    for (std::size_t k = 0; k < s.covariates.size(); ++k) {
      const CovariateRecord& c = s.covariates[k];
      if (c.value.size() != dim) violations.push_back(where(s, c.time) + "covariate dimension mismatch");
      if (!std::isfinite(c.time) || !c.value.allFinite())
        violations.push_back(where(s, c.time) + "non-finite covariate");
      if (k > 0 && !(c.time > s.covariates[k - 1].time))
        violations.push_back(where(s, c.time) + "covariate times not strictly increasing");
    }
    if (require_covariates && !s.outcomes.empty()) {
      const double first_cov = s.covariates.empty() ? INFINITY : s.covariates.front().time;
      if (s.outcomes.front().time < first_cov)
        violations.push_back(where(s, s.outcomes.front().time) + "outcome precedes the first covariate record");
    }
  }
  if (!violations.empty()) throw DataError("dataset validation failed", std::move(violations));
}

}  // namespace iifpca
