#pragma once

#include <random>
#include <string>
#include <vector>

#include "iifpca/dataset.hpp"
#include "iifpca/weights.hpp"

namespace fixture {

/// Subjects with sorted random visit times on [0, tau] and values f(t) + noise.
template <class F>
iifpca::LongitudinalDataset random_panel(std::mt19937_64& rng, int subjects, int min_visits, int max_visits,
                                         double tau, F f, double noise_sd = 0.0) {
  std::uniform_real_distribution<double> u(0.0, tau);
  std::uniform_int_distribution<int> m(min_visits, max_visits);
  std::normal_distribution<double> e(0.0, 1.0);
  std::vector<iifpca::Subject> out;
  for (int i = 0; i < subjects; ++i) {
    iifpca::Subject s;
    s.id = "s" + std::to_string(i);
    s.followup_end = tau;
    std::vector<double> ts(static_cast<std::size_t>(m(rng)));
    for (double& t : ts) t = u(rng);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    for (const double t : ts) s.outcomes.push_back({t, f(i, t) + noise_sd * e(rng)});
    Eigen::VectorXd z(1);
    z[0] = 0.0;
    s.covariates.push_back({0.0, z});
    out.push_back(std::move(s));
  }
  return iifpca::LongitudinalDataset(std::move(out));
}

inline iifpca::ObservationWeights random_weights(std::mt19937_64& rng, const iifpca::LongitudinalDataset& data,
                                                 double lo = 0.2, double hi = 5.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  iifpca::ObservationWeights w;
  for (const auto& s : data.subjects()) {
    std::vector<double> v;
    for (std::size_t j = 0; j < s.outcomes.size(); ++j) v.push_back(u(rng));
    w.values.push_back(std::move(v));
  }
  return w;
}

}  // namespace fixture
