#include "iifpca/mean.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "iifpca/error.hpp"

namespace iifpca {

double MeanFit::evaluate(double t) const {
  const LocalBasis local = basis.eval_local(t);
  return local.values.dot(gamma.segment(local.first, basis.order()));
}

Eigen::VectorXd MeanFit::evaluate(std::span<const double> grid) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t a = 0; a < grid.size(); ++a) out[static_cast<Eigen::Index>(a)] = evaluate(grid[a]);
  return out;
}

double MeanFit::theory_bound() const {
  return lambda * std::pow(static_cast<double>(basis.dim()), 2.0 * penalty_order - 1.0);
}

WeightedObservations WeightedObservations::from(const LongitudinalDataset& data, const ObservationWeights& weights) {
  if (weights.values.size() != data.size()) throw InvalidArgument("weights: subject count does not match dataset");
  WeightedObservations out;
  const auto n = static_cast<Eigen::Index>(data.total_observations());
  out.values.resize(n);
  out.weights.resize(n);
  out.times.reserve(n);
  std::vector<std::string> bad;
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Subject& s = data[i];
    if (weights.values[i].size() != s.outcomes.size())
      throw InvalidArgument("weights: observation count mismatch for subject " + s.id);
    for (std::size_t j = 0; j < s.outcomes.size(); ++j, ++k) {
      const double w = weights.values[i][j];
      if (!(w >= 0.0) || !std::isfinite(w)) {
        std::ostringstream os;
        os << "subject " << s.id << " at t = " << s.outcomes[j].time << ": weight " << w;
        bad.push_back(os.str());
      }
      out.times.push_back(s.outcomes[j].time);
      out.values[k] = s.outcomes[j].value;
      out.weights[k] = w;
    }
  }
  if (!bad.empty()) throw DataError("negative or non-finite weights", std::move(bad));
  return out;
}

PenalizedLeastSquares mean_system(const WeightedObservations& obs, const SplineBasis& basis, int penalty_order) {
  const int q = basis.dim();
  const int l = basis.order();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(q);
  double yy = 0.0;
  for (std::size_t k = 0; k < obs.times.size(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    const double w = obs.weights[ki];
    const double y = obs.values[ki];
    const LocalBasis local = basis.eval_local(obs.times[k]);
    gram.block(local.first, local.first, l, l).noalias() += w * local.values * local.values.transpose();
    rhs.segment(local.first, l) += (w * y) * local.values;
    yy += w * y * y;
  }
  return PenalizedLeastSquares(std::move(gram), std::move(rhs), yy, static_cast<double>(obs.times.size()),
                               penalty_mean(basis, penalty_order));
}

namespace {

/// rss evaluated observation by observation; the quadratic form loses digits for near-exact fits.
double direct_rss(const WeightedObservations& obs, const SplineBasis& basis, const Eigen::VectorXd& gamma) {
  double rss = 0.0;
  for (std::size_t k = 0; k < obs.times.size(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    const LocalBasis local = basis.eval_local(obs.times[k]);
    const double r = obs.values[ki] - local.values.dot(gamma.segment(local.first, basis.order()));
    rss += obs.weights[ki] * r * r;
  }
  return rss;
}

MeanFit make_fit(const WeightedObservations& obs, const SplineBasis& basis, int penalty_order,
                 const PenalizedLeastSquares& system, double lambda) {
  PenalizedSolution sol = system.solve(lambda);
  sol.rss = direct_rss(obs, basis, sol.coef);
  sol.gcv = gcv_score(sol.rss, sol.trace, system.num_obs());
  MeanFit fit{basis, penalty_order, std::move(sol.coef), lambda, sol.trace, sol.gcv, sol.rss, obs.times.size()};
  return fit;
}

}  // namespace

MeanFit fit_mean(const LongitudinalDataset& data, const ObservationWeights& weights, const SplineBasis& basis,
                 double lambda, int penalty_order) {
  const WeightedObservations obs = WeightedObservations::from(data, weights);
  return make_fit(obs, basis, penalty_order, mean_system(obs, basis, penalty_order), lambda);
}

GcvCurve gcv_curve_mean(const LongitudinalDataset& data, const ObservationWeights& weights, const SplineBasis& basis,
                        std::span<const double> lambda_grid, int penalty_order) {
  if (lambda_grid.empty()) throw InvalidArgument("gcv: empty lambda grid");
  const WeightedObservations obs = WeightedObservations::from(data, weights);
  const PenalizedLeastSquares system = mean_system(obs, basis, penalty_order);
  GcvCurve curve;
  double best = std::numeric_limits<double>::infinity();
  for (const double lambda : lambda_grid) {
    double score = std::numeric_limits<double>::infinity();
    try {
      score = make_fit(obs, basis, penalty_order, system, lambda).gcv_score;
    } catch (const SingularSystemError&) {
    }
    if (score < best) {
      best = score;
      curve.best = curve.lambdas.size();
    }
    curve.lambdas.push_back(lambda);
    curve.scores.push_back(score);
  }
  if (!std::isfinite(best)) throw Error("gcv_select_mean: every grid point has an infinite GCV score");
  return curve;
}

std::vector<double> default_mean_lambda_grid(const LongitudinalDataset& data, const ObservationWeights& weights,
                                             const SplineBasis& basis, int penalty_order) {
  const WeightedObservations obs = WeightedObservations::from(data, weights);
  return mean_system(obs, basis, penalty_order).lambda_grid();
}

MeanFit gcv_select_mean(const LongitudinalDataset& data, const ObservationWeights& weights, const SplineBasis& basis,
                        std::span<const double> lambda_grid, int penalty_order, GcvCurve* curve_out) {
  std::vector<double> grid(lambda_grid.begin(), lambda_grid.end());
  if (grid.empty()) grid = default_mean_lambda_grid(data, weights, basis, penalty_order);
  GcvCurve curve = gcv_curve_mean(data, weights, basis, grid, penalty_order);
  MeanFit fit = fit_mean(data, weights, basis, curve.best_lambda(), penalty_order);
  if (curve_out) *curve_out = std::move(curve);
  return fit;
}

double evaluate_mean(const MeanFit& fit, double t) { return fit.evaluate(t); }

Eigen::VectorXd evaluate_mean_grid(const MeanFit& fit, std::span<const double> grid) { return fit.evaluate(grid); }

}  // namespace iifpca
