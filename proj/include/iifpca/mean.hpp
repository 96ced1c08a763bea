#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "iifpca/bspline.hpp"
#include "iifpca/dataset.hpp"
#include "iifpca/penalized.hpp"
#include "iifpca/weights.hpp"

namespace iifpca {

/// mu_hat(t) = B(t)^T gamma from the weighted penalized spline fit.
struct MeanFit {
  SplineBasis basis;
  int penalty_order = 2;
  Eigen::VectorXd gamma;
  double lambda = 0.0;
  double effective_df = 0.0;  ///< tr(A_w)
  double gcv_score = 0.0;
  double rss = 0.0;
  std::size_t num_obs = 0;

  double evaluate(double t) const;
  Eigen::VectorXd evaluate(std::span<const double> grid) const;
  /// lambda * q^{2m-1}; the rate theory asks for this to stay bounded.
  double theory_bound() const;
};

/// Observations flattened in subject order together with their weights.
struct WeightedObservations {
  std::vector<double> times;
  Eigen::VectorXd values;
  Eigen::VectorXd weights;

  /// Throws DataError on negative or non-finite weights.
  static WeightedObservations from(const LongitudinalDataset& data, const ObservationWeights& weights);
};

/// Sufficient statistics of the mean regression for a given basis and penalty order.
PenalizedLeastSquares mean_system(const WeightedObservations& obs, const SplineBasis& basis, int penalty_order);

/// gamma_hat = argmin sum_ij w_ij {X_ij - B(t_ij)^T gamma}^2 + (lambda/2) gamma^T Q_mu gamma.
MeanFit fit_mean(const LongitudinalDataset& data, const ObservationWeights& weights, const SplineBasis& basis,
                 double lambda, int penalty_order = 2);

/// GCV score for every lambda of the grid; the argmin is curve.best.
GcvCurve gcv_curve_mean(const LongitudinalDataset& data, const ObservationWeights& weights, const SplineBasis& basis,
                        std::span<const double> lambda_grid, int penalty_order = 2);

/// The default grid: 40 log-spaced values over [1e-8, 1e4] * tr(B^T W B) / tr(Q_mu).
std::vector<double> default_mean_lambda_grid(const LongitudinalDataset& data, const ObservationWeights& weights,
                                             const SplineBasis& basis, int penalty_order = 2);

/// Fits at the GCV-selected lambda (default grid when `lambda_grid` is empty).
/// Throws Error when every grid point has an infinite score.
MeanFit gcv_select_mean(const LongitudinalDataset& data, const ObservationWeights& weights, const SplineBasis& basis,
                        std::span<const double> lambda_grid = {}, int penalty_order = 2,
                        GcvCurve* curve_out = nullptr);

double evaluate_mean(const MeanFit& fit, double t);
Eigen::VectorXd evaluate_mean_grid(const MeanFit& fit, std::span<const double> grid);

}  // namespace iifpca
