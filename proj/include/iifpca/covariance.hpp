#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "iifpca/bspline.hpp"
#include "iifpca/dataset.hpp"
#include "iifpca/mean.hpp"
#include "iifpca/penalized.hpp"
#include "iifpca/weights.hpp"

namespace iifpca {

/// G_i(t_ij, t_il) = {X_ij - mu(t_ij)}{X_il - mu(t_il)} for an ordered pair j != l.
struct RawCovPoint {
  std::size_t subject = 0;
  int j = 0;
  int l = 0;
  double t = 0.0;
  double s = 0.0;
  double value = 0.0;
  double weight = 0.0;
};

std::vector<RawCovPoint> raw_cov_points(const LongitudinalDataset& data, const MeanFit& mean,
                                        std::span<const PairWeight> pair_weights);

/// Number of free coefficients of a symmetric q x q matrix.
constexpr int half_dim(int q) { return q * (q + 1) / 2; }
/// Position of (a, b), a <= b, in the half-vectorization (row-major upper triangle).
constexpr int half_index(int a, int b, int q) { return a * q - a * (a - 1) / 2 + (b - a); }
/// Duplication matrix: vec(Xi) = dup * vech(Xi), q^2 x q(q+1)/2.
Eigen::MatrixXd duplication_matrix(int q);
Eigen::VectorXd half_vectorize(const Eigen::MatrixXd& xi);
Eigen::MatrixXd from_half(const Eigen::VectorXd& half, int q);

/// C_hat(t, s) = B(t)^T Xi B(s) with Xi symmetric.
struct CovFit {
  SplineBasis basis;
  int penalty_order = 2;
  Eigen::VectorXd half;  ///< vech(Xi)
  Eigen::MatrixXd xi;    ///< full symmetric coefficient matrix built from `half`
  double lambda = 0.0;
  double effective_df = 0.0;
  double gcv_score = 0.0;
  double rss = 0.0;
  std::size_t num_points = 0;

  double evaluate(double t, double s) const;
  /// Matrix of C_hat(grid_a, grid_b).
  Eigen::MatrixXd evaluate_grid(std::span<const double> grid) const;
  /// lambda * q^{2m-2}; the rate theory asks for this to vanish.
  double theory_bound() const;
  /// eta^T Q_C eta for eta = vec(Xi).
  double roughness() const;
};

/// Sufficient statistics of the pair regression in the symmetric (reduced) parameterization.
PenalizedLeastSquares cov_system(std::span<const RawCovPoint> points, const SplineBasis& basis, int penalty_order);

/// Xi_hat = argmin_{Xi = Xi^T} sum w_ijl {G_i - D(t_ij, t_il)^T vec(Xi)}^2 + (lambda/2) vec(Xi)^T Q_C vec(Xi).
CovFit fit_cov(std::span<const RawCovPoint> points, const SplineBasis& basis, double lambda, int penalty_order = 2);

GcvCurve gcv_curve_cov(std::span<const RawCovPoint> points, const SplineBasis& basis,
                       std::span<const double> lambda_grid, int penalty_order = 2);

std::vector<double> default_cov_lambda_grid(std::span<const RawCovPoint> points, const SplineBasis& basis,
                                            int penalty_order = 2);

CovFit gcv_select_cov(std::span<const RawCovPoint> points, const SplineBasis& basis,
                      std::span<const double> lambda_grid = {}, int penalty_order = 2, GcvCurve* curve_out = nullptr);

/// Leave-one-subject-out selection: minimizes the weighted squared error of each subject's pairs
/// under the fit computed without that subject. `curve_out` receives the CV scores (mean per pair).
CovFit subject_cv_select_cov(std::span<const RawCovPoint> points, const SplineBasis& basis,
                             std::span<const double> lambda_grid = {}, int penalty_order = 2,
                             GcvCurve* curve_out = nullptr);

double evaluate_cov(const CovFit& fit, double t, double s);

}  // namespace iifpca
