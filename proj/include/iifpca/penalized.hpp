#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace iifpca {

/// Minimizer of  sum_k w_k (y_k - x_k^T c)^2 + (lambda/2) c^T Q c  for fixed lambda.
struct PenalizedSolution {
  Eigen::VectorXd coef;
  double trace = 0.0;  ///< tr(A_w) = tr{(M + lambda/2 Q)^{-1} M}
  double rss = 0.0;    ///< sum_k w_k (y_k - x_k^T c)^2
  double gcv = 0.0;
  double roughness = 0.0;  ///< c^T Q c
};

/// Weighted penalized least squares assembled as sufficient statistics
///   M = X^T W X,  r = X^T W y,  yWy = y^T W y,
/// so that every lambda is solved in the p x p system without the N x N smoother.
///
/// Setting the gradient of the objective to zero gives 2 M c - 2 r + lambda Q c = 0,
/// i.e. the normal equations (M + lambda/2 Q) c = r.
class PenalizedLeastSquares {
 public:
  PenalizedLeastSquares(Eigen::MatrixXd gram, Eigen::VectorXd rhs, double weighted_ss, double num_obs,
                        Eigen::MatrixXd penalty);

  /// Throws SingularSystemError naming the deficient directions when M + lambda/2 Q is not PD.
  PenalizedSolution solve(double lambda) const;

  /// tr(M) / tr(Q): the lambda at which data and penalty carry comparable weight.
  double lambda_scale() const;
  /// `points` log-spaced values over [lo, hi] * lambda_scale().
  std::vector<double> lambda_grid(int points = 40, double lo = 1e-8, double hi = 1e4) const;

  const Eigen::MatrixXd& gram() const noexcept { return gram_; }
  const Eigen::VectorXd& rhs() const noexcept { return rhs_; }
  const Eigen::MatrixXd& penalty() const noexcept { return penalty_; }
  double num_obs() const noexcept { return num_obs_; }

 private:
  Eigen::MatrixXd gram_;
  Eigen::VectorXd rhs_;
  double weighted_ss_;
  double num_obs_;
  Eigen::MatrixXd penalty_;
};

/// V = N^{-1} rss / [N^{-1} tr(I - A)]^2; +inf when tr(A) >= N.
double gcv_score(double rss, double trace, double num_obs);

std::vector<double> log_spaced(double lo, double hi, int points);

struct GcvCurve {
  std::vector<double> lambdas;
  std::vector<double> scores;
  std::size_t best = 0;

  double best_lambda() const { return lambdas.at(best); }
  double best_score() const { return scores.at(best); }
};

}  // namespace iifpca
