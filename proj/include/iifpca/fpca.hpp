#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iifpca/bspline.hpp"
#include "iifpca/covariance.hpp"

namespace iifpca {

/// How the sign of an eigenfunction was fixed.
enum class SignRule {
  positive_integral,  ///< int phi_j > 0
  leading_coefficient ///< int phi_j ~ 0, first non-negligible coefficient made positive
};

std::string to_string(SignRule rule);

/// Eigenpairs of the operator (C f)(t) = int C(s, t) f(s) ds for C = B^T Xi B.
struct FpcaResult {
  SplineBasis basis;
  Eigen::VectorXd eigenvalues;   ///< all q eigenvalues, nonincreasing (negative ones kept for diagnostics)
  Eigen::MatrixXd coefficients;  ///< column j holds c_j with phi_j(t) = B(t)^T c_j
  std::vector<SignRule> sign_rules;
  int retained = 0;              ///< min(p, number of positive eigenvalues); below 1e-12 * max abs counts as zero
  double trace = 0.0;            ///< int C(t, t) dt = tr(W Xi)
  double positive_variance = 0.0;///< sum of the positive eigenvalues

  double eigenfunction(int j, double t) const;
  Eigen::VectorXd eigenfunction(int j, std::span<const double> grid) const;
  /// Cumulative share of positive_variance explained by the first k retained components, k = 1..retained.
  std::vector<double> cumulative_shares() const;
  int num_negative() const;
};

/// Solves W^{1/2} Xi W^{1/2} u = kappa u and sets c = W^{-1/2} u.
FpcaResult eigen_decompose(const Eigen::MatrixXd& xi, const SplineBasis& basis, int num_components);
FpcaResult eigen_decompose(const CovFit& fit, int num_components);

/// int {phi_1_hat - phi_1}^2 on the grid after flipping phi_1_hat when int phi_1_hat phi_1 < 0.
double first_pc_mise(const FpcaResult& result, const std::function<double(double)>& true_phi,
                     std::span<const double> grid);

/// sum_{j <= p} kappa_j phi_j(t) phi_j(s); requires p <= retained.
double reconstruct_cov(const FpcaResult& result, int p, double t, double s);

}  // namespace iifpca
