#include "iifpca/penalized.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "iifpca/error.hpp"

namespace iifpca {

PenalizedLeastSquares::PenalizedLeastSquares(Eigen::MatrixXd gram, Eigen::VectorXd rhs, double weighted_ss,
                                             double num_obs, Eigen::MatrixXd penalty)
    : gram_(std::move(gram)), rhs_(std::move(rhs)), weighted_ss_(weighted_ss), num_obs_(num_obs),
      penalty_(std::move(penalty)) {
  if (gram_.rows() != gram_.cols() || gram_.rows() != rhs_.size() || penalty_.rows() != gram_.rows() ||
      penalty_.cols() != gram_.cols())
    throw InvalidArgument("PenalizedLeastSquares: dimension mismatch");
}

PenalizedSolution PenalizedLeastSquares::solve(double lambda) const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidArgument("smoothing parameter must be positive");
  const Eigen::MatrixXd system = gram_ + 0.5 * lambda * penalty_;
  Eigen::LLT<Eigen::MatrixXd> llt(system);
  const double max_diag = system.diagonal().cwiseAbs().maxCoeff();
  bool singular = llt.info() != Eigen::Success;
  if (!singular) {
    const Eigen::VectorXd diag = llt.matrixLLT().diagonal();
    singular = diag.minCoeff() <= std::sqrt(max_diag) * 1e-7;
  }
  if (singular) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(system);
    std::ostringstream os;
    os << "penalized normal equations are singular (lambda = " << lambda << "); deficient directions:";
    const double cutoff = 1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    for (Eigen::Index k = 0; k < eig.eigenvalues().size(); ++k) {
      if (eig.eigenvalues()[k] > cutoff) break;
      Eigen::Index lead = 0;
      eig.eigenvectors().col(k).cwiseAbs().maxCoeff(&lead);
      os << " [eigenvalue " << eig.eigenvalues()[k] << ", largest loading on coefficient " << lead << "]";
    }
    throw SingularSystemError(os.str());
  }

  PenalizedSolution sol;
  sol.coef = llt.solve(rhs_);
  sol.trace = llt.solve(gram_).trace();
  sol.rss = std::max(0.0, weighted_ss_ - 2.0 * sol.coef.dot(rhs_) + sol.coef.dot(gram_ * sol.coef));
  sol.gcv = gcv_score(sol.rss, sol.trace, num_obs_);
  sol.roughness = sol.coef.dot(penalty_ * sol.coef);
  return sol;
}

double PenalizedLeastSquares::lambda_scale() const {
  const double tq = penalty_.trace();
  const double tm = gram_.trace();
  if (!(tq > 0.0) || !(tm > 0.0)) return 1.0;
  return tm / tq;
}

std::vector<double> PenalizedLeastSquares::lambda_grid(int points, double lo, double hi) const {
  std::vector<double> grid = log_spaced(lo, hi, points);
  const double s = lambda_scale();
  for (double& g : grid) g *= s;
  return grid;
}

double gcv_score(double rss, double trace, double num_obs) {
  const double denom = 1.0 - trace / num_obs;
  if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
  return (rss / num_obs) / (denom * denom);
}

std::vector<double> log_spaced(double lo, double hi, int points) {
  if (!(lo > 0.0) || !(hi >= lo) || points < 1) throw InvalidArgument("log_spaced: need 0 < lo <= hi, points >= 1");
  std::vector<double> out(points);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (int k = 0; k < points; ++k) out[k] = std::exp(points == 1 ? a : a + (b - a) * k / (points - 1));
  return out;
}

}  // namespace iifpca
