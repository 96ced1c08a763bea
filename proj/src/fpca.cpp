#include "iifpca/fpca.hpp"

#include <algorithm>
#include <cmath>

#include "iifpca/error.hpp"
#include "iifpca/grid.hpp"

namespace iifpca {

std::string to_string(SignRule rule) {
  return rule == SignRule::positive_integral ? "positive_integral" : "leading_coefficient";
}

double FpcaResult::eigenfunction(int j, double t) const {
  const LocalBasis local = basis.eval_local(t);
  return local.values.dot(coefficients.col(j).segment(local.first, basis.order()));
}

Eigen::VectorXd FpcaResult::eigenfunction(int j, std::span<const double> grid) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t a = 0; a < grid.size(); ++a) out[static_cast<Eigen::Index>(a)] = eigenfunction(j, grid[a]);
  return out;
}

std::vector<double> FpcaResult::cumulative_shares() const {
  std::vector<double> out;
  double acc = 0.0;
  for (int j = 0; j < retained; ++j) {
    acc += eigenvalues[j];
    out.push_back(positive_variance > 0.0 ? acc / positive_variance : 0.0);
  }
  return out;
}

namespace {

// Eigenvalues this close to zero relative to the largest one are round-off, neither sign.
double zero_tolerance(const Eigen::VectorXd& values) {
  return values.size() == 0 ? 0.0 : 1e-12 * values.cwiseAbs().maxCoeff();
}

}  // namespace

int FpcaResult::num_negative() const {
  return static_cast<int>((eigenvalues.array() < -zero_tolerance(eigenvalues)).count());
}

FpcaResult eigen_decompose(const Eigen::MatrixXd& xi, const SplineBasis& basis, int num_components) {
  const int q = basis.dim();
  if (xi.rows() != q || xi.cols() != q) throw InvalidArgument("eigen_decompose: coefficient matrix is not q x q");
  if (num_components < 0 || num_components > q)
    throw InvalidArgument("eigen_decompose: number of components must lie in [0, q]");

  const Eigen::MatrixXd& gram = basis.gram();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> wsolve(gram);
  if (wsolve.info() != Eigen::Success || wsolve.eigenvalues().minCoeff() <= 0.0)
    throw Error("eigen_decompose: Gram matrix is not positive definite");
  const Eigen::MatrixXd& v = wsolve.eigenvectors();
  const Eigen::VectorXd d = wsolve.eigenvalues();
  const Eigen::MatrixXd w_half = v * d.cwiseSqrt().asDiagonal() * v.transpose();
  const Eigen::MatrixXd w_inv_half = v * d.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();

  Eigen::MatrixXd a = w_half * xi * w_half;
  a = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> asolve(a);
  if (asolve.info() != Eigen::Success) throw Error("eigen_decompose: symmetric eigensolver failed");

  FpcaResult res{basis, Eigen::VectorXd(q), Eigen::MatrixXd(q, q), {}, 0, 0.0, 0.0};
  const Eigen::VectorXd integrals = basis.integrals();
  for (int j = 0; j < q; ++j) {
    const int src = q - 1 - j;  // ascending -> descending
    res.eigenvalues[j] = asolve.eigenvalues()[src];
    Eigen::VectorXd c = w_inv_half * asolve.eigenvectors().col(src);
    const double integral = integrals.dot(c);
    SignRule rule = SignRule::positive_integral;
    double sign = integral < 0.0 ? -1.0 : 1.0;
    if (std::abs(integral) <= 1e-8) {
      rule = SignRule::leading_coefficient;
      const double cutoff = 1e-8 * c.cwiseAbs().maxCoeff();
      for (int k = 0; k < q; ++k)
        if (std::abs(c[k]) > cutoff) {
          sign = c[k] < 0.0 ? -1.0 : 1.0;
          break;
        }
    }
    res.coefficients.col(j) = sign * c;
    res.sign_rules.push_back(rule);
  }
  const double tol = zero_tolerance(res.eigenvalues);
  for (int j = 0; j < q; ++j)
    if (res.eigenvalues[j] > tol) res.positive_variance += res.eigenvalues[j];
  res.trace = (gram * xi).trace();
  int positive = 0;
  while (positive < q && res.eigenvalues[positive] > tol) ++positive;
  res.retained = std::min(num_components, positive);
  return res;
}

FpcaResult eigen_decompose(const CovFit& fit, int num_components) {
  return eigen_decompose(fit.xi, fit.basis, num_components);
}

double first_pc_mise(const FpcaResult& result, const std::function<double(double)>& true_phi,
                     std::span<const double> grid) {
  if (result.eigenvalues.size() == 0) throw InvalidArgument("first_pc_mise: empty decomposition");
  const Eigen::VectorXd est = result.eigenfunction(0, grid);
  Eigen::VectorXd truth(est.size());
  for (Eigen::Index a = 0; a < truth.size(); ++a) truth[a] = true_phi(grid[a]);
  const double inner = trapezoid(Eigen::VectorXd(est.cwiseProduct(truth)), grid);
  const Eigen::VectorXd diff = (inner < 0.0 ? -est : est) - truth;
  return trapezoid(Eigen::VectorXd(diff.cwiseAbs2()), grid);
}

double reconstruct_cov(const FpcaResult& result, int p, double t, double s) {
  if (p < 0 || p > result.retained) throw InvalidArgument("reconstruct_cov: p exceeds the retained components");
  double sum = 0.0;
  for (int j = 0; j < p; ++j) sum += result.eigenvalues[j] * result.eigenfunction(j, t) * result.eigenfunction(j, s);
  return sum;
}

}  // namespace iifpca
