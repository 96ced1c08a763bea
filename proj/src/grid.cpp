#include "iifpca/grid.hpp"

#include "iifpca/error.hpp"

namespace iifpca {

std::vector<double> uniform_grid(double domain_end, int points) {
  if (points < 2 || !(domain_end > 0.0)) throw InvalidArgument("uniform_grid: need at least 2 points on [0, tau]");
  std::vector<double> g(points);
  for (int a = 0; a < points; ++a) g[a] = domain_end * a / (points - 1);
  g.back() = domain_end;
  return g;
}

double trapezoid(std::span<const double> values, std::span<const double> grid) {
  if (values.size() != grid.size()) throw InvalidArgument("trapezoid: values and grid differ in length");
  double sum = 0.0;
  for (std::size_t a = 1; a < grid.size(); ++a) sum += 0.5 * (values[a] + values[a - 1]) * (grid[a] - grid[a - 1]);
  return sum;
}

double trapezoid(const Eigen::VectorXd& values, std::span<const double> grid) {
  return trapezoid(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())), grid);
}

double trapezoid_2d(const Eigen::MatrixXd& values, std::span<const double> grid) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  if (values.rows() != n || values.cols() != n) throw InvalidArgument("trapezoid_2d: grid mismatch");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (Eigen::Index a = 1; a < n; ++a) {
    const double h = grid[a] - grid[a - 1];
    w[a - 1] += 0.5 * h;
    w[a] += 0.5 * h;
  }
  return w.dot(values * w);
}

}  // namespace iifpca
