#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace iifpca {

/// n equally spaced points covering [0, tau] including both ends.
std::vector<double> uniform_grid(double domain_end, int points);

/// Trapezoid rule for values sampled on a (not necessarily uniform) grid.
double trapezoid(std::span<const double> values, std::span<const double> grid);
double trapezoid(const Eigen::VectorXd& values, std::span<const double> grid);
/// Tensor-product trapezoid rule; values(a, b) sits at (grid[a], grid[b]).
double trapezoid_2d(const Eigen::MatrixXd& values, std::span<const double> grid);

}  // namespace iifpca
