#pragma once

// Reference implementations used as independent oracles. Nothing here calls the
// library's numerical routines.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Cox-de Boor recursion on the full knot vector, right-continuous except at the last knot.
inline double cox_de_boor(const std::vector<double>& knots, int i, int order, double t) {
  if (order == 1) {
    const double lo = knots[i], hi = knots[i + 1];
    const double end = knots.back();
    if (t == end) return (lo < hi && hi == end) ? 1.0 : 0.0;
    return (lo <= t && t < hi) ? 1.0 : 0.0;
  }
  double v = 0.0;
  const double d1 = knots[i + order - 1] - knots[i];
  const double d2 = knots[i + order] - knots[i + 1];
  if (d1 > 0.0) v += (t - knots[i]) / d1 * cox_de_boor(knots, i, order - 1, t);
  if (d2 > 0.0) v += (knots[i + order] - t) / d2 * cox_de_boor(knots, i + 1, order - 1, t);
  return v;
}

/// Derivative of order `deriv` by the recursive derivative formula.
inline double cox_de_boor_deriv(const std::vector<double>& knots, int i, int order, double t, int deriv) {
  if (deriv == 0) return cox_de_boor(knots, i, order, t);
  double v = 0.0;
  const double d1 = knots[i + order - 1] - knots[i];
  const double d2 = knots[i + order] - knots[i + 1];
  if (d1 > 0.0) v += (order - 1) / d1 * cox_de_boor_deriv(knots, i, order - 1, t, deriv - 1);
  if (d2 > 0.0) v -= (order - 1) / d2 * cox_de_boor_deriv(knots, i + 1, order - 1, t, deriv - 1);
  return v;
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
inline void legendre_rule(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

/// Integral over [a, b] split into `pieces` equal panels with an n-point rule on each.
inline double integrate(const std::function<double(double)>& f, double a, double b, int pieces = 64, int n = 10) {
  std::vector<double> x, w;
  legendre_rule(n, x, w);
  double s = 0.0;
  const double h = (b - a) / pieces;
  for (int p = 0; p < pieces; ++p) {
    const double lo = a + p * h;
    for (int k = 0; k < n; ++k) s += 0.5 * h * w[k] * f(lo + 0.5 * h * (x[k] + 1.0));
  }
  return s;
}

/// Same, but panels are the given breakpoints (integrand smooth within each).
inline double integrate_pieces(const std::function<double(double)>& f, const std::vector<double>& breaks, int n = 10) {
  std::vector<double> x, w;
  legendre_rule(n, x, w);
  double s = 0.0;
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double lo = breaks[p], hi = breaks[p + 1];
    if (!(hi > lo)) continue;
    for (int k = 0; k < n; ++k) s += 0.5 * (hi - lo) * w[k] * f(lo + 0.5 * (hi - lo) * (x[k] + 1.0));
  }
  return s;
}

/// Full-rank weighted ridge-type solve from the explicit design: argmin (y - Xc)'W(y - Xc) + (lambda/2) c'Qc.
inline Eigen::VectorXd dense_penalized_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                             const Eigen::VectorXd& w, const Eigen::MatrixXd& q, double lambda) {
  const Eigen::MatrixXd lhs = x.transpose() * w.asDiagonal() * x + 0.5 * lambda * q;
  return lhs.fullPivLu().solve(x.transpose() * w.asDiagonal() * y);
}

/// Textbook GCV with the N x N smoother A = W^{1/2} X (X'WX + lambda/2 Q)^{-1} X' W^{1/2}:
///   N^{-1} |(I - A) W^{1/2} y|^2 / [N^{-1} tr(I - A)]^2.
inline double materialized_gcv(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                               const Eigen::MatrixXd& q, double lambda) {
  const Eigen::Index n = x.rows();
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd xw = sw.asDiagonal() * x;
  const Eigen::MatrixXd inner = (xw.transpose() * xw + 0.5 * lambda * q).inverse();
  const Eigen::MatrixXd a = xw * inner * xw.transpose();
  const Eigen::MatrixXd i_a = Eigen::MatrixXd::Identity(n, n) - a;
  const Eigen::VectorXd r = i_a * sw.cwiseProduct(y);
  const double num = r.squaredNorm() / n;
  const double den = i_a.trace() / n;
  return num / (den * den);
}

inline double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace oracle
