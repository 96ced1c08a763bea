#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace iifpca {

/// Nodes and weights of a quadrature rule on a fixed interval.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule with `num_nodes` points mapped onto [a, b].
QuadratureRule gauss_legendre_rule(int num_nodes, double a = -1.0, double b = 1.0);

/// Composite Gauss-Legendre rule: `nodes_per_interval` points on every
/// nonempty interval between consecutive breakpoints.
QuadratureRule composite_gauss_legendre(std::span<const double> breakpoints, int nodes_per_interval);

/// Integral of f over [a, b] with an n-point Gauss-Legendre rule.
/// Exact for polynomials of degree <= 2n - 1.
double gauss_legendre_integrate(const std::function<double(double)>& f, double a, double b,
                                int nodes_per_interval);

/// Same, applied on every interval of `breakpoints`.
double gauss_legendre_integrate(const std::function<double(double)>& f,
                                std::span<const double> breakpoints, int nodes_per_interval);

/// Knots of a spline space of order l on [0, tau].
///
/// Interior knots lie strictly inside (0, tau) and are nondecreasing; the full
/// knot vector repeats 0 and tau l times each.
class KnotVector {
 public:
  KnotVector(double domain_end, std::vector<double> interior_knots, int order);

  static KnotVector uniform(double domain_end, int num_interior_knots, int order);
  /// Interior knots at equally spaced empirical quantiles of `sample`.
  static KnotVector quantile(double domain_end, int num_interior_knots, int order,
                             std::span<const double> sample);

  double domain_end() const noexcept { return domain_end_; }
  int order() const noexcept { return order_; }
  int num_interior() const noexcept { return static_cast<int>(interior_.size()); }
  const std::vector<double>& interior() const noexcept { return interior_; }
  const std::vector<double>& full() const noexcept { return full_; }

  /// 0, interior knots, tau (with repeats).
  std::vector<double> breakpoints() const;
  /// Distinct breakpoints; the knot intervals with positive length.
  std::vector<double> distinct_breakpoints() const;

  /// max spacing / min spacing between consecutive breakpoints (inf when knots repeat).
  double mesh_ratio() const;

 private:
  double domain_end_;
  std::vector<double> interior_;
  int order_;
  std::vector<double> full_;
};

/// Values of the (at most `order`) basis functions that are nonzero at a point.
struct LocalBasis {
  int first = 0;           ///< index of the first nonzero basis function
  Eigen::VectorXd values;  ///< length order
};

/// Normalized B-spline basis B_1..B_q, q = K + l, with cached Gram and
/// derivative-Gram matrices.
///
/// All integrals over [0, tau] use composite Gauss-Legendre with l nodes per knot
/// interval, which is exact for every product of two basis functions or their
/// derivatives. Instances are immutable after construction.
class SplineBasis {
 public:
  explicit SplineBasis(KnotVector knots);

  const KnotVector& knots() const noexcept { return knots_; }
  int dim() const noexcept { return dim_; }
  int order() const noexcept { return knots_.order(); }
  double domain_end() const noexcept { return knots_.domain_end(); }

  /// B^{(deriv)}(t), length q. At t = tau the last interval is used (left limit).
  Eigen::VectorXd eval(double t, int deriv = 0) const;
  LocalBasis eval_local(double t, int deriv = 0) const;
  /// Rows are B(t_a)^T for each grid point.
  Eigen::MatrixXd eval_matrix(std::span<const double> ts, int deriv = 0) const;

  /// W = int B B^T.
  const Eigen::MatrixXd& gram() const noexcept { return derivative_gram_[0]; }
  /// int B^{(k)} B^{(k)T}, 0 <= k <= l - 1.
  const Eigen::MatrixXd& derivative_gram(int k) const;
  /// int B_j over [0, tau].
  const Eigen::VectorXd& integrals() const noexcept { return integrals_; }

  /// Composite rule with l nodes per knot interval.
  const QuadratureRule& quadrature() const noexcept { return quadrature_; }

 private:
  int find_span(double t) const;

  KnotVector knots_;
  int dim_;
  QuadratureRule quadrature_;
  std::vector<Eigen::MatrixXd> derivative_gram_;
  Eigen::VectorXd integrals_;
};

/// Equally spaced interior knots.
SplineBasis build_basis(double domain_end, int num_interior_knots, int order = 4);

/// Number of interior knots floor(n^eta) used by default for n subjects.
int default_num_interior_knots(int num_subjects, double eta = 0.3);

/// Q_mu = int {B^{(m)}(t)}^{x2} dt, q x q.
Eigen::MatrixXd penalty_mean(const SplineBasis& basis, int m);

/// Q_C for the tensor basis D(t, s) = B(t) (x) B(s), q^2 x q^2:
///   sum_{i+j=m} binom(m, i) int int (d_t^i d_s^j f)^2,
/// assembled as sum_i binom(m, i) P_i (x) P_{m-i} with P_k = derivative_gram(k).
/// Coefficient index a*q + b multiplies B_a(t) B_b(s).
Eigen::MatrixXd penalty_cov(const SplineBasis& basis, int m);

Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace iifpca
