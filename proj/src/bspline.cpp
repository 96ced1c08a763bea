#include "iifpca/bspline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "iifpca/error.hpp"

namespace iifpca {

QuadratureRule gauss_legendre_rule(int num_nodes, double a, double b) {
  if (num_nodes < 1) throw InvalidArgument("gauss_legendre_rule: need at least one node");
  if (!(a < b)) throw InvalidArgument("gauss_legendre_rule: need a < b");
  QuadratureRule rule;
  rule.nodes.resize(num_nodes);
  rule.weights.resize(num_nodes);
  const int n = num_nodes;
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  // Newton iteration on P_n from the Chebyshev-like initial guesses; roots come in symmetric pairs.
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = mid - half * x;
    rule.nodes[n - 1 - i] = mid + half * x;
    rule.weights[i] = half * w;
    rule.weights[n - 1 - i] = half * w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = mid;
  return rule;
}

QuadratureRule composite_gauss_legendre(std::span<const double> breakpoints, int nodes_per_interval) {
  QuadratureRule out;
  const QuadratureRule ref = gauss_legendre_rule(nodes_per_interval);
  for (std::size_t k = 0; k + 1 < breakpoints.size(); ++k) {
    const double lo = breakpoints[k];
    const double hi = breakpoints[k + 1];
    if (hi < lo) throw InvalidArgument("composite_gauss_legendre: breakpoints must be nondecreasing");
    if (hi == lo) continue;
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    for (int j = 0; j < nodes_per_interval; ++j) {
      out.nodes.push_back(mid + half * ref.nodes[j]);
      out.weights.push_back(half * ref.weights[j]);
    }
  }
  return out;
}

double gauss_legendre_integrate(const std::function<double(double)>& f, double a, double b,
                                int nodes_per_interval) {
  const QuadratureRule rule = gauss_legendre_rule(nodes_per_interval, a, b);
  double sum = 0.0;
  for (int i = 0; i < nodes_per_interval; ++i) sum += rule.weights[i] * f(rule.nodes[i]);
  return sum;
}

double gauss_legendre_integrate(const std::function<double(double)>& f,
                                std::span<const double> breakpoints, int nodes_per_interval) {
  const QuadratureRule rule = composite_gauss_legendre(breakpoints, nodes_per_interval);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) sum += rule.weights[i] * f(rule.nodes[i]);
  return sum;
}

// ---------------------------------------------------------------------------

KnotVector::KnotVector(double domain_end, std::vector<double> interior_knots, int order)
    : domain_end_(domain_end), interior_(std::move(interior_knots)), order_(order) {
  if (!(domain_end_ > 0.0) || !std::isfinite(domain_end_))
    throw InvalidArgument("KnotVector: domain end must be positive, got " + std::to_string(domain_end_));
  if (order_ < 2) throw InvalidArgument("KnotVector: order must be >= 2, got " + std::to_string(order_));
  for (std::size_t i = 0; i < interior_.size(); ++i) {
    const double k = interior_[i];
    if (!(k > 0.0 && k < domain_end_))
      throw InvalidArgument("KnotVector: interior knot " + std::to_string(k) + " outside (0, tau)");
    if (i > 0 && k < interior_[i - 1]) throw InvalidArgument("KnotVector: interior knots must be nondecreasing");
  }
  full_.reserve(interior_.size() + 2 * order_);
  full_.insert(full_.end(), order_, 0.0);
  full_.insert(full_.end(), interior_.begin(), interior_.end());
  full_.insert(full_.end(), order_, domain_end_);
}

KnotVector KnotVector::uniform(double domain_end, int num_interior_knots, int order) {
  if (num_interior_knots < 0) throw InvalidArgument("KnotVector: number of interior knots must be >= 0");
  std::vector<double> interior(num_interior_knots);
  for (int k = 0; k < num_interior_knots; ++k)
    interior[k] = domain_end * static_cast<double>(k + 1) / static_cast<double>(num_interior_knots + 1);
  return KnotVector(domain_end, std::move(interior), order);
}

KnotVector KnotVector::quantile(double domain_end, int num_interior_knots, int order,
                                std::span<const double> sample) {
  if (num_interior_knots < 0) throw InvalidArgument("KnotVector: number of interior knots must be >= 0");
  if (sample.empty() && num_interior_knots > 0) throw InvalidArgument("KnotVector::quantile: empty sample");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> interior;
  for (int k = 0; k < num_interior_knots; ++k) {
    const double p = static_cast<double>(k + 1) / static_cast<double>(num_interior_knots + 1);
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double knot = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    // keep strictly inside the domain
    const double eps = 1e-9 * domain_end;
    knot = std::clamp(knot, eps, domain_end - eps);
    if (!interior.empty()) knot = std::max(knot, interior.back());
    interior.push_back(knot);
  }
  return KnotVector(domain_end, std::move(interior), order);
}

std::vector<double> KnotVector::breakpoints() const {
  std::vector<double> out;
  out.reserve(interior_.size() + 2);
  out.push_back(0.0);
  out.insert(out.end(), interior_.begin(), interior_.end());
  out.push_back(domain_end_);
  return out;
}

std::vector<double> KnotVector::distinct_breakpoints() const {
  std::vector<double> out = breakpoints();
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double KnotVector::mesh_ratio() const {
  const std::vector<double> b = breakpoints();
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (std::size_t i = 1; i < b.size(); ++i) {
    const double h = b[i] - b[i - 1];
    lo = std::min(lo, h);
    hi = std::max(hi, h);
  }
  if (lo == 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

// ---------------------------------------------------------------------------

SplineBasis::SplineBasis(KnotVector knots)
    : knots_(std::move(knots)), dim_(knots_.num_interior() + knots_.order()) {
  const int l = knots_.order();
  const std::vector<double> breaks = knots_.distinct_breakpoints();
  quadrature_ = composite_gauss_legendre(breaks, l);

  derivative_gram_.assign(l, Eigen::MatrixXd::Zero(dim_, dim_));
  for (std::size_t n = 0; n < quadrature_.nodes.size(); ++n) {
    const double t = quadrature_.nodes[n];
    const double w = quadrature_.weights[n];
    for (int k = 0; k < l; ++k) {
      const LocalBasis local = eval_local(t, k);
      derivative_gram_[k].block(local.first, local.first, l, l).noalias() +=
          w * local.values * local.values.transpose();
    }
  }
  for (Eigen::MatrixXd& g : derivative_gram_) g = 0.5 * (g + g.transpose()).eval();

  const std::vector<double>& u = knots_.full();
  integrals_.resize(dim_);
  for (int j = 0; j < dim_; ++j) integrals_[j] = (u[j + l] - u[j]) / l;
}

const Eigen::MatrixXd& SplineBasis::derivative_gram(int k) const {
  if (k < 0 || k >= order())
    throw InvalidArgument("derivative_gram: derivative order " + std::to_string(k) + " outside [0, l-1]");
  return derivative_gram_[k];
}

int SplineBasis::find_span(double t) const {
  const std::vector<double>& u = knots_.full();
  const auto it = std::upper_bound(u.begin(), u.end(), t);
  const int span = static_cast<int>(it - u.begin()) - 1;
  return std::min(span, dim_ - 1);
}

LocalBasis SplineBasis::eval_local(double t, int deriv) const {
  const double tau = domain_end();
  if (!(t >= 0.0 && t <= tau))
    throw InvalidArgument("eval_basis: t = " + std::to_string(t) + " outside [0, " + std::to_string(tau) + "]");
  const int l = order();
  const int p = l - 1;
  if (deriv < 0 || deriv > p)
    throw InvalidArgument("eval_basis: derivative order " + std::to_string(deriv) + " outside [0, l-1]");

  // Derivatives of the nonzero B-splines (Piegl & Tiller, algorithm A2.3).
  const std::vector<double>& u = knots_.full();
  const int span = find_span(t);
  Eigen::MatrixXd ndu(l, l);
  Eigen::VectorXd left(l), right(l);
  ndu(0, 0) = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - u[span + 1 - j];
    right[j] = u[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu(j, r) = right[r + 1] + left[j - r];
      const double temp = ndu(r, j - 1) / ndu(j, r);
      ndu(r, j) = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu(j, j) = saved;
  }

  LocalBasis out;
  out.first = span - p;
  out.values.resize(l);
  if (deriv == 0) {
    for (int j = 0; j <= p; ++j) out.values[j] = ndu(j, p);
    return out;
  }

  Eigen::MatrixXd a(2, l);
  for (int r = 0; r <= p; ++r) {
    int s1 = 0;
    int s2 = 1;
    a(0, 0) = 1.0;
    double d = 0.0;
    for (int k = 1; k <= deriv; ++k) {
      d = 0.0;
      const int rk = r - k;
      const int pk = p - k;
      if (r >= k) {
        a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
        d = a(s2, 0) * ndu(rk, pk);
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
        d += a(s2, j) * ndu(rk + j, pk);
      }
      if (r <= pk) {
        a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
        d += a(s2, k) * ndu(r, pk);
      }
      std::swap(s1, s2);
    }
    out.values[r] = d;
  }
  double factor = p;
  for (int k = 1; k < deriv; ++k) factor *= (p - k);
  out.values *= factor;
  return out;
}

Eigen::VectorXd SplineBasis::eval(double t, int deriv) const {
  const LocalBasis local = eval_local(t, deriv);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
  out.segment(local.first, order()) = local.values;
  return out;
}

Eigen::MatrixXd SplineBasis::eval_matrix(std::span<const double> ts, int deriv) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ts.size()), dim_);
  for (std::size_t a = 0; a < ts.size(); ++a) {
    const LocalBasis local = eval_local(ts[a], deriv);
    out.row(static_cast<Eigen::Index>(a)).segment(local.first, order()) = local.values.transpose();
  }
  return out;
}

SplineBasis build_basis(double domain_end, int num_interior_knots, int order) {
  return SplineBasis(KnotVector::uniform(domain_end, num_interior_knots, order));
}

int default_num_interior_knots(int num_subjects, double eta) {
  if (num_subjects < 1) throw InvalidArgument("default_num_interior_knots: need at least one subject");
  // small slack so that exact integer powers are not rounded down by floating error
  return static_cast<int>(std::floor(std::pow(static_cast<double>(num_subjects), eta) + 1e-9));
}

Eigen::MatrixXd penalty_mean(const SplineBasis& basis, int m) {
  if (m < 1 || m > basis.order() - 1)
    throw InvalidArgument("penalty_mean: penalty order " + std::to_string(m) + " outside [1, l-1]");
  return basis.derivative_gram(m);
}

Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Eigen::MatrixXd penalty_cov(const SplineBasis& basis, int m) {
  if (m < 1 || m > basis.order() - 1)
    throw InvalidArgument("penalty_cov: penalty order " + std::to_string(m) + " outside [1, l-1]");
  const int q = basis.dim();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(q * q, q * q);
  double binom = 1.0;
  for (int i = 0; i <= m; ++i) {
    out += binom * kronecker(basis.derivative_gram(i), basis.derivative_gram(m - i));
    binom = binom * (m - i) / (i + 1);
  }
  return out;
}

}  // namespace iifpca
