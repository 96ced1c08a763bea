#include "iifpca/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "iifpca/error.hpp"

namespace iifpca {

std::vector<RawCovPoint> raw_cov_points(const LongitudinalDataset& data, const MeanFit& mean,
                                        std::span<const PairWeight> pair_weights) {
  std::vector<std::vector<double>> resid(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    for (const Observation& o : data[i].outcomes) resid[i].push_back(o.value - mean.evaluate(o.time));

  std::vector<RawCovPoint> out;
  out.reserve(pair_weights.size());
  for (const PairWeight& p : pair_weights) {
    if (p.subject >= data.size()) throw InvalidArgument("raw_cov_points: pair refers to an unknown subject");
    const Subject& s = data[p.subject];
    const auto m = static_cast<int>(s.outcomes.size());
    if (p.j == p.l || p.j < 0 || p.l < 0 || p.j >= m || p.l >= m)
      throw InvalidArgument("raw_cov_points: invalid pair for subject " + s.id);
    if (!(p.weight >= 0.0) || !std::isfinite(p.weight)) {
      std::ostringstream os;
      os << "subject " << s.id << " at (" << s.outcomes[p.j].time << ", " << s.outcomes[p.l].time
         << "): pair weight " << p.weight;
      throw DataError("negative or non-finite pair weight", {os.str()});
    }
    out.push_back({p.subject, p.j, p.l, s.outcomes[p.j].time, s.outcomes[p.l].time,
                   resid[p.subject][p.j] * resid[p.subject][p.l], p.weight});
  }
  return out;
}

Eigen::MatrixXd duplication_matrix(int q) {
  Eigen::MatrixXd dup = Eigen::MatrixXd::Zero(q * q, half_dim(q));
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) dup(a * q + b, half_index(std::min(a, b), std::max(a, b), q)) = 1.0;
  return dup;
}

Eigen::VectorXd half_vectorize(const Eigen::MatrixXd& xi) {
  const int q = static_cast<int>(xi.rows());
  Eigen::VectorXd half(half_dim(q));
  for (int a = 0; a < q; ++a)
    for (int b = a; b < q; ++b) half[half_index(a, b, q)] = xi(a, b);
  return half;
}

Eigen::MatrixXd from_half(const Eigen::VectorXd& half, int q) {
  if (half.size() != half_dim(q)) throw InvalidArgument("from_half: length mismatch");
  Eigen::MatrixXd xi(q, q);
  for (int a = 0; a < q; ++a)
    for (int b = a; b < q; ++b) xi(a, b) = xi(b, a) = half[half_index(a, b, q)];
  return xi;
}

double CovFit::evaluate(double t, double s) const {
  const LocalBasis bt = basis.eval_local(t);
  const LocalBasis bs = basis.eval_local(s);
  const int l = basis.order();
  return bt.values.dot(xi.block(bt.first, bs.first, l, l) * bs.values);
}

Eigen::MatrixXd CovFit::evaluate_grid(std::span<const double> grid) const {
  const Eigen::MatrixXd b = basis.eval_matrix(grid);
  Eigen::MatrixXd out = b * xi * b.transpose();
  // exact symmetry regardless of floating-point association
  return 0.5 * (out + out.transpose());
}

double CovFit::theory_bound() const {
  return lambda * std::pow(static_cast<double>(basis.dim()), 2.0 * penalty_order - 2.0);
}

double CovFit::roughness() const {
  const int q = basis.dim();
  Eigen::VectorXd eta(q * q);
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) eta[a * q + b] = xi(a, b);
  return eta.dot(penalty_cov(basis, penalty_order) * eta);
}

namespace {

/// Local basis values at both ends of every pair point, reused across lambdas.
struct PairDesign {
  std::vector<LocalBasis> at_t;
  std::vector<LocalBasis> at_s;

  PairDesign(std::span<const RawCovPoint> points, const SplineBasis& basis) {
    at_t.reserve(points.size());
    at_s.reserve(points.size());
    for (const RawCovPoint& p : points) {
      at_t.push_back(basis.eval_local(p.t));
      at_s.push_back(basis.eval_local(p.s));
    }
  }
};

/// Sparse reduced design row: x_k for k = (min(a,b), max(a,b)) accumulates B_a(t) B_b(s).
void reduced_row(const LocalBasis& bt, const LocalBasis& bs, int q, std::vector<std::pair<int, double>>& row) {
  row.clear();
  const auto l = static_cast<int>(bt.values.size());
  for (int x = 0; x < l; ++x)
    for (int y = 0; y < l; ++y) {
      const int a = bt.first + x;
      const int b = bs.first + y;
      row.emplace_back(half_index(std::min(a, b), std::max(a, b), q), bt.values[x] * bs.values[y]);
    }
  std::sort(row.begin(), row.end(), [](const auto& u, const auto& v) { return u.first < v.first; });
  std::size_t w = 0;
  for (std::size_t r = 0; r < row.size(); ++r) {
    if (w > 0 && row[w - 1].first == row[r].first)
      row[w - 1].second += row[r].second;
    else
      row[w++] = row[r];
  }
  row.resize(w);
}

void accumulate(std::span<const RawCovPoint> points, const PairDesign& design, int q, std::size_t k,
                std::vector<std::pair<int, double>>& row, Eigen::MatrixXd& gram, Eigen::VectorXd& rhs, double& yy) {
  const double w = points[k].weight;
  const double g = points[k].value;
  if (!(w >= 0.0) || !std::isfinite(w) || !std::isfinite(g))
    throw DataError("fit_cov: negative or non-finite pair weight or value");
  reduced_row(design.at_t[k], design.at_s[k], q, row);
  for (const auto& [i1, v1] : row) {
    rhs[i1] += w * g * v1;
    for (const auto& [i2, v2] : row) gram(i1, i2) += w * v1 * v2;
  }
  yy += w * g * g;
}

Eigen::MatrixXd reduced_penalty(const SplineBasis& basis, int penalty_order) {
  const Eigen::MatrixXd dup = duplication_matrix(basis.dim());
  return dup.transpose() * penalty_cov(basis, penalty_order) * dup;
}

PenalizedLeastSquares build_system(std::span<const RawCovPoint> points, const PairDesign& design,
                                   const SplineBasis& basis, int penalty_order) {
  const int q = basis.dim();
  const int r = half_dim(q);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(r, r);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(r);
  double yy = 0.0;
  std::vector<std::pair<int, double>> row;
  for (std::size_t k = 0; k < points.size(); ++k) accumulate(points, design, q, k, row, gram, rhs, yy);
  return PenalizedLeastSquares(std::move(gram), std::move(rhs), yy, static_cast<double>(points.size()),
                               reduced_penalty(basis, penalty_order));
}

double direct_rss(std::span<const RawCovPoint> points, const PairDesign& design, const Eigen::MatrixXd& xi) {
  double rss = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const LocalBasis& bt = design.at_t[k];
    const LocalBasis& bs = design.at_s[k];
    const auto l = bt.values.size();
    const double fitted = bt.values.dot(xi.block(bt.first, bs.first, l, l) * bs.values);
    const double r = points[k].value - fitted;
    rss += points[k].weight * r * r;
  }
  return rss;
}

CovFit make_fit(std::span<const RawCovPoint> points, const PairDesign& design, const SplineBasis& basis,
                int penalty_order, const PenalizedLeastSquares& system, double lambda) {
  PenalizedSolution sol = system.solve(lambda);
  CovFit fit{basis, penalty_order, sol.coef, from_half(sol.coef, basis.dim()), lambda, sol.trace, 0.0, 0.0,
             points.size()};
  fit.rss = direct_rss(points, design, fit.xi);
  fit.gcv_score = gcv_score(fit.rss, sol.trace, system.num_obs());
  return fit;
}

GcvCurve scan(std::span<const RawCovPoint> points, const PairDesign& design, const SplineBasis& basis,
              int penalty_order, const PenalizedLeastSquares& system, std::span<const double> grid) {
  GcvCurve curve;
  double best = std::numeric_limits<double>::infinity();
  for (const double lambda : grid) {
    double score = std::numeric_limits<double>::infinity();
    try {
      score = make_fit(points, design, basis, penalty_order, system, lambda).gcv_score;
    } catch (const SingularSystemError&) {
    }
    if (score < best) {
      best = score;
      curve.best = curve.lambdas.size();
    }
    curve.lambdas.push_back(lambda);
    curve.scores.push_back(score);
  }
  if (!std::isfinite(best)) throw Error("gcv_select_cov: every grid point has an infinite GCV score");
  return curve;
}

}  // namespace

PenalizedLeastSquares cov_system(std::span<const RawCovPoint> points, const SplineBasis& basis, int penalty_order) {
  return build_system(points, PairDesign(points, basis), basis, penalty_order);
}

CovFit fit_cov(std::span<const RawCovPoint> points, const SplineBasis& basis, double lambda, int penalty_order) {
  const PairDesign design(points, basis);
  return make_fit(points, design, basis, penalty_order, build_system(points, design, basis, penalty_order), lambda);
}

GcvCurve gcv_curve_cov(std::span<const RawCovPoint> points, const SplineBasis& basis,
                       std::span<const double> lambda_grid, int penalty_order) {
  if (lambda_grid.empty()) throw InvalidArgument("gcv: empty lambda grid");
  const PairDesign design(points, basis);
  return scan(points, design, basis, penalty_order, build_system(points, design, basis, penalty_order), lambda_grid);
}

std::vector<double> default_cov_lambda_grid(std::span<const RawCovPoint> points, const SplineBasis& basis,
                                            int penalty_order) {
  return cov_system(points, basis, penalty_order).lambda_grid();
}

CovFit gcv_select_cov(std::span<const RawCovPoint> points, const SplineBasis& basis,
                      std::span<const double> lambda_grid, int penalty_order, GcvCurve* curve_out) {
  const PairDesign design(points, basis);
  const PenalizedLeastSquares system = build_system(points, design, basis, penalty_order);
  std::vector<double> grid(lambda_grid.begin(), lambda_grid.end());
  if (grid.empty()) grid = system.lambda_grid();

  GcvCurve curve = scan(points, design, basis, penalty_order, system, grid);
  CovFit fit = make_fit(points, design, basis, penalty_order, system, curve.best_lambda());
  if (curve_out) *curve_out = std::move(curve);
  return fit;
}

CovFit subject_cv_select_cov(std::span<const RawCovPoint> points, const SplineBasis& basis,
                             std::span<const double> lambda_grid, int penalty_order, GcvCurve* curve_out) {
  const int q = basis.dim();
  const int r = half_dim(q);
  const PairDesign design(points, basis);
  const PenalizedLeastSquares system = build_system(points, design, basis, penalty_order);
  std::vector<double> grid(lambda_grid.begin(), lambda_grid.end());
  if (grid.empty()) grid = system.lambda_grid();

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < points.size(); ++k) groups[points[k].subject].push_back(k);
  if (groups.size() < 2) throw InvalidArgument("subject_cv_select_cov: need pairs from at least two subjects");

  std::vector<Eigen::MatrixXd> grams;
  std::vector<Eigen::VectorXd> rhss;
  std::vector<std::pair<int, double>> row;
  for (const auto& [subject, idx] : groups) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(r, r);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(r);
    double yy = 0.0;
    for (const std::size_t k : idx) accumulate(points, design, q, k, row, g, b, yy);
    grams.push_back(std::move(g));
    rhss.push_back(std::move(b));
  }

  GcvCurve curve;
  double best = std::numeric_limits<double>::infinity();
  for (const double lambda : grid) {
    double loss = 0.0;
    std::size_t i = 0;
    for (const auto& [subject, idx] : groups) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(system.gram() - grams[i] + 0.5 * lambda * system.penalty());
      const Eigen::VectorXd h = ldlt.solve(system.rhs() - rhss[i]);
      ++i;
      if (ldlt.info() != Eigen::Success || !h.allFinite()) {
        loss = std::numeric_limits<double>::infinity();
        break;
      }
      const Eigen::MatrixXd xi = from_half(h, q);
      for (const std::size_t k : idx) {
        const LocalBasis& bt = design.at_t[k];
        const LocalBasis& bs = design.at_s[k];
        const auto l = bt.values.size();
        const double res = points[k].value - bt.values.dot(xi.block(bt.first, bs.first, l, l) * bs.values);
        loss += points[k].weight * res * res;
      }
    }
    loss /= static_cast<double>(points.size());
    if (loss < best) {
      best = loss;
      curve.best = curve.lambdas.size();
    }
    curve.lambdas.push_back(lambda);
    curve.scores.push_back(loss);
  }
  if (!std::isfinite(best)) throw Error("subject_cv_select_cov: every grid point has an infinite CV score");
  CovFit fit = make_fit(points, design, basis, penalty_order, system, curve.best_lambda());
  if (curve_out) *curve_out = std::move(curve);
  return fit;
}

double evaluate_cov(const CovFit& fit, double t, double s) { return fit.evaluate(t, s); }

}  // namespace iifpca
