#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "fixtures.hpp"
#include "iifpca/bspline.hpp"
#include "iifpca/covariance.hpp"
#include "iifpca/error.hpp"
#include "iifpca/mean.hpp"
#include "oracles.hpp"

using namespace iifpca;

namespace {

// Random ordered pairs, both orientations present, grouped by subject.
std::vector<RawCovPoint> random_pairs(std::mt19937_64& rng, int subjects, int visits, double tau,
                                      const std::function<double(double, double)>& g, double noise_sd) {
  std::uniform_real_distribution<double> u(0.0, tau), wu(0.3, 3.0);
  std::normal_distribution<double> e;
  std::vector<RawCovPoint> out;
  for (int i = 0; i < subjects; ++i) {
    std::vector<double> t(visits), w(visits);
    for (int j = 0; j < visits; ++j) t[j] = u(rng), w[j] = wu(rng);
    for (int j = 0; j < visits; ++j)
      for (int l = j + 1; l < visits; ++l) {
        const double v = g(t[j], t[l]) + noise_sd * e(rng);
        out.push_back({static_cast<std::size_t>(i), j, l, t[j], t[l], v, w[j] * w[l]});
        out.push_back({static_cast<std::size_t>(i), l, j, t[l], t[j], v, w[j] * w[l]});
      }
  }
  return out;
}

// Explicit design in the reduced symmetric parameterization, built from Cox-de Boor values.
struct Dense {
  Eigen::MatrixXd x;
  Eigen::VectorXd y, w;
  Eigen::MatrixXd q;
};

Dense dense_design(const std::vector<RawCovPoint>& pts, const SplineBasis& basis, int m) {
  const int q = basis.dim();
  const Eigen::MatrixXd dup = duplication_matrix(q);
  const std::vector<double>& knots = basis.knots().full();
  Dense d;
  d.x.resize(static_cast<Eigen::Index>(pts.size()), half_dim(q));
  d.y.resize(d.x.rows());
  d.w.resize(d.x.rows());
  for (std::size_t r = 0; r < pts.size(); ++r) {
    Eigen::VectorXd full(q * q);
    for (int a = 0; a < q; ++a)
      for (int b = 0; b < q; ++b)
        full[a * q + b] = oracle::cox_de_boor(knots, a, basis.order(), pts[r].t) *
                          oracle::cox_de_boor(knots, b, basis.order(), pts[r].s);
    d.x.row(static_cast<Eigen::Index>(r)) = (full.transpose() * dup);
    d.y[static_cast<Eigen::Index>(r)] = pts[r].value;
    d.w[static_cast<Eigen::Index>(r)] = pts[r].weight;
  }
  d.q = dup.transpose() * penalty_cov(basis, m) * dup;
  return d;
}

}  // namespace

TEST_CASE("half-vectorization and duplication matrix") {
  for (int q = 1; q <= 7; ++q) {
    const Eigen::MatrixXd dup = duplication_matrix(q);
    CHECK(dup.rows() == q * q);
    CHECK(dup.cols() == half_dim(q));
    std::vector<int> seen(static_cast<std::size_t>(half_dim(q)), 0);
    for (int a = 0; a < q; ++a)
      for (int b = a; b < q; ++b) ++seen[static_cast<std::size_t>(half_index(a, b, q))];
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));

    const Eigen::MatrixXd r = Eigen::MatrixXd::Random(q, q);
    const Eigen::MatrixXd sym = r + r.transpose();
    const Eigen::VectorXd h = half_vectorize(sym);
    CHECK((from_half(h, q) - sym).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::VectorXd vec = Eigen::Map<const Eigen::VectorXd>(sym.data(), q * q);
    CHECK((dup * h - vec).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("symmetric fit matches the dense duplication-reduced solve") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 3; ++trial) {
    const auto pts = random_pairs(rng, 12, 5, 3.0, [](double t, double s) { return std::cos(t - s) + t * s / 9; }, 0.3);
    const SplineBasis basis = build_basis(3.0, 1 + trial, 4);
    const Dense d = dense_design(pts, basis, 2);
    for (const double lambda : {1e-3, 1.0, 1e2}) {
      const CovFit fit = fit_cov(pts, basis, lambda, 2);
      const Eigen::VectorXd ref = oracle::dense_penalized_solve(d.x, d.y, d.w, d.q, lambda);
      CHECK((fit.half - ref).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((fit.xi - fit.xi.transpose()).cwiseAbs().maxCoeff() == 0.0);
      CHECK(std::abs(fit.gcv_score - oracle::materialized_gcv(d.x, d.y, d.w, d.q, lambda)) <
            1e-9 * std::max(1.0, fit.gcv_score));
      CHECK(fit.num_points == pts.size());
      const Eigen::VectorXd vxi = Eigen::Map<const Eigen::VectorXd>(fit.xi.data(), fit.xi.size());
      CHECK(fit.roughness() == doctest::Approx(vxi.dot(penalty_cov(basis, 2) * vxi)).epsilon(1e-10));
    }
  }
}

TEST_CASE("noise-free rank-one surface in the spline space is recovered") {
  std::mt19937_64 rng(23);
  const SplineBasis basis = build_basis(3.0, 3, 4);
  Eigen::VectorXd g(basis.dim());
  for (int j = 0; j < basis.dim(); ++j) g[j] = 1.0 + 0.5 * std::cos(2.0 * j);
  auto f = [&](double t) { return basis.eval(t).dot(g); };
  const auto pts = random_pairs(rng, 60, 6, 3.0, [&](double t, double s) { return f(t) * f(s); }, 0.0);
  const CovFit fit = fit_cov(pts, basis, 1e-10, 2);
  const Eigen::MatrixXd truth = g * g.transpose();
  CHECK((fit.xi - truth).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(fit.evaluate(0.4, 2.2) == doctest::Approx(f(0.4) * f(2.2)).epsilon(1e-6));
  CHECK(fit.evaluate(0.4, 2.2) == doctest::Approx(fit.evaluate(2.2, 0.4)).epsilon(1e-14));
}

TEST_CASE("fitted surface is symmetric on a grid and roughness is monotone in lambda") {
  std::mt19937_64 rng(25);
  const auto pts = random_pairs(rng, 30, 6, 3.0, [](double t, double s) { return std::sin(t) * std::sin(s); }, 0.5);
  const SplineBasis basis = build_basis(3.0, 4, 4);
  double prev = std::numeric_limits<double>::infinity();
  for (const double lambda : default_cov_lambda_grid(pts, basis, 2)) {
    const CovFit fit = fit_cov(pts, basis, lambda, 2);
    CHECK(fit.roughness() <= prev * (1 + 1e-9) + 1e-12);
    prev = fit.roughness();
  }
  const CovFit fit = fit_cov(pts, basis, 0.1, 2);
  const std::vector<double> grid{0.0, 0.3, 1.1, 2.9, 3.0};
  const Eigen::MatrixXd c = fit.evaluate_grid(grid);
  CHECK((c - c.transpose()).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t a = 0; a < grid.size(); ++a)
    for (std::size_t b = 0; b < grid.size(); ++b)
      CHECK(c(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) ==
            doctest::Approx(evaluate_cov(fit, grid[a], grid[b])));
  CHECK(fit.theory_bound() == doctest::Approx(0.1 * std::pow(basis.dim(), 2)));
}

TEST_CASE("GCV curve matches the materialized smoother") {
  std::mt19937_64 rng(27);
  const auto pts = random_pairs(rng, 8, 5, 3.0, [](double t, double s) { return 1.0 + t * s; }, 1.0);
  const SplineBasis basis = build_basis(3.0, 2, 4);
  const Dense d = dense_design(pts, basis, 2);
  const std::vector<double> grid = default_cov_lambda_grid(pts, basis, 2);
  CHECK(grid.size() == 40);
  GcvCurve curve;
  const CovFit best = gcv_select_cov(pts, basis, grid, 2, &curve);
  for (std::size_t k = 0; k < grid.size(); k += 3) {
    const double ref = oracle::materialized_gcv(d.x, d.y, d.w, d.q, grid[k]);
    CHECK(std::abs(curve.scores[k] - ref) < 1e-9 * std::max(1.0, ref));
  }
  CHECK(best.lambda == curve.best_lambda());
}

TEST_CASE("raw covariance points from a fitted mean") {
  std::mt19937_64 rng(29);
  const LongitudinalDataset data = fixture::random_panel(rng, 5, 2, 4, 3.0, [](int i, double t) { return i + t; }, 0.2);
  const SplineBasis basis = build_basis(3.0, 2, 4);
  const ObservationWeights w = fixture::random_weights(rng, data);
  const MeanFit mean = fit_mean(data, w, basis, 1.0, 2);
  const std::vector<PairWeight> pw = pair_weights(w, data);
  const std::vector<RawCovPoint> pts = raw_cov_points(data, mean, pw);
  std::size_t expect = 0;
  for (const Subject& s : data.subjects()) expect += s.outcomes.size() * (s.outcomes.size() - 1);
  REQUIRE(pts.size() == expect);
  for (const RawCovPoint& p : pts) {
    const Subject& s = data[p.subject];
    CHECK(p.j != p.l);
    CHECK(p.t == s.outcomes[p.j].time);
    CHECK(p.s == s.outcomes[p.l].time);
    const double rj = s.outcomes[p.j].value - mean.evaluate(p.t);
    const double rl = s.outcomes[p.l].value - mean.evaluate(p.s);
    CHECK(p.value == doctest::Approx(rj * rl).epsilon(1e-14));
    CHECK(p.weight == doctest::Approx(w.values[p.subject][p.j] * w.values[p.subject][p.l]).epsilon(1e-14));
  }

  std::vector<PairWeight> bad = pw;
  bad.front().weight = -1.0;
  CHECK_THROWS_AS(raw_cov_points(data, mean, bad), DataError);
  bad = pw;
  bad.front().l = bad.front().j;
  CHECK_THROWS_AS(raw_cov_points(data, mean, bad), InvalidArgument);
}

TEST_CASE("leave-one-subject-out selection") {
  std::mt19937_64 rng(31);
  const auto pts = random_pairs(rng, 25, 5, 3.0, [](double t, double s) { return std::cos(t - s); }, 0.3);
  const SplineBasis basis = build_basis(3.0, 3, 4);
  const std::vector<double> grid = log_spaced(1e-3, 1e3, 7);
  GcvCurve curve;
  const CovFit fit = subject_cv_select_cov(pts, basis, grid, 2, &curve);
  REQUIRE(curve.scores.size() == grid.size());
  CHECK(fit.lambda == curve.best_lambda());

  // Brute force: refit without each subject and score its pairs.
  for (std::size_t k = 0; k < grid.size(); k += 3) {
    double total = 0.0;
    for (std::size_t i = 0; i < 25; ++i) {
      std::vector<RawCovPoint> train, test;
      for (const RawCovPoint& p : pts) (p.subject == i ? test : train).push_back(p);
      const CovFit f = fit_cov(train, basis, grid[k], 2);
      for (const RawCovPoint& p : test) total += p.weight * std::pow(p.value - f.evaluate(p.t, p.s), 2);
    }
    CHECK(curve.scores[k] == doctest::Approx(total / static_cast<double>(pts.size())).epsilon(1e-8));
  }

  std::vector<RawCovPoint> one;
  for (const RawCovPoint& p : pts)
    if (p.subject == 0) one.push_back(p);
  CHECK_THROWS_AS(subject_cv_select_cov(one, basis, grid, 2), InvalidArgument);
}

TEST_CASE("pure noise pairs are smoothed toward a flat surface by subject CV") {
  std::mt19937_64 rng(33);
  const auto pts = random_pairs(rng, 80, 5, 3.0, [](double, double) { return 0.0; }, 1.0);
  const SplineBasis basis = build_basis(3.0, 4, 4);
  const std::vector<double> grid = default_cov_lambda_grid(pts, basis, 2);
  const CovFit fit = subject_cv_select_cov(pts, basis, grid, 2);
  CHECK(fit.lambda >= grid[grid.size() / 2]);
  double sup = 0.0;
  for (double t = 0.0; t <= 3.0; t += 0.1)
    for (double s = 0.0; s <= 3.0; s += 0.1) sup = std::max(sup, std::abs(fit.evaluate(t, s)));
  CHECK(sup < 0.5);
}
