#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "iifpca/error.hpp"
#include "iifpca/penalized.hpp"
#include "oracles.hpp"

using namespace iifpca;

TEST_CASE("gcv_score formula and degenerate trace") {
  CHECK(gcv_score(10.0, 2.0, 12.0) == doctest::Approx((10.0 / 12.0) / std::pow(10.0 / 12.0, 2)));
  CHECK(std::isinf(gcv_score(1.0, 12.0, 12.0)));
  CHECK(std::isinf(gcv_score(1.0, 13.0, 12.0)));
}

TEST_CASE("log_spaced grid") {
  const std::vector<double> g = log_spaced(1e-3, 1e3, 7);
  REQUIRE(g.size() == 7);
  for (int i = 0; i < 7; ++i) CHECK(g[i] == doctest::Approx(std::pow(10.0, i - 3)).epsilon(1e-12));
  CHECK(log_spaced(2.0, 2.0, 1).front() == 2.0);
  CHECK_THROWS_AS(log_spaced(0.0, 1.0, 3), InvalidArgument);
  CHECK_THROWS_AS(log_spaced(2.0, 1.0, 3), InvalidArgument);
}

TEST_CASE("sufficient-statistic solve matches the dense design solve and the materialized smoother") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u(0.1, 3.0);
  const int nobs = 40, p = 6;
  Eigen::MatrixXd x(nobs, p);
  Eigen::VectorXd y(nobs), w(nobs);
  for (int i = 0; i < nobs; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = n01(rng);
    y[i] = n01(rng);
    w[i] = u(rng);
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(p - 2, p);
  for (int i = 0; i < p - 2; ++i) d(i, i) = 1, d(i, i + 1) = -2, d(i, i + 2) = 1;
  const Eigen::MatrixXd q = d.transpose() * d;

  PenalizedLeastSquares sys(x.transpose() * w.asDiagonal() * x, x.transpose() * w.asDiagonal() * y,
                            y.dot(w.asDiagonal() * y), nobs, q);
  CHECK(sys.lambda_scale() == doctest::Approx((x.transpose() * w.asDiagonal() * x).trace() / q.trace()));
  const std::vector<double> grid = sys.lambda_grid(5, 1e-2, 1e2);
  CHECK(grid.front() == doctest::Approx(1e-2 * sys.lambda_scale()));
  CHECK(grid.back() == doctest::Approx(1e2 * sys.lambda_scale()));

  double prev_rough = std::numeric_limits<double>::infinity();
  for (const double lambda : {1e-3, 0.1, 1.0, 10.0, 1e3}) {
    const PenalizedSolution s = sys.solve(lambda);
    const Eigen::VectorXd ref = oracle::dense_penalized_solve(x, y, w, q, lambda);
    CHECK((s.coef - ref).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::VectorXd r = y - x * ref;
    CHECK(s.rss == doctest::Approx(r.dot(w.asDiagonal() * r)).epsilon(1e-10));
    CHECK(std::abs(s.gcv - oracle::materialized_gcv(x, y, w, q, lambda)) < 1e-10);
    // Stationarity of the objective with the lambda/2 convention: 2(Mc - r) + lambda Q c = 0.
    const Eigen::VectorXd grad = 2.0 * (sys.gram() * s.coef - sys.rhs()) + lambda * q * s.coef;
    CHECK(grad.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(s.roughness <= prev_rough + 1e-12);
    prev_rough = s.roughness;
  }
  CHECK_THROWS_AS(sys.solve(0.0), InvalidArgument);
  CHECK_THROWS_AS(sys.solve(-1.0), InvalidArgument);
}

TEST_CASE("rank-deficient system outside the penalty is reported") {
  // Two identical columns: the difference direction is neither seen by the data nor penalized.
  Eigen::MatrixXd x(5, 2);
  x << 1, 1, 2, 2, 3, 3, 4, 4, 5, 5;
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(5, 0.0, 1.0);
  const Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2, 2);
  PenalizedLeastSquares sys(x.transpose() * x, x.transpose() * y, y.squaredNorm(), 5, q);
  CHECK_THROWS_AS(sys.solve(1.0), SingularSystemError);
}
