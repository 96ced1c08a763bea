#include <doctest.h>

#include <cmath>
#include <random>

#include "iifpca/error.hpp"
#include "iifpca/intensity.hpp"
#include "iifpca/simulate.hpp"

using namespace iifpca;

namespace {

// Subjects with piecewise-constant scalar covariates and arbitrary visit times.
LongitudinalDataset step_panel(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Subject> subs;
  for (int i = 0; i < n; ++i) {
    Subject s;
    s.id = "s" + std::to_string(i);
    s.followup_end = 2.0 + u(rng);
    double t = 0.0;
    while (t < s.followup_end) {
      Eigen::VectorXd z(1);
      z[0] = 2.0 * u(rng) - 1.0;
      s.covariates.push_back({t, z});
      t += 0.2 + 0.8 * u(rng);
    }
    for (double v = 0.3 * u(rng); v < s.followup_end; v += 0.1 + 0.6 * u(rng)) s.outcomes.push_back({v, u(rng)});
    subs.push_back(std::move(s));
  }
  return LongitudinalDataset(std::move(subs));
}

// Closed-form negative log-likelihood for exp(a + b t + beta z) with carry-forward z.
double closed_form_nll(const LongitudinalDataset& data, double a, double b, double beta) {
  double nll = 0.0;
  for (const Subject& s : data.subjects()) {
    for (const Observation& o : s.outcomes) {
      double z = 0.0;
      for (const CovariateRecord& r : s.covariates)
        if (r.time <= o.time) z = r.value[0];
      nll -= a + b * o.time + beta * z;
    }
    for (std::size_t k = 0; k < s.covariates.size(); ++k) {
      const double lo = s.covariates[k].time;
      const double hi = k + 1 < s.covariates.size() ? s.covariates[k + 1].time : s.followup_end;
      const double z = s.covariates[k].value[0];
      const double seg = b == 0.0 ? (hi - lo) : (std::exp(b * hi) - std::exp(b * lo)) / b;
      nll += std::exp(a + beta * z) * seg;
    }
  }
  return nll;
}

}  // namespace

TEST_CASE("baseline families") {
  const BaselineFamily ll = BaselineFamily::log_linear(0.5, -0.2);
  CHECK(ll.value(2.0) == doctest::Approx(std::exp(0.5 - 0.4)));
  const BaselineFamily ls = BaselineFamily::linear_shift(0.08, 0.25);
  CHECK(ls.value(1.0) == doctest::Approx(0.08 * 1.25));
  CHECK(ls.theta()[0] == doctest::Approx(std::log(0.08)));
  CHECK(ls.theta()[1] == 0.25);
  CHECK(BaselineFamily::constant(2.0).value(7.0) == doctest::Approx(2.0));
  const BaselineFamily bad = BaselineFamily::linear_shift(1.0, -0.5);
  CHECK_THROWS_AS(bad.value(0.0), DomainError);
  CHECK_THROWS_AS(bad.check_positive(3.0), DomainError);
  CHECK_NOTHROW(ls.check_positive(3.0));
  CHECK(baseline_kind_from_string(to_string(BaselineKind::linear_shift)) == BaselineKind::linear_shift);
  CHECK_THROWS_AS(baseline_kind_from_string("weibull"), InvalidArgument);
}

TEST_CASE("likelihood matches the closed form for a log-linear baseline") {
  std::mt19937_64 rng(51);
  const LongitudinalDataset data = step_panel(rng, 15);
  const LikelihoodData ld(data, CovariateMap::identity(), CovariateLookup::carry_forward, 64);
  for (const auto& p : {Eigen::Vector3d(0.1, 0.0, 0.0), Eigen::Vector3d(-0.3, 0.4, 1.2), Eigen::Vector3d(0.7, -0.5, -2.0)}) {
    const double got = neg_log_likelihood(BaselineKind::log_linear, p, ld);
    CHECK(got == doctest::Approx(closed_form_nll(data, p[0], p[1], p[2])).epsilon(1e-11));
  }

  // Homogeneous Poisson: nll = -N log r + r * exposure.
  const LikelihoodData none(data, CovariateMap::none(), CovariateLookup::carry_forward);
  const double r = 1.7;
  const double n = static_cast<double>(none.num_events());
  CHECK(neg_log_likelihood(BaselineKind::log_linear, Eigen::Vector2d(std::log(r), 0.0), none) ==
        doctest::Approx(-n * std::log(r) + r * none.total_exposure()).epsilon(1e-12));
}

TEST_CASE("analytic gradient and Hessian agree with finite differences") {
  std::mt19937_64 rng(53);
  const LongitudinalDataset data = step_panel(rng, 20);
  for (const BaselineKind kind : {BaselineKind::log_linear, BaselineKind::linear_shift}) {
    const LikelihoodData ld(data, CovariateMap::scaled(1, 0.5), CovariateLookup::linear);
    const Eigen::Vector3d p = kind == BaselineKind::log_linear ? Eigen::Vector3d(0.2, -0.3, 0.8)
                                                                : Eigen::Vector3d(std::log(0.7), 0.4, 0.8);
    const LikelihoodDerivatives d = neg_log_likelihood_derivatives(kind, p, ld, true);
    CHECK(d.value == doctest::Approx(neg_log_likelihood(kind, p, ld)).epsilon(1e-14));
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-5;
      Eigen::Vector3d hi = p, lo = p;
      hi[k] += h;
      lo[k] -= h;
      const double fd = (neg_log_likelihood(kind, hi, ld) - neg_log_likelihood(kind, lo, ld)) / (2 * h);
      CHECK(d.gradient[k] == doctest::Approx(fd).epsilon(1e-4));
      const Eigen::VectorXd gfd = (neg_log_likelihood_derivatives(kind, hi, ld, false).gradient -
                                   neg_log_likelihood_derivatives(kind, lo, ld, false).gradient) / (2 * h);
      for (int l = 0; l < 3; ++l) CHECK(d.hessian(k, l) == doctest::Approx(gfd[l]).epsilon(1e-4).scale(1e-3));
    }
    CHECK((d.hessian - d.hessian.transpose()).cwiseAbs().maxCoeff() < 1e-10 * d.hessian.cwiseAbs().maxCoeff());
  }
  const LikelihoodData ld(data, CovariateMap::identity(), CovariateLookup::carry_forward);
  CHECK_THROWS_AS(neg_log_likelihood(BaselineKind::linear_shift, Eigen::Vector3d(0.0, -1.0, 0.0), ld), DomainError);
}

TEST_CASE("homogeneous fit satisfies the score equations") {
  std::mt19937_64 rng(55);
  const LongitudinalDataset data = step_panel(rng, 40);
  const IntensityModel m = fit_intensity(data, BaselineKind::log_linear, CovariateMap::none());
  CHECK(m.fitted());
  CHECK(m.report().converged);
  CHECK(m.beta().size() == 0);
  // d/d theta0 = 0 means the fitted compensator equals the number of events.
  const LikelihoodData ld(data, CovariateMap::none(), CovariateLookup::carry_forward);
  double comp = 0.0;
  for (std::size_t k = 0; k < ld.num_nodes(); ++k) comp += ld.node_weights()[k] * m.baseline().value(ld.node_times()[k]);
  CHECK(comp == doctest::Approx(static_cast<double>(ld.num_events())).epsilon(1e-7));
  CHECK(m.standard_errors().size() == 2);
  CHECK((m.standard_errors().array() > 0.0).all());
}

TEST_CASE("with beta = 0 the weights are the inverse baseline") {
  std::mt19937_64 rng(57);
  const LongitudinalDataset data = step_panel(rng, 6);
  const IntensityModel m(BaselineFamily::linear_shift(0.3, 0.5), Eigen::VectorXd::Zero(1));
  const ObservationWeights w = mean_weights(m, data);
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = 0; j < data[i].outcomes.size(); ++j)
      CHECK(w.values[i][j] == doctest::Approx(1.0 / (0.3 * (data[i].outcomes[j].time + 0.5))).epsilon(1e-14));
  const std::vector<PairWeight> pw = pair_weights(m, data);
  for (const PairWeight& p : pw) CHECK(p.weight == doctest::Approx(w.values[p.subject][p.j] * w.values[p.subject][p.l]));

  const IntensityModel m2(BaselineFamily::linear_shift(0.3, 0.5), Eigen::VectorXd::Constant(1, 2.0));
  const Subject& s = data[0];
  const double t = s.outcomes[0].time;
  CHECK(intensity_at(m2, s, t) == doctest::Approx(0.3 * (t + 0.5) * std::exp(2.0 * covariate_at(s, t)[0])));
}

TEST_CASE("maximum likelihood recovers the simulation parameters") {
  SimConfig cfg;
  cfg.n = 400;
  cfg.seed = 7;
  const SimulatedData sim = simulate_dataset(cfg, 0);
  IntensityFitOptions opt;
  opt.lookup = cfg.lookup;
  const IntensityModel m = fit_intensity(sim.data, BaselineKind::linear_shift, CovariateMap::identity(), opt);
  REQUIRE(m.report().converged);
  const Eigen::VectorXd se = m.standard_errors();
  CHECK(std::abs(m.beta()[0] - cfg.beta) < 4.0 * se[2]);
  CHECK(se[2] < 0.5);
  const Eigen::Vector2d theta0 = cfg.baseline.theta();
  CHECK(std::abs(m.baseline().theta()[0] - theta0[0]) < 4.0 * se[0]);
  // The fit is a local optimum of the likelihood it reports.
  const double at_fit = neg_log_likelihood(m, sim.data);
  CHECK(at_fit <= neg_log_likelihood(true_intensity(cfg), sim.data) + 1e-9);
}

TEST_CASE("fitting without events is a data error") {
  std::vector<Subject> subs(3);
  for (int i = 0; i < 3; ++i) {
    subs[i].id = "e" + std::to_string(i);
    subs[i].followup_end = 1.0;
    subs[i].covariates.push_back({0.0, Eigen::VectorXd::Zero(1)});
  }
  CHECK_THROWS_AS(fit_intensity(LongitudinalDataset(subs), BaselineKind::log_linear, CovariateMap::identity()),
                  DataError);
}
