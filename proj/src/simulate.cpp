#include "iifpca/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

#include "iifpca/bspline.hpp"
#include "iifpca/covariance.hpp"
#include "iifpca/error.hpp"
#include "iifpca/fpca.hpp"
#include "iifpca/grid.hpp"
#include "iifpca/mean.hpp"

namespace iifpca {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::substream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t subject) {
  return Rng(splitmix64(splitmix64(splitmix64(seed) ^ replicate) ^ subject));
}

double Rng::normal() {
  if (spare_normal_) {
    const double z = *spare_normal_;
    spare_normal_.reset();
    return z;
  }
  // Box-Muller; 1 - u keeps the logarithm finite.
  const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
  const double theta = 2.0 * std::numbers::pi * uniform();
  spare_normal_ = r * std::sin(theta);
  return r * std::cos(theta);
}

double Rng::exponential() { return -std::log(1.0 - uniform()); }

std::int64_t Rng::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw InvalidArgument("poisson: mean must be finite and >= 0");
  // Inversion needs exp(-mean) to stay well away from underflow; split large means.
  if (mean > 500.0) {
    const int pieces = static_cast<int>(std::ceil(mean / 500.0));
    std::int64_t total = 0;
    for (int k = 0; k < pieces; ++k) total += poisson(mean / pieces);
    return total;
  }
  const double u = uniform();
  double p = std::exp(-mean);
  double cdf = p;
  std::int64_t k = 0;
  while (u >= cdf && p > 0.0) {
    ++k;
    p *= mean / static_cast<double>(k);
    cdf += p;
  }
  return k;
}

void SimConfig::validate() const {
  if (n < 1) throw InvalidArgument("simulate: n must be >= 1");
  if (!(domain_end > 0.0) || std::floor(domain_end) != domain_end)
    throw InvalidArgument("simulate: tau must be a positive integer");
  if (num_terms < 0) throw InvalidArgument("simulate: number of series terms must be >= 0");
  if (!(noise_variance >= 0.0)) throw InvalidArgument("simulate: noise variance must be >= 0");
  if (!std::isfinite(beta)) throw InvalidArgument("simulate: beta must be finite");
  if (!(outcome_scale > 0.0)) throw InvalidArgument("simulate: outcome scale must be positive");
  if (!(mean_covariate_obs >= 0.0)) throw InvalidArgument("simulate: mean covariate count must be >= 0");
  if (majorant_cells < 1) throw InvalidArgument("simulate: majorant cells must be >= 1");
  if (replicates < 1) throw InvalidArgument("simulate: replicates must be >= 1");
  baseline.check_positive(domain_end);
}

double nu(int k) { return (k % 2 == 1 ? 1.0 : -1.0) / (k + 1.0); }

double basis_function(const SimConfig& config, int k, double t) {
  return std::sqrt(2.0 / config.domain_end) * std::cos(k * std::numbers::pi * t);
}

namespace {

/// sum_k a_k cos(k pi t) by the Chebyshev recurrence cos((k+1)x) = 2 cos x cos(kx) - cos((k-1)x).
double cosine_series(const Eigen::VectorXd& a, double t) {
  const double c1 = std::cos(std::numbers::pi * t);
  double prev = 1.0;
  double cur = c1;
  double sum = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    sum += a[k] * cur;
    const double next = 2.0 * c1 * cur - prev;
    prev = cur;
    cur = next;
  }
  return sum;
}

/// nu_k zeta_k sqrt(2 / tau), the coefficients of the cosine series in Z.
Eigen::VectorXd series_coefficients(const SimConfig& config, const Eigen::VectorXd& zeta) {
  Eigen::VectorXd a(zeta.size());
  const double norm = std::sqrt(2.0 / config.domain_end);
  for (Eigen::Index k = 0; k < a.size(); ++k) a[k] = norm * nu(static_cast<int>(k) + 1) * zeta[k];
  return a;
}

double latent_from_coefficients(const Eigen::VectorXd& a, double t) {
  return std::sin(t + 0.5) + cosine_series(a, t);
}

}  // namespace

double latent_covariate(const SimConfig& config, const Eigen::VectorXd& zeta, double t) {
  return latent_from_coefficients(series_coefficients(config, zeta), t);
}

SimulatedSubject gen_subject(const SimConfig& config, Rng& rng, const std::string& id) {
  const double tau = config.domain_end;
  const double root3 = std::sqrt(3.0);
  SimulatedSubject out;
  out.zeta.resize(config.num_terms);
  for (int k = 0; k < config.num_terms; ++k) out.zeta[k] = rng.uniform(-root3, root3);
  const Eigen::VectorXd a = series_coefficients(config, out.zeta);

  // Lipschitz constant of Z: |cos(t + 1/2)| + sum_k |a_k| k pi.
  double lipschitz = 1.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) lipschitz += std::abs(a[k]) * (k + 1.0) * std::numbers::pi;

  // Piecewise-constant majorant: on each cell Z is within L h / 2 of its larger endpoint value,
  // and both baseline families are monotone, so the endpoint maximum bounds lambda0.
  const int cells = config.majorant_cells;
  const double h = tau / cells;
  const double beta = config.beta;
  std::vector<double> rate(cells);
  double z_left = latent_from_coefficients(a, 0.0);
  double base_left = config.baseline.value(0.0);
  for (int c = 0; c < cells; ++c) {
    const double right = c + 1 == cells ? tau : h * (c + 1);
    const double z_right = latent_from_coefficients(a, right);
    const double base_right = config.baseline.value(right);
    const double z_extreme =
        beta >= 0.0 ? std::max(z_left, z_right) + 0.5 * lipschitz * h : std::min(z_left, z_right) - 0.5 * lipschitz * h;
    rate[c] = std::max(base_left, base_right) * std::exp(beta * z_extreme);
    z_left = z_right;
    base_left = base_right;
  }

  // Lewis-Shedler thinning under the majorant, generated by inverting its cumulative mass.
  std::vector<double> visits;
  double target = rng.exponential();
  double mass = 0.0;
  for (int c = 0; c < cells; ++c) {
    const double cell_mass = rate[c] * h;
    while (target < mass + cell_mass) {
      const double t = std::min(tau, h * c + (target - mass) / rate[c]);
      ++out.candidates;
      const double lambda = config.baseline.value(t) * std::exp(beta * latent_from_coefficients(a, t));
      if (lambda > rate[c] * (1.0 + 1e-12)) throw Error("gen_subject: thinning majorant violated");
      if (rng.uniform() * rate[c] < lambda) visits.push_back(t);
      target += rng.exponential();
    }
    mass += cell_mass;
  }

  Subject& s = out.subject;
  s.id = id;
  s.followup_end = tau;
  const double sd = std::sqrt(config.noise_variance);
  for (const double t : visits)
    s.outcomes.push_back({t, config.outcome_scale * latent_from_coefficients(a, t) + sd * rng.normal()});

  std::vector<double> record_times{0.0};
  const std::int64_t extra = rng.poisson(config.mean_covariate_obs);
  for (std::int64_t r = 0; r < extra; ++r) record_times.push_back(rng.uniform(0.0, tau));
  if (config.record_covariate_at_visits) record_times.insert(record_times.end(), visits.begin(), visits.end());
  std::sort(record_times.begin(), record_times.end());
  record_times.erase(std::unique(record_times.begin(), record_times.end()), record_times.end());
  for (const double t : record_times) {
    Eigen::VectorXd z(1);
    z[0] = latent_from_coefficients(a, t);
    s.covariates.push_back({t, std::move(z)});
  }
  return out;
}

SimulatedData simulate_dataset(const SimConfig& config, int replicate) {
  config.validate();
  std::vector<Subject> subjects;
  subjects.reserve(config.n);
  SimulatedData out;
  out.zeta.resize(config.n, config.num_terms);
  for (int i = 0; i < config.n; ++i) {
    Rng rng = Rng::substream(config.seed, static_cast<std::uint64_t>(replicate), static_cast<std::uint64_t>(i));
    SimulatedSubject sub = gen_subject(config, rng, std::to_string(i + 1));
    out.zeta.row(i) = sub.zeta.transpose();
    subjects.push_back(std::move(sub.subject));
  }
  out.data = LongitudinalDataset(std::move(subjects));
  out.data.metadata()["source"] = "simulation";
  out.data.metadata()["seed"] = std::to_string(config.seed);
  out.data.metadata()["replicate"] = std::to_string(replicate);
  return out;
}

double expected_visit_count(const SimConfig& config) {
  config.validate();
  // E exp(b zeta) = sinh(sqrt3 b) / (sqrt3 b) for zeta ~ U[-sqrt3, sqrt3].
  const auto integrand = [&](double t) {
    double log_mgf = config.beta * std::sin(t + 0.5);
    for (int k = 1; k <= config.num_terms; ++k) {
      const double x = std::sqrt(3.0) * config.beta * nu(k) * basis_function(config, k, t);
      const double ax = std::abs(x);
      log_mgf += ax < 1e-4 ? x * x / 6.0 : ax + std::log1p(-std::exp(-2.0 * ax)) - std::log(2.0 * ax);
    }
    return config.baseline.value(t) * std::exp(log_mgf);
  };
  const std::vector<double> breaks = uniform_grid(config.domain_end, 61);
  return gauss_legendre_integrate(integrand, breaks, 20);
}

double calibrated_baseline_scale(const SimConfig& config, double target) {
  if (!(target > 0.0)) throw InvalidArgument("calibrated_baseline_scale: target must be positive");
  SimConfig unit = config;
  unit.baseline = BaselineFamily::linear_shift(1.0, 0.25);
  return target / expected_visit_count(unit);
}

double TrueFunctions::mean(double t) const { return config.outcome_scale * std::sin(t + 0.5); }

double TrueFunctions::cov(double s, double t) const {
  double sum = 0.0;
  for (int k = 1; k <= config.num_terms; ++k) sum += kappa(k) * phi(k, s) * phi(k, t);
  return sum;
}

double TrueFunctions::phi(int k, double t) const { return basis_function(config, k, t); }

double TrueFunctions::kappa(int k) const {
  if (k < 1 || k > config.num_terms) return 0.0;
  // Var(zeta) = 1.
  return config.outcome_scale * config.outcome_scale * nu(k) * nu(k);
}

TrueFunctions true_functions(const SimConfig& config) { return TrueFunctions{config}; }

IntensityModel true_intensity(const SimConfig& config) {
  Eigen::VectorXd beta(1);
  beta[0] = config.beta;
  return IntensityModel(config.baseline, beta, CovariateMap::identity(1), config.lookup);
}

double mise(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth, std::span<const double> grid) {
  if (estimate.size() != truth.size() || estimate.size() != static_cast<Eigen::Index>(grid.size()))
    throw InvalidArgument("mise: estimate, truth, and grid differ in length");
  return trapezoid(Eigen::VectorXd((estimate - truth).cwiseAbs2()), grid);
}

double mise(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth, std::span<const double> grid) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw InvalidArgument("mise: estimate and truth surfaces differ in shape");
  return trapezoid_2d((estimate - truth).cwiseAbs2(), grid);
}

double aligned_mise(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth, std::span<const double> grid) {
  if (estimate.size() != truth.size()) throw InvalidArgument("mise: estimate and truth differ in length");
  const double inner = trapezoid(Eigen::VectorXd(estimate.cwiseProduct(truth)), grid);
  return mise(inner < 0.0 ? Eigen::VectorXd(-estimate) : estimate, truth, grid);
}

std::vector<double> binned_means(const LongitudinalDataset& data, const ObservationWeights& weights, int bins) {
  if (bins < 1) throw InvalidArgument("binned_means: bins must be >= 1");
  if (weights.values.size() != data.size()) throw InvalidArgument("binned_means: weights do not match dataset");
  const double tau = data.domain_end();
  std::vector<double> num(bins, 0.0), den(bins, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Subject& s = data[i];
    for (std::size_t j = 0; j < s.outcomes.size(); ++j) {
      const int b = std::min(bins - 1, static_cast<int>(s.outcomes[j].time / tau * bins));
      num[b] += weights.values[i][j] * s.outcomes[j].value;
      den[b] += weights.values[i][j];
    }
  }
  std::vector<double> out(bins);
  for (int b = 0; b < bins; ++b) out[b] = den[b] > 0.0 ? num[b] / den[b] : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::string to_string(Arm arm) {
  switch (arm) {
    case Arm::UW: return "UW";
    case Arm::TW: return "TW";
    case Arm::EW: return "EW";
  }
  return "?";
}

Arm arm_from_string(const std::string& name) {
  if (name == "UW" || name == "uw") return Arm::UW;
  if (name == "TW" || name == "tw") return Arm::TW;
  if (name == "EW" || name == "ew") return Arm::EW;
  throw InvalidArgument("unknown arm '" + name + "' (expected UW, TW, or EW)");
}

std::string to_string(CovSelector selector) { return selector == CovSelector::gcv ? "gcv" : "subject_cv"; }

CovSelector cov_selector_from_string(const std::string& name) {
  if (name == "gcv") return CovSelector::gcv;
  if (name == "subject_cv" || name == "loso") return CovSelector::subject_cv;
  throw InvalidArgument("unknown covariance selector '" + name + "' (expected gcv or subject_cv)");
}

const ArmSummary& ExperimentResult::arm(Arm a) const {
  for (const ArmSummary& s : summary)
    if (s.arm == a) return s;
  throw InvalidArgument("experiment has no arm " + to_string(a));
}

MetricSummary summarize(std::vector<double> values) {
  MetricSummary m;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  m.count = static_cast<int>(values.size());
  if (values.empty()) {
    m.mean = m.sd = m.median = nan;
    return m;
  }
  double sum = 0.0;
  for (const double v : values) sum += v;
  m.mean = sum / m.count;
  if (m.count > 1) {
    double ss = 0.0;
    for (const double v : values) ss += (v - m.mean) * (v - m.mean);
    m.sd = std::sqrt(ss / (m.count - 1));
  } else {
    m.sd = nan;
  }
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  m.median = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  return m;
}

ReplicateResult run_replicate(const SimConfig& config, const ExperimentOptions& options, int replicate,
                              std::span<const double> grid) {
  const SimulatedData sim = simulate_dataset(config, replicate);
  const LongitudinalDataset& data = sim.data;
  const int knots =
      options.num_interior_knots >= 0 ? options.num_interior_knots : default_num_interior_knots(config.n);
  const SplineBasis basis = build_basis(config.domain_end, knots, options.order);
  const TrueFunctions truth = true_functions(config);

  const auto g = static_cast<Eigen::Index>(grid.size());
  Eigen::VectorXd mu_true(g), phi_true(g);
  Eigen::MatrixXd cov_true(g, g);
  for (Eigen::Index a = 0; a < g; ++a) {
    mu_true[a] = truth.mean(grid[a]);
    phi_true[a] = truth.phi1(grid[a]);
    for (Eigen::Index b = 0; b <= a; ++b) cov_true(a, b) = cov_true(b, a) = truth.cov(grid[a], grid[b]);
  }

  ReplicateResult res;
  res.replicate = replicate;
  res.mean_visits = static_cast<double>(data.total_observations()) / static_cast<double>(data.size());
  for (const Subject& s : data.subjects()) {
    const std::size_t m = s.outcomes.size();
    res.num_pairs += m * (m > 0 ? m - 1 : 0);
  }

  std::optional<IntensityModel> estimated;
  std::string intensity_error;
  if (std::find(options.arms.begin(), options.arms.end(), Arm::EW) != options.arms.end()) {
    try {
      IntensityFitOptions fit_options;
      fit_options.lookup = config.lookup;
      estimated = fit_intensity(data, options.fitted_family, CovariateMap::identity(1), fit_options);
      res.intensity_fitted = true;
      res.intensity_converged = estimated->report().converged;
      const Eigen::Index last = estimated->params().size() - 1;
      res.beta_hat = estimated->params()[last];
      const Eigen::VectorXd se = estimated->standard_errors();
      res.beta_se = se.size() > last ? se[last] : std::numeric_limits<double>::quiet_NaN();
    } catch (const std::exception& e) {
      intensity_error = std::string("intensity fit failed: ") + e.what();
    }
  }

  for (const Arm arm : options.arms) {
    ArmResult ar;
    ar.arm = arm;
    try {
      ObservationWeights weights;
      switch (arm) {
        case Arm::UW: weights = ObservationWeights::unit(data); break;
        case Arm::TW: weights = mean_weights(true_intensity(config), data); break;
        case Arm::EW:
          if (!estimated) throw Error(intensity_error);
          weights = mean_weights(*estimated, data);
          break;
      }
      const MeanFit mean = gcv_select_mean(data, weights, basis, {}, options.penalty_order);
      const std::vector<PairWeight> pw = pair_weights(weights, data);
      const std::vector<RawCovPoint> points = raw_cov_points(data, mean, pw);
      const CovFit cov = options.cov_selector == CovSelector::gcv
                             ? gcv_select_cov(points, basis, {}, options.penalty_order)
                             : subject_cv_select_cov(points, basis, {}, options.penalty_order);
      const FpcaResult fp = eigen_decompose(cov, 1);

      const Eigen::VectorXd mu_hat = mean.evaluate(grid);
      const Eigen::MatrixXd cov_hat = cov.evaluate_grid(grid);
      Eigen::VectorXd phi_hat = fp.eigenfunction(0, grid);
      if (trapezoid(Eigen::VectorXd(phi_hat.cwiseProduct(phi_true)), grid) < 0.0) phi_hat = -phi_hat;

      ar.mise_mean = mise(mu_hat, mu_true, grid);
      ar.mise_cov = mise(cov_hat, cov_true, grid);
      ar.mise_phi = mise(phi_hat, phi_true, grid);
      ar.sup_mean = (mu_hat - mu_true).cwiseAbs().maxCoeff();
      ar.sup_cov = (cov_hat - cov_true).cwiseAbs().maxCoeff();
      ar.kappa1 = fp.eigenvalues[0];
      ar.lambda_mean = mean.lambda;
      ar.lambda_cov = cov.lambda;
      if (options.keep_curves) {
        ar.mean_curve = mu_hat;
        ar.phi_curve = phi_hat;
      }
      ar.ok = true;
    } catch (const std::exception& e) {
      ar.ok = false;
      ar.error = e.what();
    }
    res.arms.push_back(std::move(ar));
  }
  return res;
}

ExperimentResult run_experiment(const SimConfig& config, const ExperimentOptions& options) {
  config.validate();
  if (options.arms.empty()) throw InvalidArgument("experiment: no arms requested");
  if (options.jobs < 1) throw InvalidArgument("experiment: jobs must be >= 1");
  ExperimentResult out;
  out.config = config;
  out.options = options;
  out.grid = uniform_grid(config.domain_end, options.grid_points);
  out.replicates.resize(config.replicates);

  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int r = next++; r < config.replicates; r = next++) out.replicates[r] = run_replicate(config, options, r, out.grid);
  };
  const int threads = std::min(options.jobs, config.replicates);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  const double kappa1 = true_functions(config).kappa1();
  for (std::size_t a = 0; a < options.arms.size(); ++a) {
    ArmSummary s;
    s.arm = options.arms[a];
    std::vector<double> mm, mc, mp, sm, sc, ke;
    const auto g = static_cast<Eigen::Index>(out.grid.size());
    Eigen::VectorXd mean_sum = Eigen::VectorXd::Zero(g), phi_sum = Eigen::VectorXd::Zero(g);
    int curves = 0;
    for (const ReplicateResult& r : out.replicates) {
      const ArmResult& ar = r.arms[a];
      if (!ar.ok) {
        ++s.failures;
        continue;
      }
      mm.push_back(ar.mise_mean);
      mc.push_back(ar.mise_cov);
      mp.push_back(ar.mise_phi);
      sm.push_back(ar.sup_mean);
      sc.push_back(ar.sup_cov);
      ke.push_back(std::abs(ar.kappa1 - kappa1));
      if (ar.mean_curve.size() == g) {
        mean_sum += ar.mean_curve;
        phi_sum += ar.phi_curve;
        ++curves;
      }
    }
    s.mise_mean = summarize(mm);
    s.mise_cov = summarize(mc);
    s.mise_phi = summarize(mp);
    s.sup_mean = summarize(sm);
    s.sup_cov = summarize(sc);
    s.kappa1_error = summarize(ke);
    if (curves > 0) {
      s.mean_curve = mean_sum / curves;
      s.phi_curve = phi_sum / curves;
    }
    out.summary.push_back(std::move(s));
  }
  return out;
}

std::vector<RatePoint> run_rates(const SimConfig& config, std::span<const int> sizes, Arm arm,
                                 ExperimentOptions options) {
  options.arms = {arm};
  options.keep_curves = false;
  std::vector<RatePoint> out;
  for (const int n : sizes) {
    SimConfig c = config;
    c.n = n;
    const ExperimentResult res = run_experiment(c, options);
    out.push_back({n, res.arm(arm)});
  }
  return out;
}

}  // namespace iifpca
