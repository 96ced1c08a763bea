#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iifpca/dataset.hpp"
#include "iifpca/intensity.hpp"
#include "iifpca/weights.hpp"

namespace iifpca {

/// Baseline scale that makes the default design average 8.3 visits per subject.
/// Equals 8.3 / int_0^3 (t + 1/4) E[exp{3 Z(t)}] dt; see calibrated_baseline_scale().
inline constexpr double kCalibratedBaselineScale = 0.081473399496;

/// Seeded 64-bit generator. Draws are defined here (not by <random> distributions)
/// so a seed produces the same numbers on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  /// Independent stream for (seed, replicate, subject) via a SplitMix64 hash.
  static Rng substream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t subject);

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  double normal();
  double exponential();
  std::int64_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Design of the simulation study:
///   Z_i(t) = sin(t + 1/2) + sum_{k<=K} nu_k zeta_ik phi_k(t),  nu_k = (-1)^{k+1}/(k+1),
///   phi_k(t) = sqrt(2/tau) cos(k pi t)  (orthonormal on [0, tau] for integer tau),
///   zeta_ik ~ Uniform[-sqrt 3, sqrt 3],
///   visits from the Poisson process with intensity lambda0(t) exp{beta Z_i(t)},
///   X_ij = 5 Z_i(t_ij) + eps_ij,  eps_ij ~ N(0, sigma^2).
struct SimConfig {
  int n = 200;
  double domain_end = 3.0;
  int num_terms = 50;
  double noise_variance = 0.01;
  double beta = 3.0;
  BaselineFamily baseline = BaselineFamily::linear_shift(kCalibratedBaselineScale, 0.25);
  double outcome_scale = 5.0;
  /// Covariate records: t = 0 plus Poisson(mean_covariate_obs) uniform times.
  double mean_covariate_obs = 40.0;
  /// Also record Z at each visit (the covariate is measured when the subject is seen).
  bool record_covariate_at_visits = true;
  /// Lookup used by the intensity model fitted to and evaluated on simulated data.
  CovariateLookup lookup = CovariateLookup::linear;
  /// Cells of the piecewise-constant thinning majorant.
  int majorant_cells = 2000;
  std::uint64_t seed = 1;
  int replicates = 1;

  /// Throws InvalidArgument on any non-positive or inconsistent field (tau must be an integer).
  void validate() const;
};

/// phi_k(t) = sqrt(2/tau) cos(k pi t), k >= 1.
double basis_function(const SimConfig& config, int k, double t);
double nu(int k);

/// Z_i(t) for the loadings zeta (length num_terms).
double latent_covariate(const SimConfig& config, const Eigen::VectorXd& zeta, double t);

struct SimulatedSubject {
  Subject subject;
  Eigen::VectorXd zeta;
  std::size_t candidates = 0;  ///< majorant events proposed by thinning
};

/// One subject's trajectory, visits, outcomes, and covariate records.
SimulatedSubject gen_subject(const SimConfig& config, Rng& rng, const std::string& id);

struct SimulatedData {
  LongitudinalDataset data;
  Eigen::MatrixXd zeta;  ///< n x num_terms
};

/// Subject i uses Rng::substream(seed, replicate, i), so it does not depend on n.
SimulatedData simulate_dataset(const SimConfig& config, int replicate = 0);

/// int_0^tau lambda0(t) E[exp{beta Z(t)}] dt in closed form over the zeta law.
double expected_visit_count(const SimConfig& config);
/// Baseline scale (for the default linear_shift baseline with shift 1/4) giving `target` expected visits.
double calibrated_baseline_scale(const SimConfig& config, double target = 8.3);

/// Population quantities implied by the design.
struct TrueFunctions {
  SimConfig config;

  double mean(double t) const;
  double cov(double s, double t) const;
  /// k-th eigenfunction (k >= 1) and eigenvalue outcome_scale^2 nu_k^2.
  double phi(int k, double t) const;
  double kappa(int k) const;
  double phi1(double t) const { return phi(1, t); }
  double kappa1() const { return kappa(1); }
};

TrueFunctions true_functions(const SimConfig& config);

/// Intensity model with the generating parameters.
IntensityModel true_intensity(const SimConfig& config);

/// Trapezoid-rule integrated squared error on a grid.
double mise(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth, std::span<const double> grid);
/// Tensor-grid version for surfaces.
double mise(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth, std::span<const double> grid);
/// As mise() after flipping `estimate` when its grid inner product with `truth` is negative.
double aligned_mise(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth, std::span<const double> grid);

/// Weighted outcome averages over equal-width bins of [0, tau]:
/// sum w_ij X_ij 1(t_ij in bin) / sum w_ij 1(t_ij in bin). Empty bins are NaN.
std::vector<double> binned_means(const LongitudinalDataset& data, const ObservationWeights& weights, int bins);

enum class Arm { UW, TW, EW };
std::string to_string(Arm arm);
Arm arm_from_string(const std::string& name);
inline const std::vector<Arm>& all_arms() {
  static const std::vector<Arm> arms{Arm::UW, Arm::TW, Arm::EW};
  return arms;
}

/// How lambda_C is chosen: pair-level GCV, or leave-one-subject-out cross-validation.
enum class CovSelector { gcv, subject_cv };
std::string to_string(CovSelector selector);
CovSelector cov_selector_from_string(const std::string& name);

struct ExperimentOptions {
  std::vector<Arm> arms = all_arms();
  int jobs = 1;
  int grid_points = 101;
  int num_interior_knots = -1;  ///< floor(n^0.3) when negative
  int order = 4;
  int penalty_order = 2;
  CovSelector cov_selector = CovSelector::gcv;
  BaselineKind fitted_family = BaselineKind::linear_shift;
  bool keep_curves = true;
};

struct ArmResult {
  Arm arm = Arm::UW;
  bool ok = false;
  std::string error;
  double mise_mean = 0.0;
  double mise_cov = 0.0;
  double mise_phi = 0.0;
  double sup_mean = 0.0;
  double sup_cov = 0.0;
  double kappa1 = 0.0;
  double lambda_mean = 0.0;
  double lambda_cov = 0.0;
  Eigen::VectorXd mean_curve;  ///< mu_hat on the grid (when curves are kept)
  Eigen::VectorXd phi_curve;   ///< phi_1_hat on the grid, sign-aligned with the truth
};

struct ReplicateResult {
  int replicate = 0;
  double mean_visits = 0.0;
  std::size_t num_pairs = 0;
  bool intensity_fitted = false;
  bool intensity_converged = false;
  double beta_hat = 0.0;
  double beta_se = 0.0;
  std::vector<ArmResult> arms;
};

struct MetricSummary {
  int count = 0;
  double mean = 0.0;
  double sd = 0.0;  ///< NaN with fewer than two replicates
  double median = 0.0;
};

struct ArmSummary {
  Arm arm = Arm::UW;
  int failures = 0;
  MetricSummary mise_mean, mise_cov, mise_phi, sup_mean, sup_cov, kappa1_error;
  Eigen::VectorXd mean_curve;  ///< average of mu_hat over successful replicates
  Eigen::VectorXd phi_curve;
};

struct ExperimentResult {
  SimConfig config;
  ExperimentOptions options;
  std::vector<double> grid;
  std::vector<ReplicateResult> replicates;
  std::vector<ArmSummary> summary;

  const ArmSummary& arm(Arm a) const;
};

/// Non-finite values are dropped before summarizing.
MetricSummary summarize(std::vector<double> values);

/// Simulates replicate `replicate` and fits every requested arm.
ReplicateResult run_replicate(const SimConfig& config, const ExperimentOptions& options, int replicate,
                              std::span<const double> grid);

/// Replicates 0..config.replicates-1 on options.jobs threads; results do not depend on jobs.
ExperimentResult run_experiment(const SimConfig& config, const ExperimentOptions& options);

struct RatePoint {
  int n = 0;
  ArmSummary summary;
};

/// Empirical-rate study: run_experiment for each n with a single arm.
std::vector<RatePoint> run_rates(const SimConfig& config, std::span<const int> sizes, Arm arm,
                                 ExperimentOptions options);

}  // namespace iifpca
