#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iifpca/dataset.hpp"
#include "iifpca/weights.hpp"

namespace iifpca {

enum class BaselineKind {
  log_linear,    ///< lambda0(t) = exp(theta0 + theta1 t)
  linear_shift,  ///< lambda0(t) = scale * (t + shift)
};

const char* to_string(BaselineKind kind);
BaselineKind baseline_kind_from_string(const std::string& name);

/// Parametric baseline intensity lambda0(t; theta).
///
/// theta is held in unconstrained working coordinates: (theta0, theta1) for
/// log_linear, (log scale, shift) for linear_shift.
class BaselineFamily {
 public:
  BaselineFamily(BaselineKind kind, Eigen::Vector2d theta);

  static BaselineFamily log_linear(double intercept, double slope);
  static BaselineFamily linear_shift(double scale, double shift);
  static BaselineFamily constant(double rate) { return log_linear(std::log(rate), 0.0); }

  BaselineKind kind() const noexcept { return kind_; }
  const Eigen::Vector2d& theta() const noexcept { return theta_; }
  static constexpr int num_params() { return 2; }

  /// lambda0(t); throws DomainError when it is not strictly positive.
  double value(double t) const;
  /// Throws DomainError unless lambda0 > 0 on [0, tau].
  void check_positive(double tau) const;

 private:
  BaselineKind kind_;
  Eigen::Vector2d theta_;
};

/// Pre-specified map g applied to Z(t) before it enters exp(g(Z)^T beta).
struct CovariateMap {
  std::string name = "identity";
  int input_dim = 1;
  int output_dim = 1;
  double factor = 1.0;  ///< used by "scaled"

  static CovariateMap identity(int dim = 1) { return {"identity", dim, dim, 1.0}; }
  /// g(z) = factor * z.
  static CovariateMap scaled(int dim, double factor) { return {"scaled", dim, dim, factor}; }
  /// No covariate effect; beta is empty.
  static CovariateMap none() { return {"none", 0, 0, 1.0}; }

  Eigen::VectorXd operator()(const Eigen::VectorXd& z) const;
};

struct OptimizerReport {
  bool converged = false;
  std::string method;
  int iterations = 0;
  int restarts = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
};

/// Proportional intensity lambda{t | O(t)} = lambda0(t) exp[g{Z(t)}^T beta].
class IntensityModel {
 public:
  IntensityModel(BaselineFamily baseline, Eigen::VectorXd beta, CovariateMap g = CovariateMap::identity(),
                 CovariateLookup lookup = CovariateLookup::carry_forward);

  const BaselineFamily& baseline() const noexcept { return baseline_; }
  const Eigen::VectorXd& beta() const noexcept { return beta_; }
  const CovariateMap& covariate_map() const noexcept { return g_; }
  CovariateLookup lookup() const noexcept { return lookup_; }

  /// theta (+) beta.
  Eigen::VectorXd params() const;
  IntensityModel with_params(const Eigen::VectorXd& params) const;

  bool fitted() const noexcept { return fitted_; }
  const Eigen::MatrixXd& information() const noexcept { return information_; }
  const OptimizerReport& report() const noexcept { return report_; }
  void set_fit(Eigen::MatrixXd information, OptimizerReport report);

  /// sqrt of diag(information^-1); empty when the model was not fitted.
  Eigen::VectorXd standard_errors() const;

 private:
  BaselineFamily baseline_;
  Eigen::VectorXd beta_;
  CovariateMap g_;
  CovariateLookup lookup_;
  bool fitted_ = false;
  Eigen::MatrixXd information_;
  OptimizerReport report_;
};

/// lambda0(t) exp[g{Z_i(t)}^T beta] > 0.
double intensity_at(const IntensityModel& model, const Subject& subject, double t);

/// Event covariates and compensator quadrature nodes of the likelihood, flattened over subjects.
///
/// The integral int_0^{tau_i} lambda0(s) exp[g{Z_i(s)}^T beta] ds is evaluated by
/// composite Gauss-Legendre on the intervals between consecutive covariate
/// records, with at least `min_nodes_per_subject` nodes per subject.
class LikelihoodData {
 public:
  LikelihoodData(const LongitudinalDataset& data, const CovariateMap& g, CovariateLookup lookup,
                 int min_nodes_per_subject = 64);

  std::size_t num_events() const noexcept { return event_times_.size(); }
  std::size_t num_nodes() const noexcept { return node_times_.size(); }
  int covariate_dim() const noexcept { return dim_; }
  double total_exposure() const noexcept { return exposure_; }

  const std::vector<double>& event_times() const noexcept { return event_times_; }
  const Eigen::MatrixXd& event_covariates() const noexcept { return event_g_; }
  const std::vector<double>& node_times() const noexcept { return node_times_; }
  const std::vector<double>& node_weights() const noexcept { return node_weights_; }
  const Eigen::MatrixXd& node_covariates() const noexcept { return node_g_; }

 private:
  int dim_ = 0;
  double exposure_ = 0.0;
  std::vector<double> event_times_;
  Eigen::MatrixXd event_g_;
  std::vector<double> node_times_;
  std::vector<double> node_weights_;
  Eigen::MatrixXd node_g_;
};

struct LikelihoodDerivatives {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;  ///< empty unless requested
};

/// -sum_i log L_i(theta, beta). Throws DomainError if lambda0 <= 0 at any event or node.
double neg_log_likelihood(BaselineKind kind, const Eigen::VectorXd& params, const LikelihoodData& data);
LikelihoodDerivatives neg_log_likelihood_derivatives(BaselineKind kind, const Eigen::VectorXd& params,
                                                     const LikelihoodData& data, bool with_hessian = true);
double neg_log_likelihood(const IntensityModel& model, const LongitudinalDataset& data,
                          int min_nodes_per_subject = 64);

struct IntensityFitOptions {
  /// Convergence when max |d nll / d param| / max(1, #events) falls below this.
  double gradient_tolerance = 1e-8;
  int max_iterations = 500;
  int min_nodes_per_subject = 64;
  CovariateLookup lookup = CovariateLookup::carry_forward;
  std::optional<Eigen::VectorXd> init;  ///< theta (+) beta; a homogeneous-rate start when absent
};

/// Maximum-likelihood fit of (theta, beta) by BFGS with backtracking line search,
/// Newton polishing, and one trust-region retry from a perturbed start.
/// Throws DataError without events and ConvergenceError (with the last iterate) on failure.
IntensityModel fit_intensity(const LongitudinalDataset& data, BaselineKind family, const CovariateMap& g,
                             const IntensityFitOptions& options = {});

/// w_ij = 1 / lambda(t_ij | O_i(t_ij)).
ObservationWeights mean_weights(const IntensityModel& model, const LongitudinalDataset& data);
/// w_ijl = w_ij w_il.
std::vector<PairWeight> pair_weights(const IntensityModel& model, const LongitudinalDataset& data);

}  // namespace iifpca
