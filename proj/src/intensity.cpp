#include "iifpca/intensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "iifpca/bspline.hpp"
#include "iifpca/error.hpp"

namespace iifpca {

const char* to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::log_linear: return "log_linear";
    case BaselineKind::linear_shift: return "linear_shift";
  }
  return "unknown";
}

BaselineKind baseline_kind_from_string(const std::string& name) {
  if (name == "log_linear") return BaselineKind::log_linear;
  if (name == "linear_shift") return BaselineKind::linear_shift;
  throw InvalidArgument("unknown baseline family '" + name + "'");
}

namespace {

/// log lambda0(t) with its first and second derivatives in theta.
struct LogBaseline {
  double value;
  Eigen::Vector2d gradient;
  double second_shift;  // d^2/d shift^2 for linear_shift; everything else vanishes
};

bool log_baseline(BaselineKind kind, const Eigen::Ref<const Eigen::VectorXd>& theta, double t, LogBaseline& out) {
  switch (kind) {
    case BaselineKind::log_linear:
      out.value = theta[0] + theta[1] * t;
      out.gradient = {1.0, t};
      out.second_shift = 0.0;
      return std::isfinite(out.value);
    case BaselineKind::linear_shift: {
      const double u = t + theta[1];
      if (!(u > 0.0)) return false;
      out.value = theta[0] + std::log(u);
      out.gradient = {1.0, 1.0 / u};
      out.second_shift = -1.0 / (u * u);
      return std::isfinite(out.value);
    }
  }
  return false;
}

}  // namespace

BaselineFamily::BaselineFamily(BaselineKind kind, Eigen::Vector2d theta) : kind_(kind), theta_(std::move(theta)) {}

BaselineFamily BaselineFamily::log_linear(double intercept, double slope) {
  return BaselineFamily(BaselineKind::log_linear, Eigen::Vector2d(intercept, slope));
}

BaselineFamily BaselineFamily::linear_shift(double scale, double shift) {
  if (!(scale > 0.0)) throw DomainError("linear_shift baseline: scale must be positive");
  return BaselineFamily(BaselineKind::linear_shift, Eigen::Vector2d(std::log(scale), shift));
}

double BaselineFamily::value(double t) const {
  LogBaseline lb{};
  if (!log_baseline(kind_, theta_, t, lb)) {
    std::ostringstream os;
    os << to_string(kind_) << " baseline is not positive at t = " << t;
    throw DomainError(os.str());
  }
  return std::exp(lb.value);
}

void BaselineFamily::check_positive(double tau) const {
  // both families are monotone in t, so the endpoints decide
  value(0.0);
  value(tau);
}

Eigen::VectorXd CovariateMap::operator()(const Eigen::VectorXd& z) const {
  if (output_dim == 0) return Eigen::VectorXd();
  if (z.size() != input_dim) throw InvalidArgument("covariate map '" + name + "': input dimension mismatch");
  if (name == "identity") return z;
  if (name == "scaled") return factor * z;
  throw InvalidArgument("unknown covariate map '" + name + "'");
}

// ---------------------------------------------------------------------------

IntensityModel::IntensityModel(BaselineFamily baseline, Eigen::VectorXd beta, CovariateMap g, CovariateLookup lookup)
    : baseline_(std::move(baseline)), beta_(std::move(beta)), g_(std::move(g)), lookup_(lookup) {
  if (beta_.size() != g_.output_dim)
    throw InvalidArgument("IntensityModel: beta has dimension " + std::to_string(beta_.size()) +
                          " but g has output dimension " + std::to_string(g_.output_dim));
}

Eigen::VectorXd IntensityModel::params() const {
  Eigen::VectorXd p(BaselineFamily::num_params() + beta_.size());
  p << baseline_.theta(), beta_;
  return p;
}

IntensityModel IntensityModel::with_params(const Eigen::VectorXd& params) const {
  const int nb = BaselineFamily::num_params();
  if (params.size() != nb + beta_.size()) throw InvalidArgument("IntensityModel: parameter length mismatch");
  return IntensityModel(BaselineFamily(baseline_.kind(), params.head<2>()), params.tail(beta_.size()), g_, lookup_);
}

void IntensityModel::set_fit(Eigen::MatrixXd information, OptimizerReport report) {
  information_ = std::move(information);
  report_ = std::move(report);
  fitted_ = true;
}

Eigen::VectorXd IntensityModel::standard_errors() const {
  if (!fitted_ || information_.size() == 0) return {};
  const Eigen::MatrixXd cov = information_.ldlt().solve(Eigen::MatrixXd::Identity(information_.rows(), information_.cols()));
  return cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

double intensity_at(const IntensityModel& model, const Subject& subject, double t) {
  double lin = 0.0;
  if (model.covariate_map().output_dim > 0)
    lin = model.covariate_map()(covariate_at(subject, t, model.lookup())).dot(model.beta());
  const double value = model.baseline().value(t) * std::exp(lin);
  if (!(value > 0.0) || !std::isfinite(value)) {
    std::ostringstream os;
    os << "intensity for subject " << subject.id << " at t = " << t << " is " << value;
    throw DomainError(os.str());
  }
  return value;
}

// ---------------------------------------------------------------------------

LikelihoodData::LikelihoodData(const LongitudinalDataset& data, const CovariateMap& g, CovariateLookup lookup,
                               int min_nodes_per_subject)
    : dim_(g.output_dim) {
  std::vector<Eigen::VectorXd> ev_g;
  std::vector<Eigen::VectorXd> nd_g;
  for (const Subject& s : data.subjects()) {
    const double tau = s.followup_end;
    exposure_ += tau;
    for (const Observation& o : s.outcomes) {
      if (o.time < 0.0 || o.time > tau) {
        std::ostringstream os;
        os << "subject " << s.id << ": observation time " << o.time << " outside [0, " << tau << "]";
        throw DataError(os.str());
      }
      event_times_.push_back(o.time);
      if (dim_ > 0) ev_g.push_back(g(covariate_at(s, o.time, lookup)));
    }
    if (!(tau > 0.0)) continue;

    std::vector<double> breaks{0.0};
    if (dim_ > 0)
      for (const CovariateRecord& r : s.covariates)
        if (r.time > 0.0 && r.time < tau) breaks.push_back(r.time);
    breaks.push_back(tau);
    const int segments = static_cast<int>(breaks.size()) - 1;
    const int per_segment = std::max(4, (min_nodes_per_subject + segments - 1) / segments);
    const QuadratureRule rule = composite_gauss_legendre(breaks, per_segment);
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      node_times_.push_back(rule.nodes[k]);
      node_weights_.push_back(rule.weights[k]);
      if (dim_ > 0) nd_g.push_back(g(covariate_at(s, rule.nodes[k], lookup)));
    }
  }
  event_g_.resize(static_cast<Eigen::Index>(event_times_.size()), dim_);
  for (std::size_t i = 0; i < ev_g.size(); ++i) event_g_.row(static_cast<Eigen::Index>(i)) = ev_g[i].transpose();
  node_g_.resize(static_cast<Eigen::Index>(node_times_.size()), dim_);
  for (std::size_t i = 0; i < nd_g.size(); ++i) node_g_.row(static_cast<Eigen::Index>(i)) = nd_g[i].transpose();
}

namespace {

constexpr int kNumTheta = BaselineFamily::num_params();

/// Returns false when lambda0 is not positive somewhere on the grid.
bool evaluate_nll(BaselineKind kind, const Eigen::VectorXd& params, const LikelihoodData& data, bool with_hessian,
                  LikelihoodDerivatives& out) {
  const int p = data.covariate_dim();
  const int dim = kNumTheta + p;
  if (params.size() != dim) throw InvalidArgument("neg_log_likelihood: parameter length mismatch");
  const auto theta = params.head(kNumTheta);
  const auto beta = params.tail(p);

  double value = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd hess;
  if (with_hessian) hess = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd d(dim);

  LogBaseline lb{};
  const auto& ev_t = data.event_times();
  for (std::size_t k = 0; k < ev_t.size(); ++k) {
    if (!log_baseline(kind, theta, ev_t[k], lb)) return false;
    const auto row = data.event_covariates().row(static_cast<Eigen::Index>(k));
    value -= lb.value + (p > 0 ? row.dot(beta) : 0.0);
    grad.head(kNumTheta) -= lb.gradient;
    if (p > 0) grad.tail(p) -= row.transpose();
    if (with_hessian) hess(1, 1) -= lb.second_shift;
  }

  const auto& nd_t = data.node_times();
  const auto& nd_w = data.node_weights();
  for (std::size_t k = 0; k < nd_t.size(); ++k) {
    if (!log_baseline(kind, theta, nd_t[k], lb)) return false;
    const auto row = data.node_covariates().row(static_cast<Eigen::Index>(k));
    const double e = nd_w[k] * std::exp(lb.value + (p > 0 ? row.dot(beta) : 0.0));
    value += e;
    d.head(kNumTheta) = lb.gradient;
    if (p > 0) d.tail(p) = row.transpose();
    grad.noalias() += e * d;
    if (with_hessian) {
      hess.noalias() += e * d * d.transpose();
      hess(1, 1) += e * lb.second_shift;
    }
  }
  out.value = value;
  out.gradient = std::move(grad);
  out.hessian = std::move(hess);
  return std::isfinite(value) && out.gradient.allFinite();
}

[[noreturn]] void throw_nonpositive(BaselineKind kind) {
  throw DomainError(std::string(to_string(kind)) + " baseline is not positive on the integration grid");
}

}  // namespace

LikelihoodDerivatives neg_log_likelihood_derivatives(BaselineKind kind, const Eigen::VectorXd& params,
                                                     const LikelihoodData& data, bool with_hessian) {
  LikelihoodDerivatives out;
  if (!evaluate_nll(kind, params, data, with_hessian, out)) throw_nonpositive(kind);
  return out;
}

double neg_log_likelihood(BaselineKind kind, const Eigen::VectorXd& params, const LikelihoodData& data) {
  return neg_log_likelihood_derivatives(kind, params, data, false).value;
}

double neg_log_likelihood(const IntensityModel& model, const LongitudinalDataset& data, int min_nodes_per_subject) {
  const LikelihoodData ld(data, model.covariate_map(), model.lookup(), min_nodes_per_subject);
  return neg_log_likelihood(model.baseline().kind(), model.params(), ld);
}

// ---------------------------------------------------------------------------

namespace {

struct Iterate {
  Eigen::VectorXd x;
  LikelihoodDerivatives d;
};

class Minimizer {
 public:
  Minimizer(BaselineKind kind, const LikelihoodData& data, const IntensityFitOptions& options)
      : kind_(kind), data_(data), options_(options),
        scale_(std::max<double>(1.0, static_cast<double>(data.num_events()))) {}

  bool evaluate(const Eigen::VectorXd& x, bool hessian, LikelihoodDerivatives& out) const {
    return evaluate_nll(kind_, x, data_, hessian, out);
  }

  double gradient_norm(const LikelihoodDerivatives& d) const { return d.gradient.cwiseAbs().maxCoeff() / scale_; }
  bool converged(const LikelihoodDerivatives& d) const { return gradient_norm(d) < options_.gradient_tolerance; }

  /// Quasi-Newton with Armijo backtracking; returns the final iterate.
  Iterate bfgs(Iterate it, int& iterations) const {
    const Eigen::Index n = it.x.size();
    Eigen::MatrixXd hinv = initial_inverse_hessian(it);
    for (iterations = 0; iterations < options_.max_iterations; ++iterations) {
      if (converged(it.d)) break;
      Eigen::VectorXd dir = -hinv * it.d.gradient;
      double slope = it.d.gradient.dot(dir);
      if (!(slope < 0.0)) {
        hinv = Eigen::MatrixXd::Identity(n, n) / std::max(1.0, it.d.gradient.norm());
        dir = -hinv * it.d.gradient;
        slope = it.d.gradient.dot(dir);
      }
      Iterate next;
      if (!line_search(it, dir, slope, next)) break;
      // progress at rounding level: leave the rest to the Newton polish
      const bool stalled = it.d.value - next.d.value <= 1e-13 * std::max(1.0, std::abs(it.d.value));
      const Eigen::VectorXd s = next.x - it.x;
      const Eigen::VectorXd y = next.d.gradient - it.d.gradient;
      const double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm()) {
        const double rho = 1.0 / sy;
        const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
        hinv = left * hinv * left.transpose() + rho * s * s.transpose();
      }
      it = std::move(next);
      if (stalled) {
        ++iterations;
        break;
      }
    }
    return it;
  }

  /// Damped Newton steps using the analytic Hessian. Near the optimum the objective
  /// changes by less than its rounding error, so a step is also accepted when the
  /// value stays within that error and the gradient shrinks.
  Iterate polish(Iterate it) const {
    for (int k = 0; k < 20; ++k) {
      LikelihoodDerivatives full;
      if (!evaluate(it.x, true, full)) break;
      it.d = full;
      if (gradient_norm(it.d) < 1e-3 * options_.gradient_tolerance) break;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(it.d.hessian);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
      const Eigen::VectorXd dir = -ldlt.solve(it.d.gradient);
      const double slope = it.d.gradient.dot(dir);
      const double rounding = 1e-12 * std::max(1.0, std::abs(it.d.value));
      bool moved = false;
      Iterate next;
      double step = 1.0;
      for (int h = 0; h < 40 && !moved; ++h, step *= 0.5) {
        next.x = it.x + step * dir;
        if (!evaluate(next.x, false, next.d)) continue;
        moved = next.d.value <= it.d.value + 1e-4 * step * slope ||
                (next.d.value <= it.d.value + rounding && gradient_norm(next.d) < gradient_norm(it.d));
      }
      if (!moved) break;
      it = std::move(next);
    }
    return it;
  }

  /// Levenberg-Marquardt style trust region on the exact Hessian.
  Iterate trust_region(Iterate it, int& iterations) const {
    const Eigen::Index n = it.x.size();
    double mu = -1.0;
    for (iterations = 0; iterations < options_.max_iterations; ++iterations) {
      LikelihoodDerivatives full;
      if (!evaluate(it.x, true, full)) break;
      it.d = full;
      if (converged(it.d)) break;
      if (mu < 0.0) mu = 1e-3 * std::max(1.0, it.d.hessian.diagonal().cwiseAbs().maxCoeff());
      bool moved = false;
      for (int attempt = 0; attempt < 60 && !moved; ++attempt) {
        const Eigen::MatrixXd shifted = it.d.hessian + mu * Eigen::MatrixXd::Identity(n, n);
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() != Eigen::Success) {
          mu *= 4.0;
          continue;
        }
        const Eigen::VectorXd step = -llt.solve(it.d.gradient);
        const double predicted = -(it.d.gradient.dot(step) + 0.5 * step.dot(it.d.hessian * step));
        Iterate trial{it.x + step, {}};
        if (!evaluate(trial.x, false, trial.d) || !(predicted > 0.0)) {
          mu *= 4.0;
          continue;
        }
        const double ratio = (it.d.value - trial.d.value) / predicted;
        if (ratio > 0.25) {
          it = std::move(trial);
          mu = std::max(mu / 3.0, 1e-12);
          moved = true;
        } else {
          mu *= 4.0;
        }
      }
      if (!moved) break;
    }
    return it;
  }

 private:
  Eigen::MatrixXd initial_inverse_hessian(const Iterate& it) const {
    const Eigen::Index n = it.x.size();
    LikelihoodDerivatives full;
    if (evaluate(it.x, true, full)) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(full.hessian);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 0.0)
        return ldlt.solve(Eigen::MatrixXd::Identity(n, n));
    }
    return Eigen::MatrixXd::Identity(n, n) / std::max(1.0, it.d.gradient.norm());
  }

  bool line_search(const Iterate& it, const Eigen::VectorXd& dir, double slope, Iterate& next) const {
    double step = 1.0;
    for (int k = 0; k < 80; ++k, step *= 0.5) {
      next.x = it.x + step * dir;
      if (evaluate(next.x, false, next.d) && next.d.value <= it.d.value + 1e-4 * step * slope) return true;
    }
    return false;
  }

  BaselineKind kind_;
  const LikelihoodData& data_;
  const IntensityFitOptions& options_;
  double scale_;
};

Eigen::VectorXd default_init(BaselineKind kind, const LongitudinalDataset& data, int p) {
  double events = 0.0;
  double exposure = 0.0;
  double tau_max = data.domain_end();
  const double shift = 0.25 * tau_max;
  double shifted_exposure = 0.0;
  for (const Subject& s : data.subjects()) {
    events += static_cast<double>(s.outcomes.size());
    exposure += s.followup_end;
    shifted_exposure += 0.5 * s.followup_end * s.followup_end + shift * s.followup_end;
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(kNumTheta + p);
  if (kind == BaselineKind::log_linear) {
    x[0] = std::log(events / exposure);
  } else {
    x[0] = std::log(events / shifted_exposure);
    x[1] = shift;
  }
  return x;
}

}  // namespace

IntensityModel fit_intensity(const LongitudinalDataset& data, BaselineKind family, const CovariateMap& g,
                             const IntensityFitOptions& options) {
  if (data.total_observations() == 0) throw DataError("fit_intensity: the dataset has no observation events");
  const LikelihoodData ld(data, g, options.lookup, options.min_nodes_per_subject);
  const int p = g.output_dim;
  const Eigen::VectorXd x0 = options.init ? *options.init : default_init(family, data, p);
  if (x0.size() != kNumTheta + p) throw InvalidArgument("fit_intensity: init has the wrong length");

  Minimizer minimizer(family, ld, options);
  Iterate start{x0, {}};
  if (!minimizer.evaluate(x0, false, start.d))
    throw DomainError("fit_intensity: baseline is not positive at the initial parameters");

  OptimizerReport report;
  int iterations = 0;
  Iterate best = minimizer.polish(minimizer.bfgs(start, iterations));
  report.method = "bfgs";
  report.iterations = iterations;

  if (!minimizer.converged(best.d)) {
    // retry once from a perturbed start
    Iterate retry{x0, {}};
    retry.x.array() += 0.05;
    if (!minimizer.evaluate(retry.x, false, retry.d)) retry = start;
    Iterate tr = minimizer.polish(minimizer.trust_region(retry, iterations));
    report.restarts = 1;
    report.method = "trust_region";
    report.iterations += iterations;
    if (minimizer.converged(tr.d) || tr.d.value < best.d.value) best = std::move(tr);
  }

  LikelihoodDerivatives final_d;
  minimizer.evaluate(best.x, true, final_d);
  report.objective = final_d.value;
  report.gradient_norm = minimizer.gradient_norm(final_d);
  report.converged = minimizer.converged(final_d);
  if (!report.converged) {
    std::ostringstream os;
    os << "fit_intensity: no convergence after " << report.iterations << " iterations (scaled gradient norm "
       << report.gradient_norm << ")";
    throw ConvergenceError(os.str(), best.x, report.gradient_norm);
  }

  IntensityModel model(BaselineFamily(family, best.x.head<2>()), best.x.tail(p), g, options.lookup);
  model.set_fit(final_d.hessian, report);
  return model;
}

ObservationWeights mean_weights(const IntensityModel& model, const LongitudinalDataset& data) {
  ObservationWeights w;
  w.values.reserve(data.size());
  for (const Subject& s : data.subjects()) {
    std::vector<double> row;
    row.reserve(s.outcomes.size());
    for (const Observation& o : s.outcomes) row.push_back(1.0 / intensity_at(model, s, o.time));
    w.values.push_back(std::move(row));
  }
  w.validate(data);
  return w;
}

std::vector<PairWeight> pair_weights(const IntensityModel& model, const LongitudinalDataset& data) {
  return pair_weights(mean_weights(model, data), data);
}

}  // namespace iifpca
