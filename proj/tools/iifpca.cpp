// iifpca: simulate | fit | experiment | rates

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iifpca/bspline.hpp"
#include "iifpca/covariance.hpp"
#include "iifpca/error.hpp"
#include "iifpca/fpca.hpp"
#include "iifpca/grid.hpp"
#include "iifpca/intensity.hpp"
#include "iifpca/io.hpp"
#include "iifpca/mean.hpp"
#include "iifpca/serialize.hpp"
#include "iifpca/simulate.hpp"

namespace fs = std::filesystem;
using namespace iifpca;

namespace {

struct Common {
  std::string output_dir;
  std::string prefix;

  std::string path(const std::string& name) const {
    return (fs::path(output_dir) / (prefix.empty() ? name : prefix + "_" + name)).string();
  }
};

struct SimFlags {
  int n = 200;
  std::uint64_t seed = 1;
  int replicate = 0;
  double beta = 3.0;
  double domain_end = 3.0;
  int num_terms = 50;
  double noise_variance = 0.01;
  double mean_covariate_obs = 40.0;
  std::string sim_config;  // JSON overrides applied under the flags
};

struct BasisFlags {
  int knots = -1;
  int order = 4;
  int penalty_order = 2;
  int grid_points = 101;
};

struct FitFlags {
  std::string outcomes, covariates, followup;
  std::string arm = "EW";
  std::string truth;
  int components = 3;
  std::string family = "linear_shift";
  std::string lookup = "carry_forward";
  std::string outcome_transform = "identity";
  std::string covariate_transform = "identity";
  std::string time_unit = "months";
  std::string cov_selector = "gcv";
  std::optional<double> lambda_mean, lambda_cov;
  int lambda_points = 40;
  double lambda_lo = 1e-8, lambda_hi = 1e4;
  bool truncate = false;
  double truncate_quantile = 1.0;
};

struct ExpFlags {
  int reps = 50;
  int jobs = 1;
  std::vector<std::string> arms{"UW", "TW", "EW"};
  std::string cov_selector = "gcv";
  std::vector<int> sizes{200, 400, 800};
  std::string rate_arm = "EW";
};

SimConfig make_sim_config(const SimFlags& f, const CLI::App& sub) {
  SimConfig c;
  if (!f.sim_config.empty()) c = sim_config_from_json(read_json(f.sim_config));
  auto given = [&](const char* name) { return sub.count(name) > 0 || f.sim_config.empty(); };
  if (given("--n")) c.n = f.n;
  if (given("--seed")) c.seed = f.seed;
  if (given("--beta")) c.beta = f.beta;
  if (given("--domain-end")) c.domain_end = f.domain_end;
  if (given("--num-terms")) c.num_terms = f.num_terms;
  if (given("--noise-variance")) c.noise_variance = f.noise_variance;
  if (given("--mean-covariate-obs")) c.mean_covariate_obs = f.mean_covariate_obs;
  c.validate();
  return c;
}

void add_sim_flags(CLI::App* sub, SimFlags& f) {
  sub->add_option("--n", f.n, "Number of subjects")->check(CLI::PositiveNumber);
  sub->add_option("--seed", f.seed, "Random seed");
  sub->add_option("--beta", f.beta, "Covariate effect on the visit intensity");
  sub->add_option("--domain-end", f.domain_end, "End of follow-up tau (integer)");
  sub->add_option("--num-terms", f.num_terms, "Number of terms in the latent covariate expansion");
  sub->add_option("--noise-variance", f.noise_variance, "Variance of the outcome measurement error");
  sub->add_option("--mean-covariate-obs", f.mean_covariate_obs, "Mean number of extra covariate records");
  sub->add_option("--sim-config", f.sim_config, "JSON file with simulation settings (flags take precedence)")
      ->check(CLI::ExistingFile);
}

void add_basis_flags(CLI::App* sub, BasisFlags& f) {
  sub->add_option("--knots", f.knots, "Interior knots K (default floor(n^0.3))");
  sub->add_option("--order", f.order, "Spline order l (4 = cubic)")->check(CLI::Range(2, 10));
  sub->add_option("--penalty-order", f.penalty_order, "Derivative order m of the roughness penalty")
      ->check(CLI::Range(1, 9));
  sub->add_option("--grid-points", f.grid_points, "Points of the evaluation grid on [0, tau]")
      ->check(CLI::Range(2, 100000));
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir);
}

void write_truth(const SimConfig& config, const std::string& path, int points) {
  const TrueFunctions truth = true_functions(config);
  const std::vector<double> grid = uniform_grid(config.domain_end, points);
  std::vector<CsvColumn> cols{{"t", grid}, {"mu", {}}, {"variance", {}}, {"phi1", {}}, {"phi2", {}}, {"phi3", {}}};
  for (const double t : grid) {
    cols[1].values.push_back(truth.mean(t));
    cols[2].values.push_back(truth.cov(t, t));
    for (int k = 1; k <= 3; ++k) cols[static_cast<std::size_t>(2 + k)].values.push_back(truth.phi(k, t));
  }
  write_columns(path, cols);
}

int cmd_simulate(const Common& io, const SimFlags& sf, const BasisFlags& bf, const CLI::App& sub) {
  const SimConfig config = make_sim_config(sf, sub);
  ensure_dir(io.output_dir);
  const SimulatedData sim = simulate_dataset(config, sf.replicate);
  Manifest manifest("simulate", Json{{"simulation", to_json(config)}, {"replicate", sf.replicate}});

  const std::string out = io.path("outcomes.csv"), cov = io.path("covariates.csv"), fol = io.path("followup.csv");
  save_csv(sim.data, out, cov, fol);
  const std::string truth = io.path("truth.csv");
  write_truth(config, truth, bf.grid_points);
  const std::string cfg = io.path("sim_config.json");
  write_json(cfg, to_json(config));

  manifest.add_artifact(out, "outcomes");
  manifest.add_artifact(cov, "covariates");
  manifest.add_artifact(fol, "followup");
  manifest.add_artifact(truth, "truth_grid");
  manifest.add_artifact(cfg, "simulation_config");
  manifest.extra()["subjects"] = sim.data.size();
  manifest.extra()["observations"] = sim.data.total_observations();
  manifest.extra()["mean_observations_per_subject"] =
      static_cast<double>(sim.data.total_observations()) / static_cast<double>(sim.data.size());
  manifest.write(io.path("manifest.json"));
  std::cout << "simulated " << sim.data.size() << " subjects, " << sim.data.total_observations()
            << " observations -> " << io.output_dir << "\n";
  return 0;
}

void write_curve(const std::string& path, const GcvCurve& curve, const char* score_name) {
  std::vector<CsvColumn> cols{{"lambda", curve.lambdas}, {score_name, curve.scores}, {"selected", {}}};
  for (std::size_t i = 0; i < curve.lambdas.size(); ++i) cols[2].values.push_back(i == curve.best ? 1.0 : 0.0);
  write_columns(path, cols);
}

int cmd_fit(const Common& io, const FitFlags& ff, const BasisFlags& bf) {
  CsvSchema schema;
  schema.time_unit = ff.time_unit;
  LoadReport report;
  LongitudinalDataset data =
      load_csv(ff.outcomes, ff.covariates, ff.followup.empty() ? std::nullopt : std::optional(ff.followup), schema,
               &report);
  if (data.empty()) throw DataError("fit: dataset has no subjects");
  data = apply_transform(data, outcome_transform_from_string(ff.outcome_transform),
                         covariate_transform_from_string(ff.covariate_transform));
  const Arm arm = arm_from_string(ff.arm);
  const CovariateLookup lookup = covariate_lookup_from_string(ff.lookup);
  ensure_dir(io.output_dir);

  Json config{{"outcomes", ff.outcomes},
              {"covariates", ff.covariates},
              {"followup", ff.followup},
              {"arm", to_string(arm)},
              {"truth", ff.truth},
              {"components", ff.components},
              {"family", ff.family},
              {"lookup", ff.lookup},
              {"outcome_transform", ff.outcome_transform},
              {"covariate_transform", ff.covariate_transform},
              {"time_unit", ff.time_unit},
              {"cov_selector", ff.cov_selector},
              {"lambda_mean", ff.lambda_mean ? Json(*ff.lambda_mean) : Json(nullptr)},
              {"lambda_cov", ff.lambda_cov ? Json(*ff.lambda_cov) : Json(nullptr)},
              {"lambda_grid", {{"points", ff.lambda_points}, {"lo", ff.lambda_lo}, {"hi", ff.lambda_hi}}},
              {"truncate_quantile", ff.truncate ? Json(ff.truncate_quantile) : Json(nullptr)},
              {"knots", bf.knots},
              {"order", bf.order},
              {"penalty_order", bf.penalty_order},
              {"grid_points", bf.grid_points}};
  Manifest manifest("fit", config);
  manifest.extra()["input"] = {{"outcome_rows", report.outcome_rows},
                               {"covariate_rows", report.covariate_rows},
                               {"followup_rows", report.followup_rows},
                               {"subjects", report.subjects},
                               {"metadata", data.metadata()},
                               {"sha256",
                                {{"outcomes", sha256_file(ff.outcomes)},
                                 {"covariates", sha256_file(ff.covariates)},
                                 {"followup", ff.followup.empty() ? Json(nullptr) : Json(sha256_file(ff.followup))}}}};

  ObservationWeights weights;
  switch (arm) {
    case Arm::UW: weights = ObservationWeights::unit(data); break;
    case Arm::TW: {
      if (ff.truth.empty()) throw InvalidArgument("fit: the TW arm needs --truth <sim_config.json>");
      const SimConfig truth = sim_config_from_json(read_json(ff.truth));
      weights = mean_weights(true_intensity(truth), data);
      break;
    }
    case Arm::EW: {
      IntensityFitOptions opts;
      opts.lookup = lookup;
      const IntensityModel model =
          fit_intensity(data, baseline_kind_from_string(ff.family), CovariateMap::identity(data.covariate_dim()), opts);
      const std::string path = io.path("intensity.json");
      write_json(path, to_json(model));
      manifest.add_artifact(path, "intensity");
      manifest.extra()["beta_hat"] = std::vector<double>(model.beta().data(), model.beta().data() + model.beta().size());
      const Eigen::VectorXd se = model.standard_errors();
      const auto nb = model.beta().size();
      manifest.extra()["beta_se"] = std::vector<double>(se.data() + se.size() - nb, se.data() + se.size());
      weights = mean_weights(model, data);
      break;
    }
  }
  if (ff.truncate) weights = truncate_weights(weights, ff.truncate_quantile);

  const double tau = data.domain_end();
  const int knots = bf.knots >= 0 ? bf.knots : default_num_interior_knots(static_cast<int>(data.size()));
  const SplineBasis basis = build_basis(tau, knots, bf.order);

  GcvCurve mean_curve;
  std::vector<double> mgrid;
  if (!ff.lambda_mean) {
    const PenalizedLeastSquares sys = mean_system(WeightedObservations::from(data, weights), basis, bf.penalty_order);
    mgrid = sys.lambda_grid(ff.lambda_points, ff.lambda_lo, ff.lambda_hi);
  }
  const MeanFit mean = ff.lambda_mean ? fit_mean(data, weights, basis, *ff.lambda_mean, bf.penalty_order)
                                      : gcv_select_mean(data, weights, basis, mgrid, bf.penalty_order, &mean_curve);

  const std::vector<RawCovPoint> points = raw_cov_points(data, mean, pair_weights(weights, data));
  GcvCurve cov_curve;
  const CovFit cov = [&] {
    if (ff.lambda_cov) return fit_cov(points, basis, *ff.lambda_cov, bf.penalty_order);
    const std::vector<double> cgrid =
        cov_system(points, basis, bf.penalty_order).lambda_grid(ff.lambda_points, ff.lambda_lo, ff.lambda_hi);
    return cov_selector_from_string(ff.cov_selector) == CovSelector::gcv
               ? gcv_select_cov(points, basis, cgrid, bf.penalty_order, &cov_curve)
               : subject_cv_select_cov(points, basis, cgrid, bf.penalty_order, &cov_curve);
  }();
  const int p = std::min(ff.components, basis.dim());
  const FpcaResult fp = eigen_decompose(cov, p);

  const std::vector<double> grid = uniform_grid(tau, bf.grid_points);
  auto emit_json = [&](const std::string& name, const Json& j, const char* kind) {
    const std::string path = io.path(name);
    write_json(path, j);
    manifest.add_artifact(path, kind);
  };
  auto emit_csv = [&](const std::string& name, const std::vector<CsvColumn>& cols, const char* kind) {
    const std::string path = io.path(name);
    write_columns(path, cols);
    manifest.add_artifact(path, kind);
  };
  emit_json("mean.json", to_json(mean), "mean_fit");
  emit_json("cov.json", to_json(cov), "cov_fit");
  emit_json("fpca.json", to_json(fp), "fpca");

  const Eigen::VectorXd mu = mean.evaluate(grid);
  emit_csv("mean_grid.csv", {{"t", grid}, {"mu_hat", std::vector<double>(mu.data(), mu.data() + mu.size())}},
           "mean_grid");
  const Eigen::MatrixXd c = cov.evaluate_grid(grid);
  std::vector<CsvColumn> cc{{"s", {}}, {"t", {}}, {"c_hat", {}}};
  for (std::size_t a = 0; a < grid.size(); ++a)
    for (std::size_t b = 0; b < grid.size(); ++b) {
      cc[0].values.push_back(grid[a]);
      cc[1].values.push_back(grid[b]);
      cc[2].values.push_back(c(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
    }
  emit_csv("cov_grid.csv", cc, "cov_grid");

  std::vector<CsvColumn> ev{{"component", {}}, {"eigenvalue", {}}, {"cumulative_share", {}}};
  const std::vector<double> shares = fp.cumulative_shares();
  for (int k = 0; k < fp.retained; ++k) {
    ev[0].values.push_back(k + 1);
    ev[1].values.push_back(fp.eigenvalues[k]);
    ev[2].values.push_back(shares[static_cast<std::size_t>(k)]);
  }
  emit_csv("eigenvalues.csv", ev, "eigenvalues");
  std::vector<CsvColumn> ef{{"t", grid}};
  for (int k = 0; k < fp.retained; ++k) {
    const Eigen::VectorXd phi = fp.eigenfunction(k, grid);
    ef.push_back({"phi" + std::to_string(k + 1), std::vector<double>(phi.data(), phi.data() + phi.size())});
  }
  emit_csv("eigenfunctions.csv", ef, "eigenfunctions");
  if (!mean_curve.lambdas.empty()) {
    write_curve(io.path("gcv_mean.csv"), mean_curve, "gcv");
    manifest.add_artifact(io.path("gcv_mean.csv"), "gcv_mean");
  }
  if (!cov_curve.lambdas.empty()) {
    write_curve(io.path("gcv_cov.csv"), cov_curve, ff.cov_selector == "gcv" ? "gcv" : "cv");
    manifest.add_artifact(io.path("gcv_cov.csv"), "gcv_cov");
  }

  manifest.extra()["summary"] = {{"subjects", data.size()},
                                 {"observations", data.total_observations()},
                                 {"pairs", points.size()},
                                 {"interior_knots", knots},
                                 {"lambda_mean", mean.lambda},
                                 {"lambda_cov", cov.lambda},
                                 {"mean_theory_bound", mean.theory_bound()},
                                 {"cov_theory_bound", cov.theory_bound()},
                                 {"retained", fp.retained},
                                 {"trace", fp.trace},
                                 {"positive_variance", fp.positive_variance},
                                 {"negative_eigenvalues", fp.num_negative()}};
  manifest.write(io.path("manifest.json"));
  std::cout << "fit " << to_string(arm) << ": " << data.size() << " subjects, lambda_mu " << mean.lambda
            << ", lambda_C " << cov.lambda << ", " << fp.retained << " components -> " << io.output_dir << "\n";
  return 0;
}

ExperimentOptions make_options(const ExpFlags& ef, const BasisFlags& bf) {
  ExperimentOptions o;
  o.arms.clear();
  for (const std::string& a : ef.arms) o.arms.push_back(arm_from_string(a));
  o.jobs = ef.jobs;
  o.grid_points = bf.grid_points;
  o.num_interior_knots = bf.knots;
  o.order = bf.order;
  o.penalty_order = bf.penalty_order;
  o.cov_selector = cov_selector_from_string(ef.cov_selector);
  return o;
}

int cmd_experiment(const Common& io, const SimFlags& sf, const BasisFlags& bf, const ExpFlags& ef,
                   const CLI::App& sub) {
  SimConfig config = make_sim_config(sf, sub);
  config.replicates = ef.reps;
  const ExperimentOptions options = make_options(ef, bf);
  ensure_dir(io.output_dir);
  const ExperimentResult res = run_experiment(config, options);
  Manifest manifest("experiment", Json{{"simulation", to_json(config)}, {"options", to_json(options)}});

  // Table 1 layout: one row per arm and metric. sd is empty with a single replicate.
  const std::string summary = io.path("summary.csv");
  {
    std::ofstream f(summary, std::ios::binary);
    if (!f) throw Error("cannot write " + summary);
    f << "arm,metric,count,failures,mean,sd,median\n";
    for (const ArmSummary& s : res.summary) {
      const std::pair<const char*, const MetricSummary*> rows[] = {
          {"mise_mean", &s.mise_mean}, {"mise_cov", &s.mise_cov}, {"mise_phi1", &s.mise_phi}};
      for (const auto& [name, m] : rows)
        f << to_string(s.arm) << ',' << name << ',' << m->count << ',' << s.failures << ',' << format_double(m->mean)
          << ',' << (std::isfinite(m->sd) ? format_double(m->sd) : std::string()) << ','
          << format_double(m->median) << '\n';
    }
  }
  manifest.add_artifact(summary, "summary");

  const std::string reps = io.path("replicates.csv");
  {
    std::ofstream f(reps, std::ios::binary);
    if (!f) throw Error("cannot write " + reps);
    f << "replicate,arm,ok,mean_visits,pairs,beta_hat,beta_se,mise_mean,mise_cov,mise_phi1,sup_mean,sup_cov,kappa1,"
         "lambda_mean,lambda_cov,error\n";
    for (const ReplicateResult& r : res.replicates)
      for (const ArmResult& a : r.arms) {
        f << r.replicate << ',' << to_string(a.arm) << ',' << (a.ok ? 1 : 0) << ',' << format_double(r.mean_visits)
          << ',' << r.num_pairs << ',' << (r.intensity_fitted ? format_double(r.beta_hat) : "") << ','
          << (r.intensity_fitted ? format_double(r.beta_se) : "");
        for (const double v : {a.mise_mean, a.mise_cov, a.mise_phi, a.sup_mean, a.sup_cov, a.kappa1, a.lambda_mean,
                               a.lambda_cov})
          f << ',' << (a.ok ? format_double(v) : "");
        std::string err = a.error;
        for (char& ch : err)
          if (ch == ',' || ch == '\n') ch = ';';
        f << ',' << err << '\n';
      }
  }
  manifest.add_artifact(reps, "replicates");

  // Figure 2 plot data: truth and the per-arm average curves.
  const TrueFunctions truth = true_functions(config);
  std::vector<CsvColumn> mc{{"t", res.grid}, {"truth", {}}}, pc{{"t", res.grid}, {"truth", {}}};
  for (const double t : res.grid) {
    mc[1].values.push_back(truth.mean(t));
    pc[1].values.push_back(truth.phi1(t));
  }
  for (const ArmSummary& s : res.summary) {
    if (s.mean_curve.size() != static_cast<Eigen::Index>(res.grid.size())) continue;
    mc.push_back({to_string(s.arm), std::vector<double>(s.mean_curve.data(), s.mean_curve.data() + s.mean_curve.size())});
    pc.push_back({to_string(s.arm), std::vector<double>(s.phi_curve.data(), s.phi_curve.data() + s.phi_curve.size())});
  }
  write_columns(io.path("mean_curves.csv"), mc);
  manifest.add_artifact(io.path("mean_curves.csv"), "mean_curves");
  write_columns(io.path("phi1_curves.csv"), pc);
  manifest.add_artifact(io.path("phi1_curves.csv"), "phi1_curves");
  manifest.write(io.path("manifest.json"));

  for (const ArmSummary& s : res.summary)
    std::cout << to_string(s.arm) << ": MISE(mu) " << s.mise_mean.mean << "  MISE(C) " << s.mise_cov.mean
              << "  MISE(phi1) " << s.mise_phi.mean << "  failures " << s.failures << "\n";
  return 0;
}

int cmd_rates(const Common& io, const SimFlags& sf, const BasisFlags& bf, const ExpFlags& ef, const CLI::App& sub) {
  SimConfig config = make_sim_config(sf, sub);
  config.replicates = ef.reps;
  ExperimentOptions options = make_options(ef, bf);
  const Arm arm = arm_from_string(ef.rate_arm);
  ensure_dir(io.output_dir);
  const std::vector<RatePoint> pts = run_rates(config, ef.sizes, arm, options);
  options.arms = {arm};
  Manifest manifest("rates", Json{{"simulation", to_json(config)}, {"options", to_json(options)}, {"sizes", ef.sizes}});

  const std::string path = io.path("rates.csv");
  {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << "n,arm,metric,count,mean,sd,median\n";
    for (const RatePoint& r : pts) {
      const std::pair<const char*, const MetricSummary*> rows[] = {{"sup_mean", &r.summary.sup_mean},
                                                                    {"sup_cov", &r.summary.sup_cov},
                                                                    {"kappa1_error", &r.summary.kappa1_error},
                                                                    {"mise_mean", &r.summary.mise_mean},
                                                                    {"mise_cov", &r.summary.mise_cov},
                                                                    {"mise_phi1", &r.summary.mise_phi}};
      for (const auto& [name, m] : rows)
        f << r.n << ',' << to_string(arm) << ',' << name << ',' << m->count << ',' << format_double(m->mean) << ','
          << (std::isfinite(m->sd) ? format_double(m->sd) : std::string()) << ',' << format_double(m->median)
          << '\n';
    }
  }
  manifest.add_artifact(path, "rates");
  manifest.write(io.path("manifest.json"));
  for (const RatePoint& r : pts)
    std::cout << "n=" << r.n << "  median sup|mu| " << r.summary.sup_mean.median << "  median sup|C| "
              << r.summary.sup_cov.median << "  median |kappa1 err| " << r.summary.kappa1_error.median << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse-intensity-weighted functional principal component analysis"};
  app.set_config("--config", "", "TOML/INI file with option defaults (flags take precedence)");
  app.require_subcommand(1);

  Common io;
  const char* env = std::getenv("IIFPCA_OUTPUT_DIR");
  io.output_dir = env && *env ? env : ".";
  app.add_option("-o,--output-dir", io.output_dir, "Output directory (default $IIFPCA_OUTPUT_DIR or .)");
  app.add_option("--prefix", io.prefix, "Prefix for output file names");

  SimFlags sf;
  BasisFlags bf;
  FitFlags ff;
  ExpFlags ef;

  CLI::App* sim = app.add_subcommand("simulate", "Simulate one data set from the informative-visit design");
  add_sim_flags(sim, sf);
  sim->add_option("--replicate", sf.replicate, "Replicate index (selects an independent stream)");
  sim->add_option("--grid-points", bf.grid_points, "Points of the truth grid");

  CLI::App* fit = app.add_subcommand("fit", "Fit intensity, mean, covariance and eigenfunctions to CSV data");
  fit->add_option("--outcomes", ff.outcomes, "Outcome CSV (subject_id,time,value)")->required()->check(CLI::ExistingFile);
  fit->add_option("--covariates", ff.covariates, "Covariate CSV (subject_id,time,z1,...)")
      ->required()
      ->check(CLI::ExistingFile);
  fit->add_option("--followup", ff.followup, "Follow-up CSV (subject_id,followup_end)")->check(CLI::ExistingFile);
  fit->add_option("--arm", ff.arm, "Weights: UW (none), TW (true intensity), EW (estimated)")
      ->check(CLI::IsMember({"UW", "TW", "EW", "uw", "tw", "ew"}));
  fit->add_option("--truth", ff.truth, "sim_config.json giving the true intensity (TW arm)")->check(CLI::ExistingFile);
  fit->add_option("-p,--components", ff.components, "Number of eigenfunctions to keep")->check(CLI::Range(1, 1000));
  fit->add_option("--family", ff.family, "Baseline family of the fitted intensity")
      ->check(CLI::IsMember({"log_linear", "linear_shift"}));
  fit->add_option("--lookup", ff.lookup, "Covariate lookup between records")
      ->check(CLI::IsMember({"carry_forward", "linear"}));
  fit->add_option("--outcome-transform", ff.outcome_transform)->check(CLI::IsMember({"identity", "sqrt"}));
  fit->add_option("--covariate-transform", ff.covariate_transform)->check(CLI::IsMember({"identity", "log"}));
  fit->add_option("--time-unit", ff.time_unit, "Unit of the time columns (recorded, never converted)");
  fit->add_option("--cov-selector", ff.cov_selector, "Smoothing selector for the covariance")
      ->check(CLI::IsMember({"gcv", "subject_cv"}));
  fit->add_option("--lambda-mean", ff.lambda_mean, "Fixed lambda_mu (skips GCV)")->check(CLI::PositiveNumber);
  fit->add_option("--lambda-cov", ff.lambda_cov, "Fixed lambda_C (skips selection)")->check(CLI::PositiveNumber);
  fit->add_option("--lambda-points", ff.lambda_points, "Points of the lambda grid")->check(CLI::Range(2, 10000));
  fit->add_option("--lambda-lo", ff.lambda_lo, "Lower end of the lambda grid, in units of tr(M)/tr(Q)")
      ->check(CLI::PositiveNumber);
  fit->add_option("--lambda-hi", ff.lambda_hi, "Upper end of the lambda grid, in units of tr(M)/tr(Q)")
      ->check(CLI::PositiveNumber);
  auto* trunc = fit->add_option("--truncate-weights", ff.truncate_quantile, "Cap weights at this quantile");
  trunc->check(CLI::Range(0.0, 1.0));
  add_basis_flags(fit, bf);

  CLI::App* exp = app.add_subcommand("experiment", "Replicated simulation study (MISE table and mean curves)");
  add_sim_flags(exp, sf);
  add_basis_flags(exp, bf);
  exp->add_option("--reps", ef.reps, "Replicates")->check(CLI::PositiveNumber);
  exp->add_option("--jobs", ef.jobs, "Worker threads")->check(CLI::PositiveNumber);
  exp->add_option("--arms", ef.arms, "Arms to run")->check(CLI::IsMember({"UW", "TW", "EW", "uw", "tw", "ew"}));
  exp->add_option("--cov-selector", ef.cov_selector)->check(CLI::IsMember({"gcv", "subject_cv"}));

  CLI::App* rates = app.add_subcommand("rates", "Sup-norm errors across sample sizes");
  add_sim_flags(rates, sf);
  add_basis_flags(rates, bf);
  rates->add_option("--reps", ef.reps, "Replicates per sample size")->check(CLI::PositiveNumber);
  rates->add_option("--jobs", ef.jobs, "Worker threads")->check(CLI::PositiveNumber);
  rates->add_option("--sizes", ef.sizes, "Sample sizes")->delimiter(',');
  rates->add_option("--arm", ef.rate_arm, "Arm")->check(CLI::IsMember({"UW", "TW", "EW", "uw", "tw", "ew"}));
  rates->add_option("--cov-selector", ef.cov_selector)->check(CLI::IsMember({"gcv", "subject_cv"}));

  CLI11_PARSE(app, argc, argv);
  ff.truncate = trunc->count() > 0;
  if (rates->parsed() && !rates->count("--reps")) ef.reps = 20;

  try {
    if (sim->parsed()) return cmd_simulate(io, sf, bf, *sim);
    if (fit->parsed()) return cmd_fit(io, ff, bf);
    if (exp->parsed()) return cmd_experiment(io, sf, bf, ef, *exp);
    if (rates->parsed()) return cmd_rates(io, sf, bf, ef, *rates);
  } catch (const std::exception& e) {
    const std::string name = sim->parsed() ? "simulate" : fit->parsed() ? "fit" : exp->parsed() ? "experiment" : "rates";
    std::cerr << "iifpca " << name << ": " << e.what() << "\n";
    return 1;
  }
  return 1;
}
