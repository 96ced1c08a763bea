#include "iifpca/serialize.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/Core>
#include <openssl/evp.h>

#include "iifpca/error.hpp"

namespace iifpca {

namespace {

Json vec(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json mat(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec(m.row(r).transpose()));
  return a;
}

Eigen::VectorXd to_vec(const Json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

Eigen::MatrixXd to_mat(const Json& a) {
  if (a.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(a[0].size()));
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (a[r].size() != a[0].size()) throw InvalidArgument("json: ragged matrix");
    m.row(static_cast<Eigen::Index>(r)) = to_vec(a[r]).transpose();
  }
  return m;
}

/// JSON has no NaN or infinity; they are written as null.
Json num(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }
double get_num(const Json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

}  // namespace

Json to_json(const SplineBasis& basis) {
  return Json{{"domain_end", basis.domain_end()},
              {"order", basis.order()},
              {"interior_knots", basis.knots().interior()},
              {"dim", basis.dim()}};
}

SplineBasis basis_from_json(const Json& j) {
  return SplineBasis(KnotVector(j.at("domain_end").get<double>(), j.at("interior_knots").get<std::vector<double>>(),
                                j.at("order").get<int>()));
}

Json to_json(const IntensityModel& model) {
  const CovariateMap& g = model.covariate_map();
  Json j{{"family", to_string(model.baseline().kind())},
         {"theta", vec(model.baseline().theta())},
         {"beta", vec(model.beta())},
         {"covariate_map", {{"name", g.name}, {"input_dim", g.input_dim}, {"output_dim", g.output_dim}, {"factor", g.factor}}},
         {"lookup", to_string(model.lookup())},
         {"fitted", model.fitted()}};
  if (model.fitted()) {
    const OptimizerReport& r = model.report();
    j["convergence"] = {{"converged", r.converged},     {"method", r.method},
                        {"iterations", r.iterations},   {"restarts", r.restarts},
                        {"objective", num(r.objective)}, {"gradient_norm", num(r.gradient_norm)}};
    Json se = Json::array();
    const Eigen::VectorXd s = model.standard_errors();
    for (Eigen::Index i = 0; i < s.size(); ++i) se.push_back(num(s[i]));
    j["standard_errors"] = se;
    j["information"] = mat(model.information());
  }
  return j;
}

IntensityModel intensity_from_json(const Json& j) {
  const Eigen::VectorXd theta = to_vec(j.at("theta"));
  if (theta.size() != 2) throw InvalidArgument("intensity json: theta must have two entries");
  const Json& gj = j.at("covariate_map");
  CovariateMap g{gj.at("name").get<std::string>(), gj.at("input_dim").get<int>(), gj.at("output_dim").get<int>(),
                 gj.at("factor").get<double>()};
  IntensityModel model(BaselineFamily(baseline_kind_from_string(j.at("family").get<std::string>()), theta),
                       to_vec(j.at("beta")), g, covariate_lookup_from_string(j.at("lookup").get<std::string>()));
  if (j.value("fitted", false)) {
    const Json& c = j.at("convergence");
    OptimizerReport r{c.at("converged").get<bool>(), c.at("method").get<std::string>(), c.at("iterations").get<int>(),
                      c.at("restarts").get<int>(), get_num(c.at("objective")), get_num(c.at("gradient_norm"))};
    model.set_fit(to_mat(j.at("information")), r);
  }
  return model;
}

Json to_json(const MeanFit& fit) {
  return Json{{"basis", to_json(fit.basis)},       {"penalty_order", fit.penalty_order},
              {"gamma", vec(fit.gamma)},           {"lambda", fit.lambda},
              {"effective_df", fit.effective_df}, {"gcv_score", num(fit.gcv_score)},
              {"rss", fit.rss},                    {"num_obs", fit.num_obs},
              {"theory_bound", fit.theory_bound()}};
}

MeanFit mean_fit_from_json(const Json& j) {
  MeanFit fit{basis_from_json(j.at("basis")), j.at("penalty_order").get<int>(), to_vec(j.at("gamma")),
              j.at("lambda").get<double>(),   j.at("effective_df").get<double>(), get_num(j.at("gcv_score")),
              j.at("rss").get<double>(),      j.at("num_obs").get<std::size_t>()};
  if (fit.gamma.size() != fit.basis.dim()) throw InvalidArgument("mean json: gamma length differs from basis dimension");
  return fit;
}

Json to_json(const CovFit& fit) {
  return Json{{"basis", to_json(fit.basis)},       {"penalty_order", fit.penalty_order},
              {"xi", mat(fit.xi)},                 {"lambda", fit.lambda},
              {"effective_df", fit.effective_df}, {"gcv_score", num(fit.gcv_score)},
              {"rss", fit.rss},                    {"num_points", fit.num_points},
              {"theory_bound", fit.theory_bound()}};
}

CovFit cov_fit_from_json(const Json& j) {
  SplineBasis basis = basis_from_json(j.at("basis"));
  Eigen::MatrixXd xi = to_mat(j.at("xi"));
  if (xi.rows() != basis.dim() || xi.cols() != basis.dim())
    throw InvalidArgument("covariance json: xi is not q x q");
  if ((xi - xi.transpose()).cwiseAbs().maxCoeff() > 0.0)
    throw InvalidArgument("covariance json: xi is not symmetric");
  CovFit fit{basis, j.at("penalty_order").get<int>(), half_vectorize(xi), xi, j.at("lambda").get<double>(),
             j.at("effective_df").get<double>(), get_num(j.at("gcv_score")), j.at("rss").get<double>(),
             j.at("num_points").get<std::size_t>()};
  return fit;
}

Json to_json(const FpcaResult& result) {
  Json rules = Json::array();
  Json coefs = Json::array();
  for (int k = 0; k < result.retained; ++k) {
    rules.push_back(to_string(result.sign_rules[static_cast<std::size_t>(k)]));
    coefs.push_back(vec(result.coefficients.col(k)));
  }
  return Json{{"basis", to_json(result.basis)},
              {"retained", result.retained},
              {"eigenvalues", vec(result.eigenvalues)},
              {"num_negative", result.num_negative()},
              {"trace", result.trace},
              {"positive_variance", result.positive_variance},
              {"cumulative_shares", result.cumulative_shares()},
              {"sign_rules", rules},
              {"coefficients", coefs}};
}

Json to_json(const SimConfig& c) {
  return Json{{"n", c.n},
              {"domain_end", c.domain_end},
              {"num_terms", c.num_terms},
              {"noise_variance", c.noise_variance},
              {"beta", c.beta},
              {"baseline", {{"family", to_string(c.baseline.kind())}, {"theta", vec(c.baseline.theta())}}},
              {"outcome_scale", c.outcome_scale},
              {"mean_covariate_obs", c.mean_covariate_obs},
              {"record_covariate_at_visits", c.record_covariate_at_visits},
              {"lookup", to_string(c.lookup)},
              {"majorant_cells", c.majorant_cells},
              {"seed", c.seed},
              {"replicates", c.replicates}};
}

SimConfig sim_config_from_json(const Json& j, SimConfig c) {
  if (!j.is_object()) throw InvalidArgument("simulation config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "n") c.n = v.get<int>();
    else if (key == "domain_end") c.domain_end = v.get<double>();
    else if (key == "num_terms") c.num_terms = v.get<int>();
    else if (key == "noise_variance") c.noise_variance = v.get<double>();
    else if (key == "beta") c.beta = v.get<double>();
    else if (key == "baseline") {
      const Eigen::VectorXd th = to_vec(v.at("theta"));
      if (th.size() != 2) throw InvalidArgument("baseline theta must have two entries");
      c.baseline = BaselineFamily(baseline_kind_from_string(v.at("family").get<std::string>()), th);
    } else if (key == "outcome_scale") c.outcome_scale = v.get<double>();
    else if (key == "mean_covariate_obs") c.mean_covariate_obs = v.get<double>();
    else if (key == "record_covariate_at_visits") c.record_covariate_at_visits = v.get<bool>();
    else if (key == "lookup") c.lookup = covariate_lookup_from_string(v.get<std::string>());
    else if (key == "majorant_cells") c.majorant_cells = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "replicates") c.replicates = v.get<int>();
    else throw InvalidArgument("unknown simulation config key '" + key + "'");
  }
  return c;
}

Json to_json(const ExperimentOptions& o) {
  Json arms = Json::array();
  for (const Arm a : o.arms) arms.push_back(to_string(a));
  return Json{{"arms", arms},
              {"jobs", o.jobs},
              {"grid_points", o.grid_points},
              {"num_interior_knots", o.num_interior_knots},
              {"order", o.order},
              {"penalty_order", o.penalty_order},
              {"cov_selector", to_string(o.cov_selector)},
              {"fitted_family", to_string(o.fitted_family)},
              {"keep_curves", o.keep_curves}};
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(digest[i]);
  return os.str();
}

std::string sha256_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return sha256_hex(ss.str());
}

void write_json(const std::string& path, const Json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << j.dump(2) << '\n';
  if (!f) throw Error("write failed: " + path);
}

Json read_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

Manifest::Manifest(std::string command, Json config) : command_(std::move(command)), config_(std::move(config)) {}

void Manifest::add_artifact(const std::string& path, const std::string& kind) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw Error("manifest: missing artifact " + path);
  const auto bytes = static_cast<std::uint64_t>(f.tellg());
  artifacts_.push_back({{"path", path}, {"kind", kind}, {"bytes", bytes}, {"sha256", sha256_file(path)}});
}

Json Manifest::to_json() const {
  Json versions{{"iifpca", kVersion},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"compiler", __VERSION__},
                {"cxx", __cplusplus}};
  Json j{{"command", command_}, {"versions", versions}, {"config", config_}};
  for (const auto& [k, v] : extra_.items()) j[k] = v;
  j["artifacts"] = artifacts_;
  return j;
}

void Manifest::write(const std::string& path) const { write_json(path, to_json()); }

}  // namespace iifpca
