#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "iifpca/covariance.hpp"
#include "iifpca/fpca.hpp"
#include "iifpca/intensity.hpp"
#include "iifpca/mean.hpp"
#include "iifpca/simulate.hpp"

namespace iifpca {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

Json to_json(const SplineBasis& basis);
SplineBasis basis_from_json(const Json& j);

Json to_json(const IntensityModel& model);
IntensityModel intensity_from_json(const Json& j);

Json to_json(const MeanFit& fit);
MeanFit mean_fit_from_json(const Json& j);

Json to_json(const CovFit& fit);
CovFit cov_fit_from_json(const Json& j);

/// Eigenvalues (all, for diagnostics) and the coefficients of the retained eigenfunctions.
Json to_json(const FpcaResult& result);

/// Every field; sim_config_from_json accepts any subset and keeps defaults for the rest.
Json to_json(const SimConfig& config);
SimConfig sim_config_from_json(const Json& j, SimConfig base = {});

Json to_json(const ExperimentOptions& options);

/// Lowercase hex SHA-256.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

void write_json(const std::string& path, const Json& j);
Json read_json(const std::string& path);

/// Run record: config echo, versions, seeds, and the hash of every artifact written.
class Manifest {
 public:
  Manifest(std::string command, Json config);

  /// Hashes the file as it is now; call after it is closed.
  void add_artifact(const std::string& path, const std::string& kind);
  Json& extra() { return extra_; }
  Json to_json() const;
  void write(const std::string& path) const;

 private:
  std::string command_;
  Json config_;
  Json extra_ = Json::object();
  Json artifacts_ = Json::array();
};

}  // namespace iifpca
