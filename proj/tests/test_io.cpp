#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "iifpca/error.hpp"
#include "iifpca/io.hpp"
#include "iifpca/serialize.hpp"
#include "iifpca/simulate.hpp"

using namespace iifpca;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  static std::atomic<int> counter{0};
  const fs::path dir = fs::temp_directory_path() / ("iifpca_io_" + std::to_string(::getpid()) + "_" +
                                                    std::to_string(counter++));
  fs::create_directories(dir);
  return dir / name;
}

std::string put(const std::string& name, const std::string& text) {
  const fs::path p = scratch(name);
  std::ofstream(p, std::ios::binary) << text;
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::vector<std::string> violations_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.violations();
  }
  return {};
}

bool any_contains(const std::vector<std::string>& v, const std::string& needle) {
  return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

}  // namespace

TEST_CASE("header-only files give an empty dataset") {
  const std::string o = put("o.csv", "subject_id,time,value\n");
  const std::string c = put("c.csv", "subject_id,time,z1\n");
  LoadReport rep;
  const LongitudinalDataset d = load_csv(o, c, std::nullopt, {}, &rep);
  CHECK(d.empty());
  CHECK(rep.subjects == 0);
  CHECK(rep.outcome_rows == 0);
  CHECK(d.metadata().at("time_unit") == "months");
}

TEST_CASE("single subject without a follow-up file") {
  const std::string o = put("o.csv", "\xEF\xBB\xBFsubject_id,time,value\r\nA,1,10\r\nA,2,11\r\nA,3,12\r\n");
  const std::string c = put("c.csv", "subject_id,time,z1\nA,0,0.5\nA,2,0.7\n");
  LoadReport rep;
  const LongitudinalDataset d = load_csv(o, c, std::nullopt, {}, &rep);
  REQUIRE(d.size() == 1);
  CHECK(d[0].id == "A");
  CHECK(d[0].outcomes.size() == 3);
  CHECK(d[0].followup_end == 3.0);
  CHECK(d[0].covariates[1].value[0] == 0.7);
  CHECK(rep.outcome_rows == 3);
  CHECK(rep.covariate_rows == 2);
}

TEST_CASE("quoted ids and extra covariate columns") {
  const std::string o = put("o.csv", "subject_id,time,value\n\"P,1\",0.5,1\n\"P \"\"2\"\"\",0.5,2\n");
  const std::string c = put("c.csv", "subject_id,time,cd4,vl\n\"P,1\",0,1,2\n\"P \"\"2\"\"\",0,3,4\n");
  const std::string f = put("f.csv", "subject_id,followup_end\n\"P,1\",4\n\"P \"\"2\"\"\",5\n");
  const LongitudinalDataset d = load_csv(o, c, f);
  REQUIRE(d.size() == 2);
  CHECK(d.covariate_dim() == 2);
  std::vector<std::string> ids{d[0].id, d[1].id};
  std::sort(ids.begin(), ids.end());
  CHECK(ids[0] == "P \"2\"");
  CHECK(ids[1] == "P,1");
}

TEST_CASE("row-level violations are reported together with row numbers") {
  const std::string o = put("o.csv", "subject_id,time,value\nA,2,1\nA,1,1\nB,0.5,nan\nC,-1,3\nD,1\n");
  const std::string c = put("c.csv", "subject_id,time,z1\nA,0,1\nB,0,1\nC,0,1\nD,0,1\n");
  const auto v = violations_of([&] { load_csv(o, c); });
  CHECK(any_contains(v, "o.csv:3:"));
  CHECK(any_contains(v, "not strictly increasing"));
  CHECK(any_contains(v, "o.csv:4:"));
  CHECK(any_contains(v, "o.csv:5:"));
  CHECK(any_contains(v, "negative time"));
  CHECK(any_contains(v, "o.csv:6:"));
  CHECK(v.size() >= 4);
}

TEST_CASE("carry-forward and follow-up violations") {
  const std::string o = put("o.csv", "subject_id,time,value\nA,0.5,1\nB,1,1\nB,9,1\n");
  const std::string c = put("c.csv", "subject_id,time,z1\nA,1,1\nB,0,1\n");
  const std::string f = put("f.csv", "subject_id,followup_end\nB,5\n");
  const auto v = violations_of([&] { load_csv(o, c, f); });
  CHECK(any_contains(v, "before its first covariate record"));
  CHECK(any_contains(v, "no follow-up end for subject A"));
  CHECK(any_contains(v, "after its follow-up end"));

  CsvSchema loose;
  loose.require_covariates = false;
  const std::string f2 = put("f.csv", "subject_id,followup_end\nA,2\nB,10\n");
  CHECK_NOTHROW(load_csv(o, c, f2, loose));

  const std::string dup = put("f.csv", "subject_id,followup_end\nA,2\nA,3\nB,10\n");
  CHECK(any_contains(violations_of([&] { load_csv(o, c, dup); }), "duplicate subject A"));
  CHECK_THROWS_AS(load_csv(put("o.csv", "id,time,value\n"), c), DataError);
}

TEST_CASE("save and load round-trip exactly") {
  SimConfig cfg;
  cfg.n = 7;
  const SimulatedData sim = simulate_dataset(cfg, 0);
  const std::string o = scratch("o.csv").string(), c = scratch("c.csv").string(), f = scratch("f.csv").string();
  save_csv(sim.data, o, c, f);
  LoadReport rep;
  const LongitudinalDataset back = load_csv(o, c, f, {}, &rep);
  REQUIRE(back.size() == sim.data.size());
  CHECK(rep.outcome_rows == sim.data.total_observations());
  CHECK(rep.followup_rows == 7);
  for (std::size_t i = 0; i < back.size(); ++i) {
    const Subject& a = sim.data[i];
    const Subject* b = nullptr;
    for (const Subject& s : back.subjects())
      if (s.id == a.id) b = &s;
    REQUIRE(b != nullptr);
    CHECK(b->followup_end == a.followup_end);
    REQUIRE(b->outcomes.size() == a.outcomes.size());
    for (std::size_t j = 0; j < a.outcomes.size(); ++j) {
      CHECK(b->outcomes[j].time == a.outcomes[j].time);
      CHECK(b->outcomes[j].value == a.outcomes[j].value);
    }
    REQUIRE(b->covariates.size() == a.covariates.size());
    for (std::size_t j = 0; j < a.covariates.size(); ++j) CHECK(b->covariates[j].value == a.covariates[j].value);
  }
  const std::string o2 = scratch("o.csv").string(), c2 = scratch("c.csv").string(), f2 = scratch("f.csv").string();
  save_csv(back, o2, c2, f2);
  CHECK(slurp(o) == slurp(o2));
  CHECK(slurp(c) == slurp(c2));
  CHECK(slurp(f) == slurp(f2));
  CHECK(std::stod(format_double(0.1)) == 0.1);
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("outcome and covariate transforms") {
  std::vector<Subject> subs(1);
  subs[0].id = "A";
  subs[0].followup_end = 3.0;
  subs[0].outcomes = {{1.0, 4.0}, {2.0, 9.0}};
  Eigen::VectorXd z(1);
  z[0] = std::exp(2.0);
  subs[0].covariates = {{0.0, z}};
  const LongitudinalDataset d(subs);
  const LongitudinalDataset t = apply_transform(d, OutcomeTransform::sqrt, CovariateTransform::log);
  CHECK(t[0].outcomes[0].value == 2.0);
  CHECK(t[0].outcomes[1].value == 3.0);
  CHECK(t[0].covariates[0].value[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(t.metadata().at("outcome_transform") == "sqrt");
  CHECK(t.metadata().at("covariate_transform") == "log");
  const LongitudinalDataset tt = apply_transform(t, OutcomeTransform::sqrt, CovariateTransform::identity);
  CHECK(tt.metadata().at("outcome_transform") == "sqrt,sqrt");

  const LongitudinalDataset same = apply_transform(d, OutcomeTransform::identity, CovariateTransform::identity);
  CHECK(same[0].outcomes[1].value == 9.0);
  CHECK(same[0].covariates[0].value[0] == z[0]);

  subs[0].covariates[0].value[0] = 0.0;
  subs[0].outcomes[0].value = -1.0;
  const auto v = violations_of([&] {
    apply_transform(LongitudinalDataset(subs), OutcomeTransform::sqrt, CovariateTransform::log);
  });
  CHECK(v.size() == 2);
  CHECK(outcome_transform_from_string("sqrt") == OutcomeTransform::sqrt);
  CHECK_THROWS_AS(covariate_transform_from_string("exp"), InvalidArgument);
}

TEST_CASE("column writer") {
  const std::string p = scratch("g.csv").string();
  write_columns(p, {{"t", {0.0, 0.5}}, {"y", {1.0, 0.1}}});
  CHECK(slurp(p) == "t,y\n0,1\n0.5,0.10000000000000001\n");
  CHECK_THROWS_AS(write_columns(p, {{"t", {0.0}}, {"y", {}}}), InvalidArgument);
}

TEST_CASE("JSON round-trips of fitted objects") {
  SimConfig cfg;
  cfg.n = 40;
  const SimulatedData sim = simulate_dataset(cfg, 0);
  const SplineBasis basis = build_basis(3.0, 3, 4);
  const Json jb = to_json(basis);
  const SplineBasis b2 = basis_from_json(Json::parse(jb.dump()));
  CHECK(b2.knots().full() == basis.knots().full());

  const MeanFit mean = fit_mean(sim.data, ObservationWeights::unit(sim.data), basis, 0.3, 2);
  const MeanFit m2 = mean_fit_from_json(Json::parse(to_json(mean).dump()));
  CHECK(m2.gamma == mean.gamma);
  CHECK(m2.lambda == mean.lambda);
  CHECK(m2.evaluate(1.234) == mean.evaluate(1.234));

  const auto pts = raw_cov_points(sim.data, mean, pair_weights(ObservationWeights::unit(sim.data), sim.data));
  const CovFit cov = fit_cov(pts, basis, 0.5, 2);
  const CovFit c2 = cov_fit_from_json(Json::parse(to_json(cov).dump()));
  CHECK(c2.xi == cov.xi);
  CHECK(c2.half == cov.half);
  Json broken = to_json(cov);
  broken["xi"][0][1] = 12345.0;
  CHECK_THROWS_AS(cov_fit_from_json(broken), InvalidArgument);

  IntensityFitOptions opt;
  opt.lookup = cfg.lookup;
  const IntensityModel im = fit_intensity(sim.data, BaselineKind::linear_shift, CovariateMap::identity(), opt);
  const IntensityModel i2 = intensity_from_json(Json::parse(to_json(im).dump()));
  CHECK(i2.params() == im.params());
  CHECK(i2.lookup() == im.lookup());
  CHECK(i2.information() == im.information());
  CHECK(i2.report().converged == im.report().converged);

  const Json jf = to_json(eigen_decompose(cov, 2));
  CHECK(jf.contains("eigenvalues"));
  CHECK(jf.contains("trace"));
  CHECK(jf.contains("positive_variance"));
}

TEST_CASE("simulation config JSON") {
  SimConfig cfg;
  cfg.n = 123;
  cfg.beta = 1.5;
  cfg.seed = 42;
  cfg.baseline = BaselineFamily::log_linear(-1.0, 0.2);
  const SimConfig back = sim_config_from_json(Json::parse(to_json(cfg).dump()));
  CHECK(back.n == 123);
  CHECK(back.beta == 1.5);
  CHECK(back.seed == 42);
  CHECK(back.baseline.kind() == BaselineKind::log_linear);
  CHECK(back.baseline.theta() == cfg.baseline.theta());
  CHECK(back.lookup == cfg.lookup);
  const SimConfig partial = sim_config_from_json(Json{{"n", 9}});
  CHECK(partial.n == 9);
  CHECK(partial.beta == SimConfig{}.beta);
  CHECK_THROWS_AS(sim_config_from_json(Json{{"nn", 9}}), InvalidArgument);
}

TEST_CASE("hashing and manifests") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const std::string p = put("a.txt", "abc");
  CHECK(sha256_file(p) == sha256_hex("abc"));

  Manifest m("test", Json{{"x", 1}});
  m.add_artifact(p, "text");
  m.extra()["note"] = std::nan("");
  const Json j = m.to_json();
  REQUIRE(j["artifacts"].size() == 1);
  CHECK(j["artifacts"][0]["sha256"] == sha256_hex("abc"));
  CHECK(j["artifacts"][0]["bytes"] == 3);
  CHECK(j["versions"]["iifpca"] == kVersion);
  const std::string mp = scratch("manifest.json").string();
  m.write(mp);
  const Json r = read_json(mp);
  CHECK(r["command"] == "test");
  CHECK(r["note"].is_null());
  CHECK_THROWS_AS(m.add_artifact(scratch("missing").string(), "x"), Error);
}
