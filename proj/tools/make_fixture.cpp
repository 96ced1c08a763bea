// Writes a synthetic panel shaped like an acute-infection cohort: 37 subjects followed
// for 30-48 months, raw CD4 counts as the outcome, raw viral load (copies/mL) as the
// covariate, recorded at entry and at every visit. Visits come faster while viral load
// is high. Subjects with 14 or fewer visits are redrawn, as in a cohort selected on
// visit count.
//
//   make_fixture <output_dir> [seed]

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "iifpca/dataset.hpp"
#include "iifpca/io.hpp"
#include "iifpca/simulate.hpp"

using namespace iifpca;

namespace {

constexpr int kSubjects = 37;
constexpr int kMinVisits = 15;
constexpr double kDaysPerMonth = 30.4375;

double round_to_day(double months) { return std::round(months * kDaysPerMonth) / kDaysPerMonth; }

Subject draw_subject(Rng& rng, const std::string& id) {
  const double tau = round_to_day(rng.uniform(30.0, 48.0));
  // log10 viral load: set point drop from an acute peak.
  const double peak = rng.uniform(5.0, 6.5);
  const double drop = rng.uniform(0.8, 2.0);
  const double speed = rng.uniform(2.0, 8.0);
  auto log10_vl = [&](double t) { return peak - drop * (1.0 - std::exp(-t / speed)); };
  // sqrt CD4: recovery that is slower for high set points.
  const double xi1 = rng.normal() * 2.5 - 1.5 * (peak - 5.75);
  const double xi2 = rng.normal() * 1.2;
  auto sqrt_cd4 = [&](double t) {
    const double u = t / 48.0;
    return 20.0 + 4.0 * (1.0 - std::exp(-t / 10.0)) + xi1 * std::sqrt(2.0) * std::cos(M_PI * u) +
           xi2 * std::sqrt(2.0) * std::sin(M_PI * u);
  };
  auto measured_vl = [&](double t) {
    const double v = log10_vl(t) + 0.15 * rng.normal();
    return std::max(50.0, std::round(std::pow(10.0, v)));
  };

  Subject s;
  s.id = id;
  s.followup_end = tau;
  Eigen::VectorXd z(1);
  z[0] = measured_vl(0.0);
  s.covariates.push_back({0.0, z});

  // Visit rate (per month) given the last measured viral load c: 0.25 * (c / 1e4)^0.3 * exp(0.01 t).
  // Between visits c is fixed, so the rate only grows through exp(0.01 t); thin against its value at tau.
  double t = 0.0;
  for (;;) {
    const double c = s.covariates.back().value[0];
    const double scale = 0.25 * std::pow(c / 1e4, 0.3);
    const double bound = scale * std::exp(0.01 * tau);
    t += rng.exponential() / bound;
    if (t > tau) break;
    if (rng.uniform() * bound > scale * std::exp(0.01 * t)) continue;
    const double tv = round_to_day(t);
    if (tv <= s.covariates.back().time || tv > tau) continue;
    const double cd4 = std::max(1.0, std::round(std::pow(sqrt_cd4(tv) + 0.8 * rng.normal(), 2)));
    s.outcomes.push_back({tv, cd4});
    z[0] = measured_vl(tv);
    s.covariates.push_back({tv, z});
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: make_fixture <output_dir> [seed]\n";
    return 2;
  }
  const std::string dir = argv[1];
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 20080401;
  std::filesystem::create_directories(dir);

  std::vector<Subject> subjects;
  for (int i = 0; i < kSubjects; ++i) {
    const std::string id = "P" + std::to_string(1001 + i);
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng rng = Rng::substream(seed, attempt, static_cast<std::uint64_t>(i));
      Subject s = draw_subject(rng, id);
      if (static_cast<int>(s.outcomes.size()) >= kMinVisits) {
        subjects.push_back(std::move(s));
        break;
      }
    }
  }
  LongitudinalDataset data(std::move(subjects));
  data.validate();
  const auto p = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
  save_csv(data, p("aiedrp_like_outcomes.csv"), p("aiedrp_like_covariates.csv"), p("aiedrp_like_followup.csv"));
  std::cout << data.size() << " subjects, " << data.total_observations() << " visits -> " << dir << "\n";
  return 0;
}
