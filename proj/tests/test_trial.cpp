#include <doctest.h>

#include <cmath>
#include <vector>

#include "muce/trial.hpp"

using namespace muce;

namespace {

TrialLayout table3_layout() { return TrialLayout{4, 1, {0.2, 0.2, 0.2, 0.2}, 29, {10, 20}}; }

DesignSpec muce_design(double phi1, double phi2) {
  DesignSpec d;
  d.layout = table3_layout();
  d.phi1 = phi1;
  d.phi2 = phi2;
  d.hyper = setting(1);
  d.mcmc = McmcConfig{300, 1000, 1, 1, 1.0, true};
  return d;
}

DesignSpec simon_design() {
  DesignSpec d;
  d.method = Method::simon;
  d.layout = table3_layout();
  d.simon = SimonDesign{2, 13, 8, 29};
  return d;
}

// Outcome sequence whose running responder counts hit the given totals at
// the given patient counts.
std::vector<bool> sequence(const std::vector<std::pair<int, int>>& checkpoints, int total) {
  std::vector<bool> out;
  int n_prev = 0, y_prev = 0;
  for (const auto& [n, y] : checkpoints) {
    const int add = y - y_prev;
    for (int m = 0; m < n - n_prev; ++m) out.push_back(m < add);
    n_prev = n;
    y_prev = y;
  }
  while (static_cast<int>(out.size()) < total) out.push_back(false);
  return out;
}

}  // namespace

TEST_CASE("catalogue scenarios") {
  const auto names = scenario_names();
  CHECK(names.size() == 11);
  const Scenario s3 = *scenario_by_name("table3-scenario3");
  CHECK(s3.true_p.rows() == 4);
  CHECK(s3.true_p.cols() == 1);
  CHECK(s3.true_p(3, 0) == 0.45);
  const Scenario t5 = *scenario_by_name("table4-scenario5");
  CHECK(t5.true_p.rows() == 4);
  CHECK(t5.true_p.cols() == 3);
  CHECK(t5.true_p(0, 0) == 0.3);
  CHECK(t5.true_p(1, 2) == 0.5);
  CHECK(t5.true_p(3, 2) == 0.2);
  CHECK_FALSE(scenario_by_name("table5-scenario1").has_value());
  const ArmMatrix<bool> nulls = truly_null(s3, table3_layout());
  CHECK(nulls.values() == std::vector<bool>{true, true, false, false});
  CHECK(method_by_name("exnex") == Method::exnex);
  CHECK(method_name(Method::simon) == "simon");
  CHECK_FALSE(method_by_name("MUCE").has_value());
}

TEST_CASE("design validation") {
  DesignSpec d = muce_design(0.5, 0.4);
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  d = muce_design(0.1, 0.9);
  d.method = Method::bbhm;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  d.pi1 = {0.35, 0.35, 0.35, 0.35};
  CHECK_NOTHROW(d.validate());
  DesignSpec s = simon_design();
  s.simon.reset();
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK(simon_design().looks() == std::vector<int>{13});
  CHECK(simon_design().final_n() == 29);
}

TEST_CASE("threshold extremes") {
  const Scenario s = *scenario_by_name("table3-scenario4");
  // phi1 = 0 never stops an arm.
  const TrialResult open = conduct_trial(muce_design(0.0, 0.9), s, 5);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(open.n[k] == 29);
    CHECK(open.stop_stage[k] == -1);
  }
  CHECK(open.analyses.size() == 3);
  CHECK(open.analyses.back().final_analysis);
  // phi2 = 1 never declares an arm promising.
  const OCReport r = simulate_oc(muce_design(0.0, 1.0), s, 10, 3);
  for (double v : r.rejection_rate) CHECK(v == 0.0);
  CHECK(r.fwer == 0.0);
}

TEST_CASE("replaying fixed outcomes through the design") {
  ArmMatrix<std::vector<bool>> outcomes(4, 1);
  outcomes[0] = sequence({{10, 0}, {20, 1}, {29, 2}}, 29);
  outcomes[1] = sequence({{10, 3}, {20, 6}, {29, 9}}, 29);
  outcomes[2] = sequence({{10, 6}, {20, 10}, {29, 14}}, 29);
  outcomes[3] = sequence({{10, 4}, {20, 8}, {29, 11}}, 29);
  DesignSpec d = muce_design(0.1, 0.9);
  d.mcmc = McmcConfig{1000, 4000, 1, 1, 1.0, true};
  const TrialResult r = conduct_trial(d, outcomes, 77);

  REQUIRE(r.analyses.size() == 3);
  CHECK(r.analyses[0].n.values() == std::vector<int>{10, 10, 10, 10});
  CHECK(r.analyses[0].y.values() == std::vector<int>{0, 3, 6, 4});
  CHECK(r.analyses[0].prob[0] < 0.1);
  CHECK(r.stop_stage[0] == 0);
  CHECK(r.analyses[1].n.values() == std::vector<int>{10, 20, 20, 20});
  CHECK(r.analyses[1].y.values() == std::vector<int>{0, 6, 10, 8});
  CHECK(r.analyses[1].active.values() == std::vector<bool>{false, true, true, true});
  CHECK(r.analyses[2].n.values() == std::vector<int>{10, 29, 29, 29});
  CHECK(r.analyses[2].y.values() == std::vector<int>{0, 9, 14, 11});
  CHECK(r.n.values() == std::vector<int>{10, 29, 29, 29});
  CHECK_FALSE(r.promising[0]);
  for (std::size_t k = 1; k < 4; ++k)
    CHECK(r.promising[k] == (r.analyses[2].prob[k] > 0.9));
  CHECK(r.promising[2]);

  CHECK(conduct_trial(d, outcomes, 77) == r);

  ArmMatrix<std::vector<bool>> short_arm = outcomes;
  short_arm[1].resize(20);
  CHECK_THROWS_AS(conduct_trial(d, short_arm, 77), std::invalid_argument);
}

TEST_CASE("a trial where every arm stops early skips the final analysis") {
  ArmMatrix<std::vector<bool>> outcomes(4, 1);
  for (std::size_t k = 0; k < 4; ++k) outcomes[k] = std::vector<bool>(29, false);
  const TrialResult r = conduct_trial(muce_design(0.3, 0.9), outcomes, 1);
  REQUIRE(r.analyses.size() == 1);
  CHECK_FALSE(r.analyses[0].final_analysis);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(r.stop_stage[k] == 0);
    CHECK(r.n[k] == 10);
    CHECK_FALSE(r.promising[k]);
  }
}

TEST_CASE("Simon arms follow the two-stage boundaries") {
  ArmMatrix<std::vector<bool>> outcomes(4, 1);
  outcomes[0] = sequence({{13, 2}, {29, 10}}, 29);  // stops at n1 despite late responses
  outcomes[1] = sequence({{13, 3}, {29, 8}}, 29);   // continues, not rejected
  outcomes[2] = sequence({{13, 3}, {29, 9}}, 29);   // rejected
  outcomes[3] = sequence({{13, 13}, {29, 29}}, 29);
  const TrialResult r = conduct_trial(simon_design(), outcomes, 1);
  CHECK(r.n.values() == std::vector<int>{13, 29, 29, 29});
  CHECK(r.stop_stage.values() == std::vector<int>{0, -1, -1, -1});
  CHECK(r.promising.values() == std::vector<bool>{false, false, true, true});
}

TEST_CASE("Simon operating characteristics match the exact error rates") {
  const OCReport r = simulate_oc(simon_design(), *scenario_by_name("table3-scenario1"), 4000, 11);
  const StageErrorRates e = two_stage_error_rates({2, 13, 8, 29}, 0.2);
  const double se = std::sqrt(e.reject_prob * (1 - e.reject_prob) / 4000);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(std::abs(r.rejection_rate[k] - e.reject_prob) < 4 * se);
    CHECK(std::abs(r.avg_n[k] - e.expected_n) < 0.5);
    CHECK(std::abs(r.early_stop_rate[0][k] - e.pet) < 0.04);
  }
  const double fwer = fwer_independent(e.reject_prob, 4);
  CHECK(std::abs(r.fwer - fwer) < 4 * std::sqrt(fwer * (1 - fwer) / 4000));
  CHECK(r.avg_total_n == doctest::Approx(r.avg_n[0] + r.avg_n[1] + r.avg_n[2] + r.avg_n[3]));
}

TEST_CASE("tallies merge exactly and ignore the thread count") {
  const Scenario s = *scenario_by_name("table3-scenario3");
  for (const DesignSpec& d : {simon_design(), muce_design(0.2, 0.9)}) {
    const long reps = d.method == Method::simon ? 200 : 12;
    const OcTally whole = simulate_range(d, s, 9, 0, reps);
    OcTally parts = simulate_range(d, s, 9, 0, reps / 3);
    parts.merge(simulate_range(d, s, 9, reps / 3, reps));
    CHECK(parts == whole);
    OcTally reversed = simulate_range(d, s, 9, reps / 3, reps);
    reversed.merge(simulate_range(d, s, 9, 0, reps / 3));
    CHECK(reversed == whole);
    CHECK(simulate_range(d, s, 9, 0, reps, 3) == whole);
    CHECK(simulate_oc(d, s, reps, 9, 2) == simulate_oc(d, s, reps, 9, 1));
  }
  OcTally empty;
  OcTally one = simulate_range(simon_design(), s, 1, 0, 5);
  empty.merge(one);
  CHECK(empty == one);
  OcTally other(2, 1);
  other.n_reps = 1;
  CHECK_THROWS_AS(one.merge(other), std::invalid_argument);
}

TEST_CASE("no null arms means no family-wise error") {
  const OCReport r = simulate_oc(simon_design(), *scenario_by_name("table3-scenario2"), 300, 4);
  CHECK(r.fwer == 0.0);
  for (bool n : r.truly_null) CHECK_FALSE(n);
  CHECK(r.rejection_rate[0] > 0.5);
}

TEST_CASE("raising phi2 never adds promising arms") {
  const Scenario s = *scenario_by_name("table3-scenario4");
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TrialResult lo = conduct_trial(muce_design(0.2, 0.6), s, seed);
    const TrialResult hi = conduct_trial(muce_design(0.2, 0.95), s, seed);
    CHECK(lo.analyses == hi.analyses);
    for (std::size_t k = 0; k < 4; ++k) CHECK((!hi.promising[k] || lo.promising[k]));
  }
}

TEST_CASE("threshold calibration from stored runs") {
  const Scenario null = *scenario_by_name("table3-scenario1");
  const DesignSpec d = muce_design(0.0, 0.9);
  const StoredRun run = run_replications(d, null, 40, 2);
  double prev = 1.0;
  for (int g = 0; g <= 100; ++g) {
    const double f = fwer_at(run, g / 100.0);
    CHECK(f <= prev);
    prev = f;
  }
  CHECK(calibrate_phi2(run, 1.0).threshold == 0.0);
  const Calibration c = calibrate_phi2(run, 0.1);
  CHECK(c.achieved <= 0.1);
  if (c.threshold > 0.0) CHECK(fwer_at(run, c.threshold - kCalibrationStep) > 0.1);

  const Calibration full = calibrate_phi1(run, d, 29.0);
  CHECK(full.threshold == 0.0);
  CHECK(full.achieved == 29.0);
  double prev_n = 30.0;
  for (int g = 0; g <= 100; ++g) {
    const double a = avg_n_at(run, d.layout, d.looks(), d.final_n(), g / 100.0);
    CHECK(a <= prev_n);
    prev_n = a;
  }
  const Calibration mid = calibrate_phi1(run, d, 21.0);
  CHECK(std::abs(mid.achieved - 21.0) < 3.0);

  // The stored-run path matches a direct simulation at the chosen phi2
  // since thresholds do not change the simulated data or chains.
  DesignSpec chosen = d;
  chosen.phi2 = c.threshold;
  CHECK(simulate_oc(chosen, null, 40, 2).fwer == doctest::Approx(c.achieved));
  const Calibration direct = calibrate_phi2(d, null, 0.1, 40, 2);
  CHECK(direct.threshold == c.threshold);
  CHECK(direct.seed == 2);
}
