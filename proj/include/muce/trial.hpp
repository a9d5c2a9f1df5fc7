#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "muce/comparators.hpp"
#include "muce/mcmc.hpp"
#include "muce/model.hpp"

namespace muce {

enum class Method { muce, bbhm, exnex, simon };

std::string_view method_name(Method m);
std::optional<Method> method_by_name(std::string_view name);

struct DesignSpec {
  Method method = Method::muce;
  TrialLayout layout;
  double phi1 = 0.0;
  double phi2 = 0.9;
  Hyperparameters hyper;
  BbhmHyper bbhm;
  ExnexHyper exnex;
  McmcConfig mcmc{1000, 4000, 1, 1, 1.0, true};
  std::optional<SimonDesign> simon;
  std::vector<double> pi1;  // per indication; BBHM / EXNEX only

  /// Interim looks actually used by the method. Simon arms have a single
  /// look at n1; the Bayesian designs use the layout's schedule.
  std::vector<int> looks() const;
  int final_n() const;
  void validate() const;
  bool operator==(const DesignSpec&) const = default;
};

struct Scenario {
  std::string label;
  ArmMatrix<double> true_p;

  void validate() const;
  bool operator==(const Scenario&) const = default;
};

/// Named truth scenarios "table3-scenario1".."table3-scenario5" (4
/// indications, 1 dose) and "table4-scenario1".."table4-scenario6" (4
/// indications, 3 doses).
std::optional<Scenario> scenario_by_name(std::string_view name);
std::vector<std::string> scenario_names();

/// Posterior probabilities used by the decision rule at one analysis.
struct AnalysisRecord {
  int stage = 0;  // 0-based; the last record is the final analysis
  bool final_analysis = false;
  ArmMatrix<int> n;
  ArmMatrix<int> y;
  ArmMatrix<bool> active;  // accrual open going into this analysis
  ArmMatrix<double> prob;
  bool operator==(const AnalysisRecord&) const = default;
};

struct TrialResult {
  ArmMatrix<int> n;
  ArmMatrix<int> y;
  ArmMatrix<bool> promising;
  ArmMatrix<int> stop_stage;  // interim index, or -1 if the arm reached the final analysis
  std::vector<AnalysisRecord> analyses;
  bool operator==(const TrialResult&) const = default;
};

/// Runs one trial. Patient outcomes are drawn up front from a substream of
/// rep_seed, so designs that differ only in thresholds see identical data.
TrialResult conduct_trial(const DesignSpec& design, const Scenario& scenario,
                          std::uint64_t rep_seed);

/// Trial with externally supplied outcome sequences: outcomes(i, j)[m] is
/// the response of the m-th patient in arm (i, j).
TrialResult conduct_trial(const DesignSpec& design,
                          const ArmMatrix<std::vector<bool>>& outcomes, std::uint64_t rep_seed);

/// Arm is truly null iff its response rate does not exceed pi0.
ArmMatrix<bool> truly_null(const Scenario& scenario, const TrialLayout& layout);

/// Integer tallies over replications; merging is exact and order-free.
struct OcTally {
  long n_reps = 0;
  std::vector<long> promising;   // per arm
  std::vector<long> enrolled;    // per arm, summed over reps
  std::vector<std::vector<long>> stopped;  // [interim][arm]
  long any_null_promising = 0;

  OcTally() = default;
  OcTally(std::size_t arms, std::size_t interims);
  void add(const TrialResult& result, const ArmMatrix<bool>& null_arms);
  void merge(const OcTally& other);
  bool operator==(const OcTally&) const = default;
};

struct OCReport {
  std::string scenario;
  std::size_t n_indications = 0;
  std::size_t n_doses = 0;
  std::vector<double> true_p;
  std::vector<bool> truly_null;
  std::vector<double> rejection_rate;
  std::vector<double> avg_n;
  std::vector<std::vector<double>> early_stop_rate;  // [interim][arm]
  double fwer = 0.0;
  double avg_total_n = 0.0;
  long n_reps = 0;
  std::uint64_t seed = 0;
  bool operator==(const OCReport&) const = default;
};

OCReport make_report(const OcTally& tally, const Scenario& scenario, const DesignSpec& design,
                     std::uint64_t seed);

/// Seed of replication `rep` under master seed `seed`.
std::uint64_t replication_seed(std::uint64_t seed, long rep);

/// Tally of replications [begin, end), split across `jobs` threads.
OcTally simulate_range(const DesignSpec& design, const Scenario& scenario, std::uint64_t seed,
                       long begin, long end, int jobs = 1);

OCReport simulate_oc(const DesignSpec& design, const Scenario& scenario, long n_reps,
                     std::uint64_t seed, int jobs = 1);

/// Stored decision probabilities from a batch of replications.
struct StoredRun {
  std::vector<TrialResult> results;
  ArmMatrix<bool> null_arms;
};

StoredRun run_replications(const DesignSpec& design, const Scenario& scenario, long n_reps,
                           std::uint64_t seed, int jobs = 1);

/// FWER obtained by re-thresholding stored final probabilities at phi2.
double fwer_at(const StoredRun& run, double phi2);
/// Per-arm average sample size implied by re-thresholding stored interim
/// probabilities at phi1.
double avg_n_at(const StoredRun& run, const TrialLayout& layout, const std::vector<int>& looks,
                int final_n, double phi1);

struct Calibration {
  double threshold = 0.0;
  double achieved = 0.0;  // FWER for phi2, per-arm average n for phi1
  long n_reps = 0;
  std::uint64_t seed = 0;
  bool operator==(const Calibration&) const = default;
};

constexpr double kCalibrationStep = 0.001;

Calibration calibrate_phi2(const DesignSpec& design, const Scenario& null_scenario,
                           double target_fwer, long n_reps, std::uint64_t seed, int jobs = 1);
Calibration calibrate_phi2(const StoredRun& run, double target_fwer);

Calibration calibrate_phi1(const DesignSpec& design, const Scenario& null_scenario,
                           double target_avg_n, long n_reps, std::uint64_t seed, int jobs = 1);
Calibration calibrate_phi1(const StoredRun& run, const DesignSpec& design, double target_avg_n);

}  // namespace muce
