#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "muce/comparators.hpp"
#include "muce/mcmc.hpp"
#include "muce/model.hpp"
#include "muce/trial.hpp"

namespace muce {

using json = nlohmann::json;

/// Invalid or inconsistent configuration. `field` is a dotted path such as
/// "analyze.data.y[0][0]", or "" for document-level problems.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message);
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class Command { analyze, simulate, calibrate, design_simon, correlations };
enum class OutputFormat { table, records };

std::string_view command_name(Command c);
std::optional<Command> command_by_name(std::string_view name);

struct AnalyzeRequest {
  TrialDataset data;
  bool final_analysis = true;
  PointEstimate estimator = PointEstimate::mean;
  bool operator==(const AnalyzeRequest&) const = default;
};

struct SimulateRequest {
  std::vector<Scenario> scenarios;
  bool operator==(const SimulateRequest&) const = default;
};

enum class CalibrationTarget { phi1, phi2 };

struct CalibrateRequest {
  CalibrationTarget parameter = CalibrationTarget::phi2;
  double target = 0.1;  // FWER for phi2, per-arm average n for phi1
  Scenario scenario;
  bool operator==(const CalibrateRequest&) const = default;
};

struct SimonRequest {
  double p0 = 0.2;
  double p1 = 0.35;
  double alpha = 0.1;
  double beta = 0.3;
  std::vector<SimonCriterion> criteria{SimonCriterion::optimal, SimonCriterion::minimax};
  int n_max = 100;
  int arms = 1;  // independent arms for the FWER column
  bool operator==(const SimonRequest&) const = default;
};

struct CorrelationRequest {
  Hyperparameters hyper;
  bool operator==(const CorrelationRequest&) const = default;
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  long reps = 1000;
  int jobs = 1;
  OutputFormat format = OutputFormat::table;
  std::string out = ".";
  std::optional<DesignSpec> design;
  std::optional<AnalyzeRequest> analyze;
  std::optional<SimulateRequest> simulate;
  std::optional<CalibrateRequest> calibrate;
  std::optional<SimonRequest> design_simon;
  std::optional<CorrelationRequest> correlations;

  /// Throws ConfigError if a section `command` needs is missing.
  void require_for(Command command) const;
  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const json& doc);

void to_json(json& j, const PosteriorReport& r);
void from_json(const json& j, PosteriorReport& r);
void to_json(json& j, const OCReport& r);
void from_json(const json& j, OCReport& r);
void to_json(json& j, const Calibration& c);
void from_json(const json& j, Calibration& c);

struct SimonResult {
  SimonCriterion criterion = SimonCriterion::optimal;
  SimonDesign design;
  StageErrorRates null_rates;
  StageErrorRates alt_rates;
  double fwer = 0.0;
  int arms = 1;
};
void to_json(json& j, const SimonResult& r);
void from_json(const json& j, SimonResult& r);

/// Locale-independent rendering to 6 significant digits.
std::string format_number(double x);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Comma-delimited text with a header row. Each comment line is emitted
/// first with a leading "# ".
std::string render_csv(const Table& t, const std::vector<std::string>& comments = {});

Table posterior_table(const PosteriorReport& report, const TrialDataset& data,
                      const DesignSpec& design, bool final_analysis);
Table oc_table(const std::vector<OCReport>& reports);
/// Long-format rows (design, scenario, arm, metric, value).
Table plot_data(const DesignSpec& design, const std::vector<OCReport>& reports);
Table calibration_table(CalibrationTarget parameter, const Calibration& c);
Table simon_table(const std::vector<SimonResult>& results);
Table correlation_table(const Hyperparameters& hyper);

/// Decision label for one arm of an analysis snapshot.
std::string arm_decision(bool active, double pr, const DesignSpec& design, bool final_analysis);

/// Writes to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

struct CommandOutput {
  json record;  // self-describing document: version, command, seed, config, result
  std::vector<std::filesystem::path> files;
};

/// Runs `command` and writes its artifacts under cfg.out.
CommandOutput run_command(Command command, const RunConfig& cfg);

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

}  // namespace muce
