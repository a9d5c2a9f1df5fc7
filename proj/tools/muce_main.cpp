#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "muce/io.hpp"

namespace {

void report_error(const char* kind, const std::string& field, const std::string& message) {
  muce::json err{{"status", "error"}, {"kind", kind}, {"message", message}};
  if (!field.empty()) err["field"] = field;
  std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MUCE expansion-cohort design engine"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<long> reps;
  std::optional<int> jobs;
  std::optional<std::string> out;
  std::optional<std::string> format;
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--seed", seed, "master seed, overrides the config");
  app.add_option("--reps", reps, "Monte Carlo replications")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "output directory");
  app.add_option("--format", format, "output format")->check(CLI::IsMember({"table", "records"}));
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  struct Sub {
    muce::Command command;
    const char* help;
  };
  for (const Sub& s : {Sub{muce::Command::analyze, "posterior analysis of one dataset"},
                       Sub{muce::Command::simulate, "operating characteristics by simulation"},
                       Sub{muce::Command::calibrate, "calibrate phi1 or phi2 by simulation"},
                       Sub{muce::Command::design_simon, "Simon two-stage design search"},
                       Sub{muce::Command::correlations, "prior latent correlations"}})
    app.add_subcommand(std::string(muce::command_name(s.command)), s.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", "", e.what());
    return muce::kExitConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  const muce::Command command = *muce::command_by_name(name);
  try {
    muce::RunConfig cfg = muce::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (reps) cfg.reps = *reps;
    if (jobs) cfg.jobs = *jobs;
    if (out) cfg.out = *out;
    if (format) cfg.format = *format == "table" ? muce::OutputFormat::table : muce::OutputFormat::records;
    const muce::CommandOutput result = muce::run_command(command, cfg);
    muce::json ok{{"status", "ok"}, {"command", name}, {"files", muce::json::array()}};
    for (const auto& f : result.files) ok["files"].push_back(f.string());
    std::cout << ok.dump() << "\n";
    return muce::kExitOk;
  } catch (const muce::ConfigError& e) {
    report_error("config", e.field(), e.what());
    return muce::kExitConfig;
  } catch (const std::exception& e) {
    report_error("runtime", "", e.what());
    return muce::kExitRuntime;
  }
}
