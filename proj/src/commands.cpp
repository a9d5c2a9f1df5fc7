#include <algorithm>
#include <cmath>

#include "muce/io.hpp"

#ifndef MUCE_VERSION
#define MUCE_VERSION "unknown"
#endif

namespace muce {

namespace {

json quantiles(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  auto q = [&](double prob) {
    const double pos = prob * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {{"q025", q(0.025)}, {"q50", q(0.5)}, {"q975", q(0.975)}};
}

json draw_summaries(const PosteriorDraws& d) {
  json arms = json::array();
  for (int k = 0; k < d.arms(); ++k) {
    const std::vector<double> theta = d.theta_chain(k);
    const double n = static_cast<double>(theta.size());
    double mean = 0.0;
    for (double t : theta) mean += t;
    mean /= n;
    double ss = 0.0;
    for (double t : theta) ss += (t - mean) * (t - mean);
    std::vector<double> p(theta.size());
    std::transform(theta.begin(), theta.end(), p.begin(), inv_logit);
    arms.push_back({{"indication", k / d.n_doses + 1},
                    {"dose", k % d.n_doses + 1},
                    {"theta_mean", mean},
                    {"theta_sd", n > 1 ? std::sqrt(ss / (n - 1)) : 0.0},
                    {"p", quantiles(std::move(p))}});
  }
  return arms;
}

json diagnostics_json(const std::vector<ArmDiagnostics>& diag, int doses) {
  json arms = json::array();
  for (std::size_t k = 0; k < diag.size(); ++k) {
    const ArmDiagnostics& a = diag[k];
    arms.push_back({{"indication", static_cast<int>(k) / doses + 1},
                    {"dose", static_cast<int>(k) % doses + 1},
                    {"ess", a.ess},
                    {"acceptance", a.acceptance},
                    {"split_chain_ratio", std::isfinite(a.split_chain_ratio)
                                              ? json(a.split_chain_ratio)
                                              : json(nullptr)},
                    {"flagged", a.flagged}});
  }
  return arms;
}

class Emitter {
 public:
  Emitter(Command command, const RunConfig& cfg) : command_(command), cfg_(cfg) {
    out_.record = {{"muce_version", MUCE_VERSION},
                   {"command", command_name(command)},
                   {"seed", cfg.seed ? json(*cfg.seed) : json(nullptr)},
                   {"config", config_to_json(cfg)}};
  }

  void table(const std::string& stem, const Table& t) {
    const std::vector<std::string> comments{
        "muce " + std::string(MUCE_VERSION) + " command=" + std::string(command_name(command_)) +
            " seed=" + (cfg_.seed ? std::to_string(*cfg_.seed) : std::string("none")),
        "config " + out_.record["config"].dump()};
    write(stem + ".csv", render_csv(t, comments));
  }

  void records(const std::string& stem) { write(stem + ".json", out_.record.dump(2) + "\n"); }

  json& result() { return out_.record["result"]; }
  CommandOutput finish() { return std::move(out_); }

 private:
  void write(const std::string& name, const std::string& content) {
    const std::filesystem::path path = std::filesystem::path(cfg_.out) / name;
    write_atomic(path, content);
    out_.files.push_back(path);
  }

  Command command_;
  const RunConfig& cfg_;
  CommandOutput out_;
};

}  // namespace

CommandOutput run_command(Command command, const RunConfig& cfg) {
  cfg.require_for(command);
  Emitter emit(command, cfg);
  const bool table = cfg.format == OutputFormat::table;
  const std::string stem(command_name(command));

  switch (command) {
    case Command::analyze: {
      const DesignSpec& d = *cfg.design;
      const AnalyzeRequest& a = *cfg.analyze;
      McmcConfig mc = d.mcmc;
      mc.seed = *cfg.seed;
      const PosteriorDraws draws = muce_sample(a.data, d.layout, d.hyper, mc);
      const PosteriorReport report = summarize(draws, mc, a.estimator);
      ArmMatrix<std::string> decisions(report.pr_h1.rows(), report.pr_h1.cols());
      for (std::size_t k = 0; k < decisions.size(); ++k)
        decisions[k] = arm_decision(a.data.active[k], report.pr_h1[k], d, a.final_analysis);
      json decision_rows = json::array();
      for (std::size_t i = 0; i < decisions.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < decisions.cols(); ++j) row.push_back(decisions(i, j));
        decision_rows.push_back(std::move(row));
      }
      emit.result() = {{"report", report},
                       {"final_analysis", a.final_analysis},
                       {"decisions", decision_rows},
                       {"summaries", draw_summaries(draws)}};
      if (draws.n_draws >= 100)
        emit.result()["diagnostics"] = diagnostics_json(diagnostics(draws), draws.n_doses);
      if (table)
        emit.table(stem, posterior_table(report, a.data, d, a.final_analysis));
      else
        emit.records(stem);
      break;
    }
    case Command::simulate: {
      std::vector<OCReport> reports;
      for (const Scenario& s : cfg.simulate->scenarios)
        reports.push_back(simulate_oc(*cfg.design, s, cfg.reps, *cfg.seed, cfg.jobs));
      emit.result() = {{"method", method_name(cfg.design->method)}, {"reports", reports}};
      if (table)
        emit.table(stem, oc_table(reports));
      else
        emit.records(stem);
      emit.table(stem + "_plot", plot_data(*cfg.design, reports));
      break;
    }
    case Command::calibrate: {
      const CalibrateRequest& c = *cfg.calibrate;
      const Calibration cal =
          c.parameter == CalibrationTarget::phi2
              ? calibrate_phi2(*cfg.design, c.scenario, c.target, cfg.reps, *cfg.seed, cfg.jobs)
              : calibrate_phi1(*cfg.design, c.scenario, c.target, cfg.reps, *cfg.seed, cfg.jobs);
      emit.result() = {{"parameter", c.parameter == CalibrationTarget::phi1 ? "phi1" : "phi2"},
                       {"target", c.target},
                       {"calibration", cal}};
      if (table)
        emit.table(stem, calibration_table(c.parameter, cal));
      else
        emit.records(stem);
      break;
    }
    case Command::design_simon: {
      const SimonRequest& s = *cfg.design_simon;
      std::vector<SimonResult> results;
      for (SimonCriterion c : s.criteria) {
        SimonResult r;
        r.criterion = c;
        r.design = simon_search(s.p0, s.p1, s.alpha, s.beta, c, s.n_max);
        r.null_rates = two_stage_error_rates(r.design, s.p0);
        r.alt_rates = two_stage_error_rates(r.design, s.p1);
        r.arms = s.arms;
        r.fwer = fwer_independent(r.null_rates.reject_prob, s.arms);
        results.push_back(r);
      }
      emit.result() = {{"designs", results}};
      if (table)
        emit.table("design_simon", simon_table(results));
      else
        emit.records("design_simon");
      break;
    }
    case Command::correlations: {
      const Hyperparameters& h = cfg.correlations->hyper;
      emit.result() = {
          {"same_indication", prior_correlation(h, CorrelationCase::same_indication)},
          {"same_dose", prior_correlation(h, CorrelationCase::same_dose)},
          {"neither", prior_correlation(h, CorrelationCase::neither)}};
      if (table)
        emit.table(stem, correlation_table(h));
      else
        emit.records(stem);
      break;
    }
  }
  return emit.finish();
}

}  // namespace muce
