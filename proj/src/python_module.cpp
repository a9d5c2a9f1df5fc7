#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "muce/io.hpp"

namespace py = pybind11;
using namespace muce;

namespace {

using Grid = std::vector<std::vector<double>>;

template <class T>
ArmMatrix<T> to_matrix(const std::vector<std::vector<T>>& rows, const char* name) {
  if (rows.empty() || rows[0].empty()) throw ConfigError(name, "must be a non-empty nested list");
  ArmMatrix<T> m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw ConfigError(name, "rows must have equal length");
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

Grid to_grid(const ArmMatrix<double>& m) {
  Grid g(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

// Hyperparameters from a preset name or a JSON object, validated the same
// way as a config file.
Hyperparameters hyper_from(const std::string& doc) {
  return parse_config(R"({"correlations": {"hyper": )" + doc + "}}").correlations->hyper;
}

PointEstimate estimator_from(const std::string& name) {
  if (name == "mean") return PointEstimate::mean;
  if (name == "median") return PointEstimate::median;
  if (name == "logit_mean") return PointEstimate::logit_mean;
  throw ConfigError("estimator", "expected mean, median or logit_mean");
}

py::dict fit(const std::vector<std::vector<int>>& n, const std::vector<std::vector<int>>& y,
             const std::vector<double>& pi0, const std::string& hyper,
             std::optional<std::vector<std::vector<bool>>> active, int burn_in, int n_keep, int thin,
             std::uint64_t seed, const std::string& estimator) {
  TrialDataset data;
  data.n = to_matrix(n, "n");
  data.y = to_matrix(y, "y");
  data.active = active ? to_matrix(*active, "active")
                       : ArmMatrix<bool>(data.n.rows(), data.n.cols(), true);
  TrialLayout layout;
  layout.n_indications = static_cast<int>(data.n.rows());
  layout.n_doses = static_cast<int>(data.n.cols());
  layout.pi0 = pi0;
  layout.max_n = 1;
  for (int v : data.n.values()) layout.max_n = std::max(layout.max_n, v);
  const McmcConfig cfg{burn_in, n_keep, thin, seed, 1.0, true};
  const PointEstimate est = estimator_from(estimator);
  const Hyperparameters h = hyper_from(hyper);
  PosteriorReport r;
  {
    py::gil_scoped_release release;
    r = muce_fit(data, layout, h, cfg, {est, true});
  }
  py::dict out;
  out["pr_h1"] = to_grid(r.pr_h1);
  out["est_p"] = to_grid(r.est_p);
  out["ess"] = to_grid(r.ess);
  out["acceptance"] = to_grid(r.acceptance);
  return out;
}

SimonCriterion criterion_from(const std::string& name) {
  if (name == "optimal") return SimonCriterion::optimal;
  if (name == "minimax") return SimonCriterion::minimax;
  throw ConfigError("criterion", "expected optimal or minimax");
}

py::tuple run(const std::string& command, const std::string& config, const std::string& out,
              std::optional<std::uint64_t> seed, std::optional<long> reps, std::optional<int> jobs,
              const std::string& format) {
  const auto cmd = command_by_name(command);
  if (!cmd) throw ConfigError("command", "unknown command '" + command + "'");
  RunConfig cfg = parse_config(config);
  if (seed) cfg.seed = *seed;
  if (reps) cfg.reps = *reps;
  if (jobs) cfg.jobs = *jobs;
  cfg.out = out;
  if (format == "table")
    cfg.format = OutputFormat::table;
  else if (format == "records")
    cfg.format = OutputFormat::records;
  else
    throw ConfigError("format", "expected table or records");
  CommandOutput result;
  {
    py::gil_scoped_release release;
    result = run_command(*cmd, cfg);
  }
  std::vector<std::string> files;
  for (const auto& f : result.files) files.push_back(f.string());
  return py::make_tuple(result.record.dump(), files);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MUCE design engine";
  m.attr("__version__") = MUCE_VERSION;

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> config_error;
  config_error.call_once_and_store_result(
      [&]() { return py::exception<ConfigError>(m, "ConfigError", PyExc_ValueError); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error.get_stored(), py::make_tuple(e.what(), e.field()));
    }
  });

  m.def("fit", &fit, py::arg("n"), py::arg("y"), py::arg("pi0"), py::arg("hyper") = "\"setting1\"",
        py::arg("active") = py::none(), py::arg("burn_in") = 2000, py::arg("n_keep") = 8000,
        py::arg("thin") = 1, py::arg("seed") = 1, py::arg("estimator") = "mean");

  m.def(
      "prior_correlation",
      [](const std::string& hyper) {
        const Hyperparameters h = hyper_from(hyper);
        return py::make_tuple(prior_correlation(h, CorrelationCase::same_indication),
                              prior_correlation(h, CorrelationCase::same_dose),
                              prior_correlation(h, CorrelationCase::neither));
      },
      py::arg("hyper"));

  m.def(
      "simon_search",
      [](double p0, double p1, double alpha, double beta, const std::string& criterion, int n_max) {
        const SimonDesign d = simon_search(p0, p1, alpha, beta, criterion_from(criterion), n_max);
        return py::make_tuple(d.r1, d.n1, d.r, d.N);
      },
      py::arg("p0"), py::arg("p1"), py::arg("alpha"), py::arg("beta"),
      py::arg("criterion") = "optimal", py::arg("n_max") = 100);

  m.def(
      "two_stage_error_rates",
      [](int r1, int n1, int r, int N, double p) {
        const StageErrorRates s = two_stage_error_rates(SimonDesign{r1, n1, r, N}, p);
        py::dict out;
        out["reject_prob"] = s.reject_prob;
        out["pet"] = s.pet;
        out["expected_n"] = s.expected_n;
        return out;
      },
      py::arg("r1"), py::arg("n1"), py::arg("r"), py::arg("N"), py::arg("p"));

  m.def("fwer_independent", &fwer_independent, py::arg("alpha"), py::arg("K"));

  m.def("run", &run, py::arg("command"), py::arg("config"), py::arg("out"),
        py::arg("seed") = py::none(), py::arg("reps") = py::none(), py::arg("jobs") = py::none(),
        py::arg("format") = "records");
}
