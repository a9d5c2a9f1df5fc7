#include "muce/trial.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>

#include "muce/random.hpp"

namespace muce {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

constexpr std::uint64_t kOutcomeStream = 0x6f7574636f6d65ULL;
constexpr std::uint64_t kAnalysisStream = 0x616e616c797365ULL;

Scenario make_scenario(std::string label, std::size_t indications, std::size_t doses,
                       const std::vector<double>& by_dose) {
  // by_dose lists dose 1 across indications, then dose 2, and so on.
  Scenario s{std::move(label), ArmMatrix<double>(indications, doses)};
  for (std::size_t j = 0; j < doses; ++j)
    for (std::size_t i = 0; i < indications; ++i) s.true_p(i, j) = by_dose[j * indications + i];
  return s;
}

const std::vector<Scenario>& scenario_catalog() {
  static const std::vector<Scenario> catalog = [] {
    std::vector<Scenario> c;
    c.push_back(make_scenario("table3-scenario1", 4, 1, {0.2, 0.2, 0.2, 0.2}));
    c.push_back(make_scenario("table3-scenario2", 4, 1, {0.35, 0.35, 0.35, 0.35}));
    c.push_back(make_scenario("table3-scenario3", 4, 1, {0.2, 0.2, 0.35, 0.45}));
    c.push_back(make_scenario("table3-scenario4", 4, 1, {0.2, 0.35, 0.35, 0.45}));
    c.push_back(make_scenario("table3-scenario5", 4, 1, {0.2, 0.2, 0.2, 0.35}));
    const std::vector<double> null4(4, 0.2), half4(4, 0.5);
    auto rows = [](std::initializer_list<std::vector<double>> r) {
      std::vector<double> out;
      for (const auto& v : r) out.insert(out.end(), v.begin(), v.end());
      return out;
    };
    c.push_back(make_scenario("table4-scenario1", 4, 3, rows({null4, null4, null4})));
    c.push_back(make_scenario("table4-scenario2", 4, 3, rows({half4, half4, half4})));
    c.push_back(make_scenario("table4-scenario3", 4, 3,
                              rows({std::vector<double>(4, 0.3), std::vector<double>(4, 0.4),
                                    half4})));
    const std::vector<double> mixed{0.5, 0.5, 0.2, 0.2};
    c.push_back(make_scenario("table4-scenario4", 4, 3, rows({mixed, mixed, mixed})));
    c.push_back(make_scenario(
        "table4-scenario5", 4, 3,
        rows({{0.3, 0.3, 0.2, 0.2}, {0.4, 0.4, 0.2, 0.2}, {0.5, 0.5, 0.2, 0.2}})));
    c.push_back(make_scenario("table4-scenario6", 4, 3, rows({null4, null4, mixed})));
    return c;
  }();
  return catalog;
}

ArmMatrix<double> decision_probabilities(const DesignSpec& d, const TrialDataset& data,
                                         bool final_analysis, std::uint64_t seed) {
  const std::size_t I = data.n.rows(), J = data.n.cols();
  McmcConfig cfg = d.mcmc;
  cfg.seed = seed;
  if (d.method == Method::muce)
    return muce_fit(data, d.layout, d.hyper, cfg, {PointEstimate::mean, false}).pr_h1;

  BasketData b;
  for (std::size_t i = 0; i < I; ++i) {
    for (std::size_t j = 0; j < J; ++j) {
      b.n.push_back(data.n(i, j));
      b.y.push_back(data.y(i, j));
      b.pi0.push_back(d.layout.pi0[i]);
      b.pi1.push_back(d.pi1[i]);
    }
  }
  const BasketReport rep =
      d.method == Method::bbhm ? bbhm_fit(b, d.bbhm, cfg) : exnex_fit(b, d.exnex, cfg);
  ArmMatrix<double> out(I, J);
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = final_analysis ? rep.pr_final[k] : rep.pr_interim[k];
  return out;
}

// Applies the per-arm decision rule; for Simon the "probability" is the
// indicator that the responder count clears the stage boundary.
ArmMatrix<double> analyze(const DesignSpec& d, const TrialDataset& data, bool final_analysis,
                          std::uint64_t seed) {
  if (d.method != Method::simon) return decision_probabilities(d, data, final_analysis, seed);
  ArmMatrix<double> out(data.n.rows(), data.n.cols());
  const int bound = final_analysis ? d.simon->r : d.simon->r1;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = data.y[k] > bound ? 1.0 : 0.0;
  return out;
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::muce:
      return "muce";
    case Method::bbhm:
      return "bbhm";
    case Method::exnex:
      return "exnex";
    case Method::simon:
      break;
  }
  return "simon";
}

std::optional<Method> method_by_name(std::string_view name) {
  for (Method m : {Method::muce, Method::bbhm, Method::exnex, Method::simon})
    if (method_name(m) == name) return m;
  return std::nullopt;
}

std::vector<int> DesignSpec::looks() const {
  if (method == Method::simon) return {simon->n1};
  return layout.interim_schedule;
}

int DesignSpec::final_n() const { return method == Method::simon ? simon->N : layout.max_n; }

void DesignSpec::validate() const {
  layout.validate();
  mcmc.validate();
  switch (method) {
    case Method::simon:
      require(simon.has_value(), "Simon design requires the (r1, n1, r, N) tuple");
      simon->validate();
      require(simon->n1 < simon->N, "Simon design needs n1 < N");
      return;
    case Method::muce:
      hyper.validate();
      break;
    case Method::bbhm:
      bbhm.validate();
      break;
    case Method::exnex:
      exnex.validate();
      break;
  }
  require(phi1 >= 0.0 && phi1 < phi2 && phi2 <= 1.0, "thresholds need 0 <= phi1 < phi2 <= 1");
  if (method == Method::bbhm || method == Method::exnex) {
    require(pi1.size() == static_cast<std::size_t>(layout.n_indications),
            "pi1 needs one entry per indication");
    for (double p : pi1) require(p > 0.0 && p < 1.0, "pi1 entries must lie in (0,1)");
  }
}

void Scenario::validate() const {
  require(true_p.size() > 0, "scenario needs at least one arm");
  for (double p : true_p.values()) require(p > 0.0 && p < 1.0, "true rates must lie in (0,1)");
}

std::optional<Scenario> scenario_by_name(std::string_view name) {
  for (const Scenario& s : scenario_catalog())
    if (s.label == name) return s;
  return std::nullopt;
}

std::vector<std::string> scenario_names() {
  std::vector<std::string> out;
  for (const Scenario& s : scenario_catalog()) out.push_back(s.label);
  return out;
}

ArmMatrix<bool> truly_null(const Scenario& s, const TrialLayout& layout) {
  ArmMatrix<bool> out(s.true_p.rows(), s.true_p.cols());
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j)
      out(i, j) = s.true_p(i, j) <= layout.pi0[i];
  return out;
}

TrialResult conduct_trial(const DesignSpec& design, const Scenario& scenario,
                          std::uint64_t rep_seed) {
  design.validate();
  scenario.validate();
  const std::size_t I = static_cast<std::size_t>(design.layout.n_indications);
  const std::size_t J = static_cast<std::size_t>(design.layout.n_doses);
  require(scenario.true_p.rows() == I && scenario.true_p.cols() == J,
          "scenario dimensions do not match layout");
  const int total = design.final_n();
  ArmMatrix<std::vector<bool>> outcomes(I, J);
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    RandomStream rng(derive_seed(rep_seed, {kOutcomeStream, k}));
    outcomes[k].resize(static_cast<std::size_t>(total));
    for (int m = 0; m < total; ++m)
      outcomes[k][static_cast<std::size_t>(m)] = rng.bernoulli(scenario.true_p[k]);
  }
  return conduct_trial(design, outcomes, rep_seed);
}

TrialResult conduct_trial(const DesignSpec& design, const ArmMatrix<std::vector<bool>>& outcomes,
                          std::uint64_t rep_seed) {
  design.validate();
  const std::size_t I = static_cast<std::size_t>(design.layout.n_indications);
  const std::size_t J = static_cast<std::size_t>(design.layout.n_doses);
  require(outcomes.rows() == I && outcomes.cols() == J, "outcome matrix does not match layout");
  const int total = design.final_n();
  for (std::size_t k = 0; k < outcomes.size(); ++k)
    require(outcomes[k].size() >= static_cast<std::size_t>(total),
            "each arm needs an outcome for every patient up to the final sample size");

  TrialDataset data(I, J);
  TrialResult res{ArmMatrix<int>(I, J, 0), ArmMatrix<int>(I, J, 0), ArmMatrix<bool>(I, J, false),
                  ArmMatrix<int>(I, J, -1), {}};
  auto enroll_to = [&](int count) {
    for (std::size_t k = 0; k < data.n.size(); ++k) {
      if (!data.active[k]) continue;
      data.n[k] = count;
      data.y[k] = static_cast<int>(std::count(outcomes[k].begin(),
                                              outcomes[k].begin() + count, true));
    }
  };
  auto any_active = [&] {
    return std::any_of(data.active.values().begin(), data.active.values().end(),
                       [](bool a) { return a; });
  };

  // Simon "probabilities" are 0/1 boundary indicators.
  const bool simon = design.method == Method::simon;
  const double stop_below = simon ? 0.5 : design.phi1;
  const double promising_above = simon ? 0.5 : design.phi2;
  const std::vector<int> looks = design.looks();
  int stage = 0;
  for (; stage < static_cast<int>(looks.size()) && any_active(); ++stage) {
    enroll_to(looks[static_cast<std::size_t>(stage)]);
    AnalysisRecord rec{stage, false, data.n, data.y, data.active,
                       analyze(design, data, false,
                               derive_seed(rep_seed, {kAnalysisStream,
                                                      static_cast<std::uint64_t>(stage)}))};
    for (std::size_t k = 0; k < data.n.size(); ++k) {
      if (data.active[k] && rec.prob[k] < stop_below) {
        data.active[k] = false;
        res.stop_stage[k] = stage;
      }
    }
    res.analyses.push_back(std::move(rec));
  }
  if (any_active()) {
    enroll_to(total);
    AnalysisRecord rec{stage, true, data.n, data.y, data.active,
                       analyze(design, data, true,
                               derive_seed(rep_seed, {kAnalysisStream,
                                                      static_cast<std::uint64_t>(stage)}))};
    for (std::size_t k = 0; k < data.n.size(); ++k)
      res.promising[k] = data.active[k] && rec.prob[k] > promising_above;
    res.analyses.push_back(std::move(rec));
  }
  res.n = data.n;
  res.y = data.y;
  return res;
}

OcTally::OcTally(std::size_t arms, std::size_t interims)
    : promising(arms, 0), enrolled(arms, 0),
      stopped(interims, std::vector<long>(arms, 0)) {}

void OcTally::add(const TrialResult& r, const ArmMatrix<bool>& null_arms) {
  ++n_reps;
  bool false_positive = false;
  for (std::size_t k = 0; k < promising.size(); ++k) {
    if (r.promising[k]) {
      ++promising[k];
      if (null_arms[k]) false_positive = true;
    }
    enrolled[k] += r.n[k];
    if (r.stop_stage[k] >= 0) ++stopped[static_cast<std::size_t>(r.stop_stage[k])][k];
  }
  if (false_positive) ++any_null_promising;
}

void OcTally::merge(const OcTally& o) {
  if (o.n_reps == 0) return;
  if (n_reps == 0 && promising.empty()) {
    *this = o;
    return;
  }
  if (o.promising.size() != promising.size() || o.stopped.size() != stopped.size())
    throw std::invalid_argument("cannot merge tallies of different shapes");
  n_reps += o.n_reps;
  any_null_promising += o.any_null_promising;
  for (std::size_t k = 0; k < promising.size(); ++k) {
    promising[k] += o.promising[k];
    enrolled[k] += o.enrolled[k];
  }
  for (std::size_t l = 0; l < stopped.size(); ++l)
    for (std::size_t k = 0; k < stopped[l].size(); ++k) stopped[l][k] += o.stopped[l][k];
}

OCReport make_report(const OcTally& t, const Scenario& s, const DesignSpec& d,
                     std::uint64_t seed) {
  OCReport r;
  r.scenario = s.label;
  r.n_indications = s.true_p.rows();
  r.n_doses = s.true_p.cols();
  r.true_p = s.true_p.values();
  const ArmMatrix<bool> nulls = truly_null(s, d.layout);
  r.truly_null.assign(nulls.values().begin(), nulls.values().end());
  r.n_reps = t.n_reps;
  r.seed = seed;
  const double reps = static_cast<double>(std::max(t.n_reps, 1L));
  long total = 0;
  for (std::size_t k = 0; k < t.promising.size(); ++k) {
    r.rejection_rate.push_back(t.promising[k] / reps);
    r.avg_n.push_back(t.enrolled[k] / reps);
    total += t.enrolled[k];
  }
  for (const auto& row : t.stopped) {
    std::vector<double> rates;
    for (long c : row) rates.push_back(c / reps);
    r.early_stop_rate.push_back(std::move(rates));
  }
  r.avg_total_n = total / reps;
  r.fwer = t.any_null_promising / reps;
  return r;
}

std::uint64_t replication_seed(std::uint64_t seed, long rep) {
  return derive_seed(seed, {static_cast<std::uint64_t>(rep)});
}

namespace {

// Calls body(rep) for every rep in [begin, end), split into contiguous
// chunks over `jobs` threads; chunk c is handled by worker c.
template <class Body>
void parallel_reps(long begin, long end, int jobs, Body&& body) {
  const long count = std::max(0L, end - begin);
  const long workers = std::clamp<long>(jobs, 1, std::max(1L, count));
  if (workers == 1) {
    for (long r = begin; r < end; ++r) body(0, r);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (long w = 0; w < workers; ++w) {
    const long lo = begin + count * w / workers, hi = begin + count * (w + 1) / workers;
    pool.emplace_back([&, w, lo, hi] {
      try {
        for (long r = lo; r < hi; ++r) body(static_cast<std::size_t>(w), r);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

OcTally simulate_range(const DesignSpec& design, const Scenario& scenario, std::uint64_t seed,
                       long begin, long end, int jobs) {
  design.validate();
  const ArmMatrix<bool> nulls = truly_null(scenario, design.layout);
  const std::size_t arms = static_cast<std::size_t>(design.layout.arms());
  const std::size_t interims = design.looks().size();
  const long workers = std::clamp<long>(jobs, 1, std::max(1L, end - begin));
  std::vector<OcTally> partial(static_cast<std::size_t>(workers), OcTally(arms, interims));
  parallel_reps(begin, end, jobs, [&](std::size_t w, long rep) {
    partial[w].add(conduct_trial(design, scenario, replication_seed(seed, rep)), nulls);
  });
  OcTally out(arms, interims);
  for (const OcTally& t : partial) out.merge(t);
  return out;
}

OCReport simulate_oc(const DesignSpec& design, const Scenario& scenario, long n_reps,
                     std::uint64_t seed, int jobs) {
  require(n_reps >= 1, "n_reps must be at least 1");
  return make_report(simulate_range(design, scenario, seed, 0, n_reps, jobs), scenario, design,
                     seed);
}

StoredRun run_replications(const DesignSpec& design, const Scenario& scenario, long n_reps,
                           std::uint64_t seed, int jobs) {
  require(n_reps >= 1, "n_reps must be at least 1");
  StoredRun run{std::vector<TrialResult>(static_cast<std::size_t>(n_reps)),
                truly_null(scenario, design.layout)};
  parallel_reps(0, n_reps, jobs, [&](std::size_t, long rep) {
    run.results[static_cast<std::size_t>(rep)] =
        conduct_trial(design, scenario, replication_seed(seed, rep));
  });
  return run;
}

double fwer_at(const StoredRun& run, double phi2) {
  long hits = 0;
  for (const TrialResult& r : run.results) {
    if (r.analyses.empty() || !r.analyses.back().final_analysis) continue;
    const AnalysisRecord& fin = r.analyses.back();
    for (std::size_t k = 0; k < fin.prob.size(); ++k) {
      if (run.null_arms[k] && fin.active[k] && fin.prob[k] > phi2) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(run.results.size());
}

double avg_n_at(const StoredRun& run, const TrialLayout& layout, const std::vector<int>& looks,
                int final_n, double phi1) {
  const std::size_t arms = static_cast<std::size_t>(layout.arms());
  double total = 0.0;
  for (const TrialResult& r : run.results) {
    for (std::size_t k = 0; k < arms; ++k) {
      int n = final_n;
      for (const AnalysisRecord& rec : r.analyses) {
        if (rec.final_analysis) break;
        if (rec.prob[k] < phi1) {
          n = looks[static_cast<std::size_t>(rec.stage)];
          break;
        }
      }
      total += n;
    }
  }
  return total / static_cast<double>(run.results.size() * arms);
}

Calibration calibrate_phi2(const StoredRun& run, double target_fwer) {
  require(target_fwer >= 0.0 && target_fwer <= 1.0, "target FWER must lie in [0,1]");
  const int steps = static_cast<int>(std::lround(1.0 / kCalibrationStep));
  for (int g = 0; g <= steps; ++g) {
    const double t = g * kCalibrationStep;
    const double f = fwer_at(run, t);
    if (f <= target_fwer) return {t, f, static_cast<long>(run.results.size()), 0};
  }
  throw std::runtime_error("target FWER unreachable on the threshold grid");
}

Calibration calibrate_phi2(const DesignSpec& design, const Scenario& null_scenario,
                           double target_fwer, long n_reps, std::uint64_t seed, int jobs) {
  require(target_fwer >= 0.0 && target_fwer <= 1.0, "target FWER must lie in [0,1]");
  Calibration c =
      calibrate_phi2(run_replications(design, null_scenario, n_reps, seed, jobs), target_fwer);
  c.seed = seed;
  return c;
}

Calibration calibrate_phi1(const StoredRun& run, const DesignSpec& design, double target_avg_n) {
  const std::vector<int> looks = design.looks();
  require(!looks.empty(), "phi1 calibration needs at least one interim look");
  const int steps = static_cast<int>(std::lround(1.0 / kCalibrationStep));
  Calibration best{0.0, avg_n_at(run, design.layout, looks, design.final_n(), 0.0),
                   static_cast<long>(run.results.size()), 0};
  for (int g = 1; g <= steps; ++g) {
    const double t = g * kCalibrationStep;
    const double a = avg_n_at(run, design.layout, looks, design.final_n(), t);
    if (std::abs(a - target_avg_n) < std::abs(best.achieved - target_avg_n)) best = {t, a, best.n_reps, 0};
  }
  return best;
}

Calibration calibrate_phi1(const DesignSpec& design, const Scenario& null_scenario,
                           double target_avg_n, long n_reps, std::uint64_t seed, int jobs) {
  require(design.method != Method::simon, "phi1 calibration applies to Bayesian designs");
  require(!design.looks().empty(), "phi1 calibration needs at least one interim look");
  // Stop nothing so every interim probability is observed for every arm.
  DesignSpec open = design;
  open.phi1 = 0.0;
  Calibration c = calibrate_phi1(run_replications(open, null_scenario, n_reps, seed, jobs), design,
                                 target_avg_n);
  c.seed = seed;
  return c;
}

}  // namespace muce
