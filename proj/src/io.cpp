#include "muce/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace muce {

ConfigError::ConfigError(std::string field, const std::string& message)
    : std::runtime_error(field.empty() ? message : field + ": " + message),
      field_(std::move(field)) {}

std::string_view command_name(Command c) {
  switch (c) {
    case Command::analyze:
      return "analyze";
    case Command::simulate:
      return "simulate";
    case Command::calibrate:
      return "calibrate";
    case Command::design_simon:
      return "design-simon";
    case Command::correlations:
      break;
  }
  return "correlations";
}

std::optional<Command> command_by_name(std::string_view name) {
  for (Command c : {Command::analyze, Command::simulate, Command::calibrate,
                    Command::design_simon, Command::correlations})
    if (command_name(c) == name) return c;
  return std::nullopt;
}

namespace {

// ---- parsing helpers -------------------------------------------------------

std::string child(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

std::string indexed(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path, msg);
}

// Object view that rejects keys outside `allowed`.
class Obj {
 public:
  Obj(const json& j, std::string path, std::initializer_list<std::string_view> allowed)
      : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail(path_, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
        fail(child(path_, it.key()), "unknown key");
  }
  bool has(std::string_view key) const { return j_.contains(key); }
  const json& at(std::string_view key) const {
    if (!has(key)) fail(child(path_, key), "required key is missing");
    return j_.at(std::string(key));
  }
  std::string path(std::string_view key) const { return child(path_, key); }
  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
};

double real(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "expected a finite number");
  return v;
}

long long integer(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) {
    if (j.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<long long>::max()))
      fail(path, "integer out of range");
    return static_cast<long long>(j.get<std::uint64_t>());
  }
  if (j.is_number_integer()) return j.get<long long>();
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9.007199254740992e15)
      return static_cast<long long>(v);
  }
  fail(path, "expected an integer");
}

int small_int(const json& j, const std::string& path) {
  const long long v = integer(j, path);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    fail(path, "integer out of range");
  return static_cast<int>(v);
}

bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

double open_unit(const json& j, const std::string& path) {
  const double v = real(j, path);
  if (!(v > 0.0 && v < 1.0)) fail(path, "must lie strictly between 0 and 1");
  return v;
}

double positive(const json& j, const std::string& path) {
  const double v = real(j, path);
  if (!(v > 0.0)) fail(path, "must be positive");
  return v;
}

std::vector<double> reals(const json& j, const std::string& path, auto&& each) {
  if (!j.is_array()) fail(path, "expected an array");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(each(j[k], indexed(path, k)));
  return out;
}

// A scalar broadcasts to `count` entries; an array must have exactly `count`.
std::vector<double> per_indication(const json& j, const std::string& path, std::size_t count,
                                   auto&& each) {
  if (j.is_number()) return std::vector<double>(count, each(j, path));
  std::vector<double> v = reals(j, path, each);
  if (v.size() != count)
    fail(path, "expected " + std::to_string(count) + " entries, got " + std::to_string(v.size()));
  return v;
}

// Nested [indication][dose] array; a flat array is accepted when there is a
// single dose.
template <class T, class Each>
ArmMatrix<T> matrix(const json& j, const std::string& path, std::size_t rows, std::size_t cols,
                    Each&& each) {
  if (!j.is_array()) fail(path, "expected an array of rows");
  if (j.size() != rows)
    fail(path, "expected " + std::to_string(rows) + " rows, got " + std::to_string(j.size()));
  ArmMatrix<T> m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string rp = indexed(path, i);
    if (!j[i].is_array()) {
      if (cols != 1) fail(rp, "expected an array of " + std::to_string(cols) + " doses");
      m(i, 0) = each(j[i], rp);
      continue;
    }
    if (j[i].size() != cols)
      fail(rp, "expected " + std::to_string(cols) + " entries, got " + std::to_string(j[i].size()));
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = each(j[i][c], indexed(rp, c));
  }
  return m;
}

template <class T>
json matrix_json(const ArmMatrix<T>& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(static_cast<T>(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

// Inverse of matrix_json with rows and columns taken from the document.
template <class T>
ArmMatrix<T> matrix_from(const json& j) {
  const std::size_t rows = j.size(), cols = rows ? j[0].size() : 0;
  ArmMatrix<T> m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < cols; ++c) {
      if constexpr (std::is_same_v<T, double>)
        m(i, c) = j[i][c].is_null() ? std::numeric_limits<double>::quiet_NaN()
                                    : j[i][c].template get<double>();
      else
        m(i, c) = j[i][c].template get<T>();
    }
  return m;
}

// ---- sections --------------------------------------------------------------

Hyperparameters parse_hyper(const json& j, const std::string& path) {
  if (j.is_string()) {
    const auto h = setting_by_name(j.get<std::string>());
    if (!h) fail(path, "unknown hyperparameter preset '" + j.get<std::string>() + "'");
    return *h;
  }
  const Obj o(j, path,
              {"preset", "gamma", "mu_xi0", "mu_eta0", "sigma0_sq", "sigma_xi_sq", "sigma_eta_sq",
               "sigma_xi0_sq", "sigma_eta0_sq"});
  Hyperparameters h;
  if (o.has("preset")) h = parse_hyper(o.at("preset"), o.path("preset"));
  auto set = [&](const char* key, double& slot, bool variance) {
    if (!o.has(key)) return;
    slot = variance ? positive(o.at(key), o.path(key)) : real(o.at(key), o.path(key));
  };
  set("gamma", h.gamma, true);
  set("mu_xi0", h.mu_xi0, false);
  set("mu_eta0", h.mu_eta0, false);
  set("sigma0_sq", h.sigma0_sq, true);
  set("sigma_xi_sq", h.sigma_xi_sq, true);
  set("sigma_eta_sq", h.sigma_eta_sq, true);
  set("sigma_xi0_sq", h.sigma_xi0_sq, true);
  set("sigma_eta0_sq", h.sigma_eta0_sq, true);
  return h;
}

json hyper_json(const Hyperparameters& h) {
  return {{"gamma", h.gamma},           {"mu_xi0", h.mu_xi0},
          {"mu_eta0", h.mu_eta0},       {"sigma0_sq", h.sigma0_sq},
          {"sigma_xi_sq", h.sigma_xi_sq}, {"sigma_eta_sq", h.sigma_eta_sq},
          {"sigma_xi0_sq", h.sigma_xi0_sq}, {"sigma_eta0_sq", h.sigma_eta0_sq}};
}

McmcConfig parse_mcmc(const json& j, const std::string& path, McmcConfig m) {
  const Obj o(j, path, {"burn_in", "n_keep", "thin", "proposal_scale", "adapt"});
  if (o.has("burn_in")) m.burn_in = small_int(o.at("burn_in"), o.path("burn_in"));
  if (o.has("n_keep")) m.n_keep = small_int(o.at("n_keep"), o.path("n_keep"));
  if (o.has("thin")) m.thin = small_int(o.at("thin"), o.path("thin"));
  if (o.has("proposal_scale"))
    m.proposal_scale = positive(o.at("proposal_scale"), o.path("proposal_scale"));
  if (o.has("adapt")) m.adapt = boolean(o.at("adapt"), o.path("adapt"));
  if (m.burn_in < 0) fail(o.path("burn_in"), "must be nonnegative");
  if (m.n_keep < 1) fail(o.path("n_keep"), "must be at least 1");
  if (m.thin < 1) fail(o.path("thin"), "must be at least 1");
  return m;
}

json mcmc_json(const McmcConfig& m) {
  return {{"burn_in", m.burn_in},
          {"n_keep", m.n_keep},
          {"thin", m.thin},
          {"proposal_scale", m.proposal_scale},
          {"adapt", m.adapt}};
}

TrialLayout parse_layout(const json& j, const std::string& path, std::optional<int> default_max_n) {
  const Obj o(j, path, {"indications", "doses", "pi0", "max_n", "interims"});
  TrialLayout l;
  l.n_indications = small_int(o.at("indications"), o.path("indications"));
  if (l.n_indications < 1) fail(o.path("indications"), "must be at least 1");
  l.n_doses = o.has("doses") ? small_int(o.at("doses"), o.path("doses")) : 1;
  if (l.n_doses < 1) fail(o.path("doses"), "must be at least 1");
  l.pi0 = per_indication(o.at("pi0"), o.path("pi0"), static_cast<std::size_t>(l.n_indications),
                         open_unit);
  if (o.has("max_n"))
    l.max_n = small_int(o.at("max_n"), o.path("max_n"));
  else if (default_max_n)
    l.max_n = *default_max_n;
  else
    fail(o.path("max_n"), "required key is missing");
  if (l.max_n < 1) fail(o.path("max_n"), "must be at least 1");
  if (o.has("interims")) {
    const json& s = o.at("interims");
    const std::string sp = o.path("interims");
    if (!s.is_array()) fail(sp, "expected an array");
    for (std::size_t k = 0; k < s.size(); ++k) {
      const int v = small_int(s[k], indexed(sp, k));
      if (v < 1 || v >= l.max_n) fail(indexed(sp, k), "interim counts must lie in [1, max_n)");
      if (k > 0 && v <= l.interim_schedule.back())
        fail(indexed(sp, k), "interim schedule must be strictly increasing");
      l.interim_schedule.push_back(v);
    }
  }
  return l;
}

json layout_json(const TrialLayout& l) {
  return {{"indications", l.n_indications}, {"doses", l.n_doses}, {"pi0", l.pi0},
          {"max_n", l.max_n},               {"interims", l.interim_schedule}};
}

BbhmHyper parse_bbhm(const json& j, const std::string& path) {
  const Obj o(j, path, {"theta0_mean", "theta0_var", "ig_shape", "ig_rate", "fixed_sigma_sq"});
  BbhmHyper b;
  if (o.has("theta0_mean")) b.theta0_mean = real(o.at("theta0_mean"), o.path("theta0_mean"));
  if (o.has("theta0_var")) b.theta0_var = positive(o.at("theta0_var"), o.path("theta0_var"));
  if (o.has("ig_shape")) b.ig_shape = positive(o.at("ig_shape"), o.path("ig_shape"));
  if (o.has("ig_rate")) b.ig_rate = positive(o.at("ig_rate"), o.path("ig_rate"));
  if (o.has("fixed_sigma_sq") && !o.at("fixed_sigma_sq").is_null())
    b.fixed_sigma_sq = positive(o.at("fixed_sigma_sq"), o.path("fixed_sigma_sq"));
  return b;
}

json bbhm_json(const BbhmHyper& b) {
  json j{{"theta0_mean", b.theta0_mean},
         {"theta0_var", b.theta0_var},
         {"ig_shape", b.ig_shape},
         {"ig_rate", b.ig_rate}};
  if (b.fixed_sigma_sq) j["fixed_sigma_sq"] = *b.fixed_sigma_sq;
  return j;
}

ExnexHyper parse_exnex(const json& j, const std::string& path) {
  const Obj o(j, path,
              {"weights", "ex_mean_prior_mean", "ex_mean_prior_var", "ig_shape", "ig_rate",
               "fixed_ex_var", "nex_offset", "nex_var"});
  ExnexHyper e;
  auto nonneg = [](const json& v, const std::string& p) {
    const double x = real(v, p);
    if (x < 0.0) fail(p, "must be nonnegative");
    return x;
  };
  if (o.has("ex_mean_prior_mean"))
    e.ex_mean_prior_mean = reals(o.at("ex_mean_prior_mean"), o.path("ex_mean_prior_mean"), real);
  if (o.has("ex_mean_prior_var"))
    e.ex_mean_prior_var = reals(o.at("ex_mean_prior_var"), o.path("ex_mean_prior_var"), positive);
  if (o.has("weights")) e.weights = reals(o.at("weights"), o.path("weights"), nonneg);
  if (o.has("ig_shape")) e.ig_shape = positive(o.at("ig_shape"), o.path("ig_shape"));
  if (o.has("ig_rate")) e.ig_rate = positive(o.at("ig_rate"), o.path("ig_rate"));
  if (o.has("fixed_ex_var") && !o.at("fixed_ex_var").is_null())
    e.fixed_ex_var = reals(o.at("fixed_ex_var"), o.path("fixed_ex_var"), positive);
  if (o.has("nex_offset")) e.nex_offset = real(o.at("nex_offset"), o.path("nex_offset"));
  if (o.has("nex_var")) e.nex_var = positive(o.at("nex_var"), o.path("nex_var"));
  try {
    e.validate();
  } catch (const std::invalid_argument& err) {
    fail(path, err.what());
  }
  return e;
}

json exnex_json(const ExnexHyper& e) {
  json j{{"weights", e.weights},
         {"ex_mean_prior_mean", e.ex_mean_prior_mean},
         {"ex_mean_prior_var", e.ex_mean_prior_var},
         {"ig_shape", e.ig_shape},
         {"ig_rate", e.ig_rate},
         {"nex_offset", e.nex_offset},
         {"nex_var", e.nex_var}};
  if (e.fixed_ex_var) j["fixed_ex_var"] = *e.fixed_ex_var;
  return j;
}

SimonDesign parse_simon_design(const json& j, const std::string& path) {
  const Obj o(j, path, {"r1", "n1", "r", "N"});
  SimonDesign d{small_int(o.at("r1"), o.path("r1")), small_int(o.at("n1"), o.path("n1")),
                small_int(o.at("r"), o.path("r")), small_int(o.at("N"), o.path("N"))};
  try {
    d.validate();
  } catch (const std::invalid_argument& err) {
    fail(path, err.what());
  }
  if (d.n1 >= d.N) fail(o.path("n1"), "must be below N");
  return d;
}

json simon_design_json(const SimonDesign& d) {
  return {{"r1", d.r1}, {"n1", d.n1}, {"r", d.r}, {"N", d.N}};
}

DesignSpec parse_design(const json& j, const std::string& path) {
  const Obj o(j, path,
              {"method", "layout", "phi1", "phi2", "hyper", "bbhm", "exnex", "mcmc", "simon", "pi1"});
  DesignSpec d;
  if (o.has("method")) {
    const std::string name = text(o.at("method"), o.path("method"));
    const auto m = method_by_name(name);
    if (!m) fail(o.path("method"), "unknown method '" + name + "' (muce, bbhm, exnex, simon)");
    d.method = *m;
  }
  if (o.has("simon")) d.simon = parse_simon_design(o.at("simon"), o.path("simon"));
  if (d.method == Method::simon && !d.simon)
    fail(o.path("simon"), "required when method is simon");
  d.layout = parse_layout(o.at("layout"), o.path("layout"),
                          d.simon ? std::optional<int>(d.simon->N) : std::nullopt);
  if (o.has("phi1")) d.phi1 = real(o.at("phi1"), o.path("phi1"));
  if (o.has("phi2")) d.phi2 = real(o.at("phi2"), o.path("phi2"));
  if (d.phi1 < 0.0 || d.phi1 > 1.0) fail(o.path("phi1"), "must lie in [0, 1]");
  if (d.phi2 < 0.0 || d.phi2 > 1.0) fail(o.path("phi2"), "must lie in [0, 1]");
  if (d.method != Method::simon && !(d.phi1 < d.phi2))
    fail(o.path("phi1"), "must be below phi2");
  if (o.has("hyper")) d.hyper = parse_hyper(o.at("hyper"), o.path("hyper"));
  if (o.has("bbhm")) d.bbhm = parse_bbhm(o.at("bbhm"), o.path("bbhm"));
  if (o.has("exnex")) d.exnex = parse_exnex(o.at("exnex"), o.path("exnex"));
  if (o.has("mcmc")) d.mcmc = parse_mcmc(o.at("mcmc"), o.path("mcmc"), d.mcmc);
  if (o.has("pi1"))
    d.pi1 = per_indication(o.at("pi1"), o.path("pi1"),
                           static_cast<std::size_t>(d.layout.n_indications), open_unit);
  if ((d.method == Method::bbhm || d.method == Method::exnex) && d.pi1.empty())
    fail(o.path("pi1"), "required for the bbhm and exnex methods");
  for (std::size_t i = 0; i < d.pi1.size(); ++i)
    if (!(d.pi1[i] > d.layout.pi0[i])) fail(indexed(o.path("pi1"), i), "must exceed pi0");
  try {
    d.validate();
  } catch (const std::invalid_argument& err) {
    fail(path, err.what());
  }
  return d;
}

json design_json(const DesignSpec& d) {
  json j{{"method", method_name(d.method)},
         {"layout", layout_json(d.layout)},
         {"phi1", d.phi1},
         {"phi2", d.phi2},
         {"hyper", hyper_json(d.hyper)},
         {"bbhm", bbhm_json(d.bbhm)},
         {"exnex", exnex_json(d.exnex)},
         {"mcmc", mcmc_json(d.mcmc)}};
  if (d.simon) j["simon"] = simon_design_json(*d.simon);
  if (!d.pi1.empty()) j["pi1"] = d.pi1;
  return j;
}

Scenario parse_scenario(const json& j, const std::string& path, const TrialLayout& layout) {
  Scenario s;
  if (j.is_string()) {
    const auto found = scenario_by_name(j.get<std::string>());
    if (!found) fail(path, "unknown scenario '" + j.get<std::string>() + "'");
    s = *found;
  } else {
    const Obj o(j, path, {"label", "true_p"});
    s.label = text(o.at("label"), o.path("label"));
    s.true_p = matrix<double>(o.at("true_p"), o.path("true_p"),
                              static_cast<std::size_t>(layout.n_indications),
                              static_cast<std::size_t>(layout.n_doses), open_unit);
  }
  if (s.true_p.rows() != static_cast<std::size_t>(layout.n_indications) ||
      s.true_p.cols() != static_cast<std::size_t>(layout.n_doses))
    fail(path, "scenario is " + std::to_string(s.true_p.rows()) + "x" +
                   std::to_string(s.true_p.cols()) + " but the layout is " +
                   std::to_string(layout.n_indications) + "x" + std::to_string(layout.n_doses));
  return s;
}

json scenario_json(const Scenario& s) {
  return {{"label", s.label}, {"true_p", matrix_json(s.true_p)}};
}

std::string_view estimator_name(PointEstimate e) {
  switch (e) {
    case PointEstimate::mean:
      return "mean";
    case PointEstimate::median:
      return "median";
    case PointEstimate::logit_mean:
      break;
  }
  return "logit_mean";
}

std::optional<PointEstimate> estimator_by_name(std::string_view name) {
  for (PointEstimate e : {PointEstimate::mean, PointEstimate::median, PointEstimate::logit_mean})
    if (estimator_name(e) == name) return e;
  return std::nullopt;
}

AnalyzeRequest parse_analyze(const json& j, const std::string& path, const TrialLayout& layout) {
  const Obj o(j, path, {"data", "final", "estimator"});
  AnalyzeRequest a;
  const Obj d(o.at("data"), o.path("data"), {"n", "y", "active"});
  const std::size_t I = static_cast<std::size_t>(layout.n_indications);
  const std::size_t J = static_cast<std::size_t>(layout.n_doses);
  auto count = [](const json& v, const std::string& p) {
    const int x = small_int(v, p);
    if (x < 0) fail(p, "must be nonnegative");
    return x;
  };
  a.data.n = matrix<int>(d.at("n"), d.path("n"), I, J, count);
  a.data.y = matrix<int>(d.at("y"), d.path("y"), I, J, count);
  a.data.active = d.has("active") ? matrix<bool>(d.at("active"), d.path("active"), I, J, boolean)
                                  : ArmMatrix<bool>(I, J, true);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t c = 0; c < J; ++c)
      if (a.data.y(i, c) > a.data.n(i, c))
        fail(indexed(indexed(d.path("y"), i), c),
             "responders (" + std::to_string(a.data.y(i, c)) + ") exceed enrolled (" +
                 std::to_string(a.data.n(i, c)) + ")");
  if (o.has("final")) a.final_analysis = boolean(o.at("final"), o.path("final"));
  if (o.has("estimator")) {
    const std::string name = text(o.at("estimator"), o.path("estimator"));
    const auto e = estimator_by_name(name);
    if (!e) fail(o.path("estimator"), "unknown estimator '" + name + "' (mean, median, logit_mean)");
    a.estimator = *e;
  }
  return a;
}

json analyze_json(const AnalyzeRequest& a) {
  return {{"data",
           {{"n", matrix_json(a.data.n)},
            {"y", matrix_json(a.data.y)},
            {"active", matrix_json(a.data.active)}}},
          {"final", a.final_analysis},
          {"estimator", estimator_name(a.estimator)}};
}

std::string_view criterion_name(SimonCriterion c) {
  return c == SimonCriterion::optimal ? "optimal" : "minimax";
}

SimonRequest parse_simon_request(const json& j, const std::string& path) {
  const Obj o(j, path, {"p0", "p1", "alpha", "beta", "criterion", "n_max", "arms"});
  SimonRequest s;
  s.p0 = open_unit(o.at("p0"), o.path("p0"));
  s.p1 = open_unit(o.at("p1"), o.path("p1"));
  if (!(s.p0 < s.p1)) fail(o.path("p1"), "must exceed p0");
  s.alpha = open_unit(o.at("alpha"), o.path("alpha"));
  s.beta = open_unit(o.at("beta"), o.path("beta"));
  if (o.has("criterion")) {
    const std::string c = text(o.at("criterion"), o.path("criterion"));
    if (c == "optimal")
      s.criteria = {SimonCriterion::optimal};
    else if (c == "minimax")
      s.criteria = {SimonCriterion::minimax};
    else if (c != "both")
      fail(o.path("criterion"), "expected optimal, minimax or both");
  }
  if (o.has("n_max")) s.n_max = small_int(o.at("n_max"), o.path("n_max"));
  if (s.n_max < 2) fail(o.path("n_max"), "must be at least 2");
  if (o.has("arms")) s.arms = small_int(o.at("arms"), o.path("arms"));
  if (s.arms < 1) fail(o.path("arms"), "must be at least 1");
  return s;
}

json simon_request_json(const SimonRequest& s) {
  const std::string criterion =
      s.criteria.size() == 2 ? "both" : std::string(criterion_name(s.criteria.front()));
  return {{"p0", s.p0},       {"p1", s.p1},       {"alpha", s.alpha}, {"beta", s.beta},
          {"criterion", criterion}, {"n_max", s.n_max}, {"arms", s.arms}};
}

}  // namespace

void RunConfig::require_for(Command command) const {
  const bool stochastic = command == Command::analyze || command == Command::simulate ||
                          command == Command::calibrate;
  if (stochastic && !seed) fail("seed", "required for " + std::string(command_name(command)));
  if (stochastic && !design) fail("design", "section required for this command");
  if (reps < 1) fail("reps", "must be at least 1");
  if (jobs < 1) fail("jobs", "must be at least 1");
  switch (command) {
    case Command::analyze:
      if (!analyze) fail("analyze", "section required for this command");
      if (design->method != Method::muce) fail("design.method", "analyze supports method muce");
      break;
    case Command::simulate:
      if (!simulate || simulate->scenarios.empty())
        fail("simulate.scenarios", "at least one scenario is required");
      break;
    case Command::calibrate:
      if (!calibrate) fail("calibrate", "section required for this command");
      if (calibrate->parameter == CalibrationTarget::phi1) {
        if (design->method == Method::simon)
          fail("design.method", "phi1 calibration applies to Bayesian designs");
        if (design->layout.interim_schedule.empty())
          fail("design.layout.interims", "phi1 calibration needs at least one interim look");
      }
      if (calibrate->parameter == CalibrationTarget::phi2 && design->method == Method::simon)
        fail("design.method", "phi2 calibration applies to Bayesian designs");
      break;
    case Command::design_simon:
      if (!design_simon) fail("design_simon", "section required for this command");
      break;
    case Command::correlations:
      if (!correlations) fail("correlations", "section required for this command");
      break;
  }
}

RunConfig config_from_json(const json& doc) {
  const Obj o(doc, "",
              {"seed", "reps", "jobs", "format", "out", "design", "analyze", "simulate", "calibrate",
               "design_simon", "correlations"});
  RunConfig c;
  if (o.has("seed")) {
    const json& s = o.at("seed");
    if (s.is_number_unsigned())
      c.seed = s.get<std::uint64_t>();
    else if (s.is_number_integer() && s.get<long long>() >= 0)
      c.seed = static_cast<std::uint64_t>(s.get<long long>());
    else
      fail("seed", "expected a nonnegative integer");
  }
  if (o.has("reps")) c.reps = static_cast<long>(integer(o.at("reps"), "reps"));
  if (c.reps < 1) fail("reps", "must be at least 1");
  if (o.has("jobs")) c.jobs = small_int(o.at("jobs"), "jobs");
  if (c.jobs < 1) fail("jobs", "must be at least 1");
  if (o.has("format")) {
    const std::string f = text(o.at("format"), "format");
    if (f == "table")
      c.format = OutputFormat::table;
    else if (f == "records")
      c.format = OutputFormat::records;
    else
      fail("format", "expected table or records");
  }
  if (o.has("out")) c.out = text(o.at("out"), "out");
  if (o.has("design")) c.design = parse_design(o.at("design"), "design");
  auto layout = [&](const char* section) -> const TrialLayout& {
    if (!c.design) fail(section, "requires a design section");
    return c.design->layout;
  };
  if (o.has("analyze")) c.analyze = parse_analyze(o.at("analyze"), "analyze", layout("analyze"));
  if (o.has("simulate")) {
    const Obj s(o.at("simulate"), "simulate", {"scenarios"});
    const json& list = s.at("scenarios");
    if (!list.is_array()) fail(s.path("scenarios"), "expected an array");
    SimulateRequest r;
    for (std::size_t k = 0; k < list.size(); ++k)
      r.scenarios.push_back(
          parse_scenario(list[k], indexed(s.path("scenarios"), k), layout("simulate")));
    c.simulate = std::move(r);
  }
  if (o.has("calibrate")) {
    const Obj s(o.at("calibrate"), "calibrate", {"parameter", "target", "scenario"});
    CalibrateRequest r;
    if (s.has("parameter")) {
      const std::string p = text(s.at("parameter"), s.path("parameter"));
      if (p == "phi1")
        r.parameter = CalibrationTarget::phi1;
      else if (p != "phi2")
        fail(s.path("parameter"), "expected phi1 or phi2");
    }
    r.target = real(s.at("target"), s.path("target"));
    if (r.parameter == CalibrationTarget::phi2 && !(r.target >= 0.0 && r.target <= 1.0))
      fail(s.path("target"), "target FWER must lie in [0, 1]");
    if (r.parameter == CalibrationTarget::phi1 && !(r.target > 0.0))
      fail(s.path("target"), "target average sample size must be positive");
    r.scenario = parse_scenario(s.at("scenario"), s.path("scenario"), layout("calibrate"));
    c.calibrate = std::move(r);
  }
  if (o.has("design_simon")) c.design_simon = parse_simon_request(o.at("design_simon"), "design_simon");
  if (o.has("correlations")) {
    const Obj s(o.at("correlations"), "correlations", {"hyper"});
    c.correlations = CorrelationRequest{parse_hyper(s.at("hyper"), s.path("hyper"))};
  }
  return c;
}

RunConfig parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // The library message carries the line and column.
    throw ConfigError("", e.what());
  }
  return config_from_json(doc);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

json config_to_json(const RunConfig& c) {
  json j{{"reps", c.reps},
         {"jobs", c.jobs},
         {"format", c.format == OutputFormat::table ? "table" : "records"},
         {"out", c.out}};
  if (c.seed) j["seed"] = *c.seed;
  if (c.design) j["design"] = design_json(*c.design);
  if (c.analyze) j["analyze"] = analyze_json(*c.analyze);
  if (c.simulate) {
    json list = json::array();
    for (const Scenario& s : c.simulate->scenarios) list.push_back(scenario_json(s));
    j["simulate"] = {{"scenarios", list}};
  }
  if (c.calibrate)
    j["calibrate"] = {{"parameter", c.calibrate->parameter == CalibrationTarget::phi1 ? "phi1" : "phi2"},
                      {"target", c.calibrate->target},
                      {"scenario", scenario_json(c.calibrate->scenario)}};
  if (c.design_simon) j["design_simon"] = simon_request_json(*c.design_simon);
  if (c.correlations) j["correlations"] = {{"hyper", hyper_json(c.correlations->hyper)}};
  return j;
}

// ---- report records ---------------------------------------------------------

void to_json(json& j, const PosteriorReport& r) {
  j = {{"pr_h1", matrix_json(r.pr_h1)},
       {"est_p", matrix_json(r.est_p)},
       {"ess", matrix_json(r.ess)},
       {"acceptance", matrix_json(r.acceptance)},
       {"mcmc", mcmc_json(r.config)},
       {"estimator", estimator_name(r.estimator)}};
  j["mcmc"]["seed"] = r.config.seed;
}

void from_json(const json& j, PosteriorReport& r) {
  r.pr_h1 = matrix_from<double>(j.at("pr_h1"));
  r.est_p = matrix_from<double>(j.at("est_p"));
  r.ess = matrix_from<double>(j.at("ess"));
  r.acceptance = matrix_from<double>(j.at("acceptance"));
  const json& m = j.at("mcmc");
  r.config = McmcConfig{m.at("burn_in").get<int>(),      m.at("n_keep").get<int>(),
                        m.at("thin").get<int>(),         m.at("seed").get<std::uint64_t>(),
                        m.at("proposal_scale").get<double>(), m.at("adapt").get<bool>()};
  const auto e = estimator_by_name(j.at("estimator").get<std::string>());
  if (!e) throw std::invalid_argument("unknown estimator in report record");
  r.estimator = *e;
}

void to_json(json& j, const OCReport& r) {
  j = {{"scenario", r.scenario},
       {"n_indications", r.n_indications},
       {"n_doses", r.n_doses},
       {"true_p", r.true_p},
       {"truly_null", r.truly_null},
       {"rejection_rate", r.rejection_rate},
       {"avg_n", r.avg_n},
       {"early_stop_rate", r.early_stop_rate},
       {"fwer", r.fwer},
       {"avg_total_n", r.avg_total_n},
       {"n_reps", r.n_reps},
       {"seed", r.seed}};
}

void from_json(const json& j, OCReport& r) {
  j.at("scenario").get_to(r.scenario);
  j.at("n_indications").get_to(r.n_indications);
  j.at("n_doses").get_to(r.n_doses);
  j.at("true_p").get_to(r.true_p);
  j.at("truly_null").get_to(r.truly_null);
  j.at("rejection_rate").get_to(r.rejection_rate);
  j.at("avg_n").get_to(r.avg_n);
  j.at("early_stop_rate").get_to(r.early_stop_rate);
  j.at("fwer").get_to(r.fwer);
  j.at("avg_total_n").get_to(r.avg_total_n);
  j.at("n_reps").get_to(r.n_reps);
  j.at("seed").get_to(r.seed);
}

void to_json(json& j, const Calibration& c) {
  j = {{"threshold", c.threshold}, {"achieved", c.achieved}, {"n_reps", c.n_reps}, {"seed", c.seed}};
}

void from_json(const json& j, Calibration& c) {
  j.at("threshold").get_to(c.threshold);
  j.at("achieved").get_to(c.achieved);
  j.at("n_reps").get_to(c.n_reps);
  j.at("seed").get_to(c.seed);
}

void to_json(json& j, const SimonResult& r) {
  auto rates = [](const StageErrorRates& e) {
    return json{{"reject_prob", e.reject_prob}, {"pet", e.pet}, {"expected_n", e.expected_n}};
  };
  j = {{"criterion", criterion_name(r.criterion)},
       {"design", simon_design_json(r.design)},
       {"null", rates(r.null_rates)},
       {"alternative", rates(r.alt_rates)},
       {"arms", r.arms},
       {"fwer", r.fwer}};
}

void from_json(const json& j, SimonResult& r) {
  r.criterion = j.at("criterion").get<std::string>() == "optimal" ? SimonCriterion::optimal
                                                                   : SimonCriterion::minimax;
  const json& d = j.at("design");
  r.design = {d.at("r1").get<int>(), d.at("n1").get<int>(), d.at("r").get<int>(),
              d.at("N").get<int>()};
  auto rates = [](const json& e) {
    return StageErrorRates{e.at("reject_prob").get<double>(), e.at("pet").get<double>(),
                           e.at("expected_n").get<double>()};
  };
  r.null_rates = rates(j.at("null"));
  r.alt_rates = rates(j.at("alternative"));
  j.at("arms").get_to(r.arms);
  j.at("fwer").get_to(r.fwer);
}

// ---- tables -------------------------------------------------------------------

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 6);
  return std::string(buf, res.ptr);
}

std::string render_csv(const Table& t, const std::vector<std::string>& comments) {
  auto field = [](const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + "\"";
  };
  std::string out;
  for (const std::string& c : comments) out += "# " + c + "\n";
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) out += ',';
      out += field(cells[k]);
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

std::string arm_decision(bool active, double pr, const DesignSpec& d, bool final_analysis) {
  if (!active) return "stopped";
  if (final_analysis) return pr > d.phi2 ? "promising" : "not_promising";
  return pr < d.phi1 ? "stop" : "continue";
}

Table posterior_table(const PosteriorReport& r, const TrialDataset& data, const DesignSpec& d,
                      bool final_analysis) {
  Table t{{"indication", "dose", "n", "y", "raw_rate", "est_p", "pr_h1", "decision"}, {}};
  for (std::size_t i = 0; i < data.n.rows(); ++i)
    for (std::size_t j = 0; j < data.n.cols(); ++j) {
      const int n = data.n(i, j), y = data.y(i, j);
      t.rows.push_back({std::to_string(i + 1), std::to_string(j + 1), std::to_string(n),
                        std::to_string(y), n > 0 ? format_number(static_cast<double>(y) / n) : "",
                        format_number(r.est_p(i, j)), format_number(r.pr_h1(i, j)),
                        arm_decision(data.active(i, j), r.pr_h1(i, j), d, final_analysis)});
    }
  return t;
}

namespace {

double total_early_stop(const OCReport& r, std::size_t k) {
  double s = 0.0;
  for (const auto& row : r.early_stop_rate) s += row[k];
  return s;
}

}  // namespace

Table oc_table(const std::vector<OCReport>& reports) {
  Table t{{"scenario", "row", "indication", "dose", "true_p", "truly_null", "rejection_rate",
           "avg_n", "early_stop_rate", "fwer", "avg_total_n"},
          {}};
  for (const OCReport& r : reports) {
    for (std::size_t i = 0; i < r.n_indications; ++i)
      for (std::size_t j = 0; j < r.n_doses; ++j) {
        const std::size_t k = i * r.n_doses + j;
        t.rows.push_back({r.scenario, "arm", std::to_string(i + 1), std::to_string(j + 1),
                          format_number(r.true_p[k]), r.truly_null[k] ? "true" : "false",
                          format_number(r.rejection_rate[k]), format_number(r.avg_n[k]),
                          format_number(total_early_stop(r, k)), "", ""});
      }
    t.rows.push_back({r.scenario, "summary", "", "", "", "", "", "", "", format_number(r.fwer),
                      format_number(r.avg_total_n)});
  }
  return t;
}

Table plot_data(const DesignSpec& d, const std::vector<OCReport>& reports) {
  Table t{{"design", "scenario", "arm", "metric", "value"}, {}};
  const std::string design(method_name(d.method));
  for (const OCReport& r : reports) {
    for (std::size_t i = 0; i < r.n_indications; ++i)
      for (std::size_t j = 0; j < r.n_doses; ++j) {
        const std::size_t k = i * r.n_doses + j;
        const std::string arm = "i" + std::to_string(i + 1) + "-d" + std::to_string(j + 1);
        t.rows.push_back({design, r.scenario, arm, "rejection_rate", format_number(r.rejection_rate[k])});
        t.rows.push_back({design, r.scenario, arm, "avg_n", format_number(r.avg_n[k])});
        t.rows.push_back(
            {design, r.scenario, arm, "early_stop_rate", format_number(total_early_stop(r, k))});
      }
    t.rows.push_back({design, r.scenario, "all", "fwer", format_number(r.fwer)});
    t.rows.push_back({design, r.scenario, "all", "avg_total_n", format_number(r.avg_total_n)});
  }
  return t;
}

Table calibration_table(CalibrationTarget p, const Calibration& c) {
  return {{"parameter", "threshold", "achieved", "n_reps", "seed"},
          {{p == CalibrationTarget::phi1 ? "phi1" : "phi2", format_number(c.threshold),
            format_number(c.achieved), std::to_string(c.n_reps), std::to_string(c.seed)}}};
}

Table simon_table(const std::vector<SimonResult>& results) {
  Table t{{"criterion", "r1", "n1", "r", "N", "alpha", "power", "pet_null", "en_null", "en_alt",
           "arms", "fwer"},
          {}};
  for (const SimonResult& r : results)
    t.rows.push_back({std::string(criterion_name(r.criterion)), std::to_string(r.design.r1),
                      std::to_string(r.design.n1), std::to_string(r.design.r),
                      std::to_string(r.design.N), format_number(r.null_rates.reject_prob),
                      format_number(r.alt_rates.reject_prob), format_number(r.null_rates.pet),
                      format_number(r.null_rates.expected_n), format_number(r.alt_rates.expected_n),
                      std::to_string(r.arms), format_number(r.fwer)});
  return t;
}

Table correlation_table(const Hyperparameters& h) {
  return {{"case", "correlation"},
          {{"same_indication", format_number(prior_correlation(h, CorrelationCase::same_indication))},
           {"same_dose", format_number(prior_correlation(h, CorrelationCase::same_dose))},
           {"neither", format_number(prior_correlation(h, CorrelationCase::neither))}}};
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("write to '" + tmp.string() + "' failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace muce
