#include "muce/model.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <limits>
#include <numbers>

namespace muce {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

void Hyperparameters::validate() const {
  require(gamma > 0.0, "gamma must be positive");
  require(sigma0_sq > 0.0 && sigma_xi_sq > 0.0 && sigma_eta_sq > 0.0 &&
              sigma_xi0_sq > 0.0 && sigma_eta0_sq > 0.0,
          "all variance hyperparameters must be positive");
  require(std::isfinite(mu_xi0) && std::isfinite(mu_eta0),
          "hyperprior means must be finite");
}

Hyperparameters setting(int number) {
  Hyperparameters h;  // setting 1
  switch (number) {
    case 1:
      break;
    case 2:
      h.sigma_xi0_sq = h.sigma_eta0_sq = 9.0;
      break;
    case 3:
      h.mu_xi0 = h.mu_eta0 = -3.0;
      break;
    case 4:
      h.sigma_xi0_sq = h.sigma_eta0_sq = 0.01;
      break;
    case 5:
      h.mu_xi0 = -3.0;
      break;
    default:
      throw std::invalid_argument("hyperparameter setting must be 1..5");
  }
  return h;
}

std::optional<Hyperparameters> setting_by_name(std::string_view name) {
  constexpr std::string_view prefix = "setting";
  if (name.size() != prefix.size() + 1 || name.substr(0, prefix.size()) != prefix)
    return std::nullopt;
  const char d = name.back();
  if (d < '1' || d > '5') return std::nullopt;
  return setting(d - '0');
}

void TrialLayout::validate() const {
  require(n_indications >= 1, "layout needs at least one indication");
  require(n_doses >= 1, "layout needs at least one dose");
  require(pi0.size() == static_cast<std::size_t>(n_indications),
          "pi0 needs one entry per indication");
  for (double p : pi0) require(p > 0.0 && p < 1.0, "pi0 entries must lie in (0,1)");
  require(max_n >= 1, "max_n must be at least 1");
  for (std::size_t l = 0; l < interim_schedule.size(); ++l) {
    require(interim_schedule[l] >= 1, "interim counts must be positive");
    require(interim_schedule[l] < max_n, "interim counts must be below max_n");
    if (l > 0)
      require(interim_schedule[l] > interim_schedule[l - 1],
              "interim schedule must be strictly increasing");
  }
}

void TrialDataset::validate() const {
  require(n.rows() == y.rows() && n.cols() == y.cols() &&
              n.rows() == active.rows() && n.cols() == active.cols(),
          "dataset matrices must share dimensions");
  for (std::size_t k = 0; k < n.size(); ++k) {
    require(n[k] >= 0, "n must be nonnegative");
    if (y[k] < 0 || y[k] > n[k])
      throw std::domain_error("responders must satisfy 0 <= y <= n");
  }
}

void TrialDataset::validate_against(const TrialLayout& layout) const {
  validate();
  require(n.rows() == static_cast<std::size_t>(layout.n_indications) &&
              n.cols() == static_cast<std::size_t>(layout.n_doses),
          "dataset dimensions do not match layout");
}

void McmcConfig::validate() const {
  require(burn_in >= 0, "burn_in must be nonnegative");
  require(n_keep >= 1, "n_keep must be positive");
  require(thin >= 1, "thin must be at least 1");
  require(proposal_scale > 0.0, "proposal_scale must be positive");
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("logit needs p in (0,1)");
  return std::log(p / (1.0 - p));
}

double inv_logit(double theta) {
  if (theta >= 0.0) return 1.0 / (1.0 + std::exp(-theta));
  const double e = std::exp(theta);
  return e / (1.0 + e);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double log_normal_cdf(double x) {
  if (x > -30.0) return std::log(normal_cdf(x));
  // Asymptotic Mills-ratio expansion.
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) +
         std::log(series);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("quantile needs p in (0,1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double trunc_cauchy_logpdf(double theta, double loc, double scale, Side side) {
  const bool inside = side == Side::null ? theta <= loc : theta > loc;
  if (!inside) return -std::numeric_limits<double>::infinity();
  const double u = (theta - loc) / scale;
  return std::log(2.0 / (std::numbers::pi * scale)) - std::log1p(u * u);
}

double prior_mixture_weight(double xi, double eta, double sigma0_sq) {
  return normal_cdf((xi + eta) / std::sqrt(sigma0_sq));
}

double marginal_prior_h1(const Hyperparameters& h) {
  const double var =
      h.sigma0_sq + h.sigma_xi_sq + h.sigma_eta_sq + h.sigma_xi0_sq + h.sigma_eta0_sq;
  return normal_cdf((h.mu_xi0 + h.mu_eta0) / std::sqrt(var));
}

double prior_correlation(const Hyperparameters& h, CorrelationCase c) {
  const double shared = h.sigma_xi0_sq + h.sigma_eta0_sq;
  const double total = h.sigma0_sq + h.sigma_xi_sq + h.sigma_xi0_sq +
                       h.sigma_eta_sq + h.sigma_eta0_sq;
  switch (c) {
    case CorrelationCase::same_indication:
      return (h.sigma_xi_sq + shared) / total;
    case CorrelationCase::same_dose:
      return (h.sigma_eta_sq + shared) / total;
    case CorrelationCase::neither:
      break;
  }
  return shared / total;
}

double binomial_loglik(int y, int n, double theta) {
  if (y < 0 || n < 0 || y > n)
    throw std::domain_error("binomial_loglik needs 0 <= y <= n");
  if (n == 0) return 0.0;
  return y * theta - n * softplus(theta);
}

}  // namespace muce
