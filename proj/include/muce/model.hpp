#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace muce {

// Row-major I x J container indexed by (indication, dose).
template <class T>
class ArmMatrix {
 public:
  ArmMatrix() = default;
  ArmMatrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  typename std::vector<T>::reference operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  typename std::vector<T>::const_reference operator()(std::size_t i,
                                                      std::size_t j) const {
    return data_[i * cols_ + j];
  }
  typename std::vector<T>::reference operator[](std::size_t k) { return data_[k]; }
  typename std::vector<T>::const_reference operator[](std::size_t k) const {
    return data_[k];
  }

  const std::vector<T>& values() const { return data_; }

  bool operator==(const ArmMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Fixed prior constants of the latent-probit hierarchy.
///
/// `gamma` is the Cauchy scale of the response-rate prior on the logit
/// scale. The latent score of arm (i, j) is N(xi_i + eta_j, sigma0_sq) with
/// xi_i ~ N(xi0, sigma_xi_sq), eta_j ~ N(eta0, sigma_eta_sq),
/// xi0 ~ N(mu_xi0, sigma_xi0_sq) and eta0 ~ N(mu_eta0, sigma_eta0_sq).
struct Hyperparameters {
  double gamma = 2.5;
  double mu_xi0 = 0.0;
  double mu_eta0 = 0.0;
  double sigma0_sq = 1.0;
  double sigma_xi_sq = 1.0;
  double sigma_eta_sq = 1.0;
  double sigma_xi0_sq = 1.0;
  double sigma_eta0_sq = 1.0;

  void validate() const;
  bool operator==(const Hyperparameters&) const = default;
};

/// Named presets "setting1" .. "setting5" (number 1..5).
Hyperparameters setting(int number);
std::optional<Hyperparameters> setting_by_name(std::string_view name);

/// Half-line of the logit response rate relative to the reference logit.
/// `null` is (-inf, loc] and corresponds to lambda = 0; `alt` is (loc, inf).
enum class Side { null, alt };

inline Side side_of(double theta, double theta0) {
  return theta > theta0 ? Side::alt : Side::null;
}

struct TrialLayout {
  int n_indications = 1;
  int n_doses = 1;
  std::vector<double> pi0;  // one per indication
  int max_n = 1;
  std::vector<int> interim_schedule;

  int arms() const { return n_indications * n_doses; }
  void validate() const;
  bool operator==(const TrialLayout&) const = default;
};

struct TrialDataset {
  ArmMatrix<int> n;
  ArmMatrix<int> y;
  ArmMatrix<bool> active;

  TrialDataset() = default;
  TrialDataset(std::size_t indications, std::size_t doses)
      : n(indications, doses, 0), y(indications, doses, 0),
        active(indications, doses, true) {}

  void validate() const;
  void validate_against(const TrialLayout& layout) const;
  bool operator==(const TrialDataset&) const = default;
};

struct McmcConfig {
  int burn_in = 2000;
  int n_keep = 8000;
  int thin = 1;
  std::uint64_t seed = 1;
  double proposal_scale = 1.0;
  bool adapt = true;

  void validate() const;
  bool operator==(const McmcConfig&) const = default;
};

double logit(double p);
double inv_logit(double theta);

/// Standard normal CDF and its logarithm (tail-stable for large |x|).
double normal_cdf(double x);
double log_normal_cdf(double x);
double normal_quantile(double p);

/// Log density of Cauchy(loc, scale) restricted to the half-line `side`.
/// Each half-line holds half of the Cauchy mass, so the restricted density
/// is twice the untruncated one. Returns -inf outside the support.
double trunc_cauchy_logpdf(double theta, double loc, double scale, Side side);

/// Prior Pr(lambda = 1 | xi, eta) = Phi((xi + eta) / sigma0).
double prior_mixture_weight(double xi, double eta, double sigma0_sq);

/// Marginal prior Pr(Z >= 0) with all random effects integrated out.
double marginal_prior_h1(const Hyperparameters& hyper);

enum class CorrelationCase { same_indication, same_dose, neither };

/// Closed-form prior Corr(Z_ij, Z_i'j').
double prior_correlation(const Hyperparameters& hyper, CorrelationCase c);

/// y * theta - n * log(1 + e^theta). The binomial coefficient is omitted
/// since it does not depend on theta.
double binomial_loglik(int y, int n, double theta);

}  // namespace muce
