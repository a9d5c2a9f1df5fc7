#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "muce/model.hpp"

namespace muce {

/// Simon two-stage tuple: stop after n1 patients if at most r1 respond;
/// otherwise continue to N and reject H0 iff more than r respond in total.
struct SimonDesign {
  int r1 = 0;
  int n1 = 1;
  int r = 0;
  int N = 1;

  void validate() const;
  bool operator==(const SimonDesign&) const = default;
};

struct StageErrorRates {
  double reject_prob = 0.0;
  double pet = 0.0;  // probability of early termination
  double expected_n = 0.0;
};

StageErrorRates two_stage_error_rates(const SimonDesign& design, double p);

enum class SimonCriterion { optimal, minimax };

class InfeasibleDesign : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exhaustive search over N <= n_max. Ties are broken by smaller N, then
/// n1, then r1, then r.
SimonDesign simon_search(double p0, double p1, double alpha, double beta,
                         SimonCriterion criterion, int n_max = 100);

/// 1 - (1 - alpha)^K.
double fwer_independent(double alpha, int K);

/// Per-arm binomial data for the basket comparators. Response rates enter
/// through theta_k = logit(p_k) - logit(pi1_k).
struct BasketData {
  std::vector<int> n;
  std::vector<int> y;
  std::vector<double> pi0;
  std::vector<double> pi1;

  std::size_t arms() const { return n.size(); }
  void validate() const;
};

struct BbhmHyper {
  double theta0_mean = 0.0;
  double theta0_var = 100.0;
  double ig_shape = 1.0;
  double ig_rate = 1.0;
  std::optional<double> fixed_sigma_sq;  // skip the inverse-gamma update

  void validate() const;
  bool operator==(const BbhmHyper&) const = default;
};

/// EXNEX with C exchangeable components and one arm-specific NEX component.
/// weights holds (w_1, ..., w_C, w_NEX). Component c has mean
/// mu_c ~ N(ex_mean_prior_mean[c], ex_mean_prior_var[c]) and variance
/// tau_c^2 ~ IG(ig_shape, ig_rate) unless fixed_ex_var is set. The NEX
/// component of arm k is N(logit(pi0_k) - logit(pi1_k) + nex_offset, nex_var).
struct ExnexHyper {
  std::vector<double> weights{0.5, 0.5};
  std::vector<double> ex_mean_prior_mean{0.0};
  std::vector<double> ex_mean_prior_var{100.0};
  double ig_shape = 1.0;
  double ig_rate = 1.0;
  std::optional<std::vector<double>> fixed_ex_var;
  double nex_offset = 0.0;
  double nex_var = 100.0;

  std::size_t components() const { return ex_mean_prior_mean.size(); }
  void validate() const;
  bool operator==(const ExnexHyper&) const = default;
};

struct BasketReport {
  std::vector<double> pr_final;    // Pr(p_k > pi0_k | data)
  std::vector<double> pr_interim;  // Pr(p_k > (pi0_k + pi1_k) / 2 | data)
  std::vector<double> est_p;       // posterior mean of p_k
  std::vector<double> acceptance;
  std::vector<double> ex_membership;  // EXNEX only: Pr(arm k in an EX component)
  bool operator==(const BasketReport&) const = default;
};

BasketReport bbhm_fit(const BasketData& data, const BbhmHyper& hyper, const McmcConfig& cfg);
BasketReport exnex_fit(const BasketData& data, const ExnexHyper& hyper, const McmcConfig& cfg);

}  // namespace muce
