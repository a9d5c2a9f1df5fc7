#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "muce/model.hpp"
#include "muce/random.hpp"

namespace muce {

/// Support of a truncated normal draw: [0, inf) or (-inf, 0).
enum class ZSide { nonneg, neg };

/// N(mean, sd^2) conditioned on `side`, by inversion of the normal tail
/// function. Inversion runs on Q(a) = Phi(-a), so the small tail mass is
/// represented directly instead of as 1 - Phi(a) and stays accurate far into
/// the tail; past |a| = 37, where Q(a) underflows, an exact exponential
/// rejection sampler takes over.
double sample_trunc_normal(double mean, double sd, ZSide side, RandomStream& rng);

struct ThetaStep {
  double theta;
  bool accepted;
  double accept_prob;
};

/// One random-walk Metropolis step for theta_ij with the latent score
/// integrated out, i.e. targeting
///   Bin(y | n, theta) * [w TC_alt(theta) + (1 - w) TC_null(theta)].
ThetaStep update_theta(double theta, double theta0, double weight_h1, int y, int n,
                       double gamma, double step, RandomStream& rng);

/// Gibbs draw of Z_ij given the hypothesis implied by theta_ij.
double update_z(double theta, double theta0, double latent_mean, double sigma0_sq,
                RandomStream& rng);

struct Effects {
  std::vector<double> xi;
  std::vector<double> eta;
  double xi0 = 0.0;
  double eta0 = 0.0;
};

struct NormalLaw {
  double mean;
  double var;
};

NormalLaw xi_conditional(const ArmMatrix<double>& z, const Effects& e, std::size_t i,
                         const Hyperparameters& h);
NormalLaw eta_conditional(const ArmMatrix<double>& z, const Effects& e, std::size_t j,
                          const Hyperparameters& h);
NormalLaw xi0_conditional(const Effects& e, const Hyperparameters& h);
NormalLaw eta0_conditional(const Effects& e, const Hyperparameters& h);

/// Sweeps xi, eta, xi0, eta0 through their Gaussian full conditionals in
/// that order.
Effects update_effects(const ArmMatrix<double>& z, Effects current,
                       const Hyperparameters& h, RandomStream& rng);

/// Exact joint draw of (xi, eta, xi0, eta0) given Z. The joint precision
/// does not depend on Z, so its Cholesky factor is computed once.
class EffectsBlock {
 public:
  EffectsBlock(std::size_t n_indications, std::size_t n_doses, const Hyperparameters& h);
  ~EffectsBlock();
  EffectsBlock(EffectsBlock&&) noexcept;
  EffectsBlock& operator=(EffectsBlock&&) noexcept;

  /// Conditional mean of the stacked vector (xi, eta, xi0, eta0).
  std::vector<double> mean(const ArmMatrix<double>& z) const;
  /// Conditional covariance, row-major, same ordering as mean().
  std::vector<double> covariance() const;
  Effects draw(const ArmMatrix<double>& z, RandomStream& rng) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Independence Metropolis step proposing theta from its mixture prior
/// w TC_alt + (1 - w) TC_null, so only the likelihood ratio enters the
/// acceptance probability. Complements update_theta in the heavy tails.
ThetaStep prior_independence_step(double theta, double theta0, double weight_h1, int y,
                                  int n, double gamma, RandomStream& rng);

/// Retained draws. Per-draw arrays are laid out draw-major, so the value for
/// draw r and arm k = i * J + j sits at index r * K + k.
struct PosteriorDraws {
  int n_draws = 0;
  int n_indications = 0;
  int n_doses = 0;
  std::vector<double> theta;
  std::vector<double> z;
  std::vector<double> xi;
  std::vector<double> eta;
  std::vector<double> xi0;
  std::vector<double> eta0;
  std::vector<double> acceptance;  // per arm, after burn-in
  std::vector<double> theta0;      // per arm reference logit

  int arms() const { return n_indications * n_doses; }
  std::vector<double> theta_chain(int arm) const;
};

/// Response-rate point estimate: posterior mean or median of p, or
/// inv_logit of the posterior mean of theta.
enum class PointEstimate { mean, median, logit_mean };

struct ArmDiagnostics {
  double ess = 0.0;
  double acceptance = 0.0;
  double split_chain_ratio = 0.0;
  bool flagged = false;  // split ratio outside [0.5, 2] or degenerate
  bool operator==(const ArmDiagnostics&) const = default;
};

struct PosteriorReport {
  ArmMatrix<double> pr_h1;
  ArmMatrix<double> est_p;
  ArmMatrix<double> ess;
  ArmMatrix<double> acceptance;
  McmcConfig config;
  PointEstimate estimator = PointEstimate::mean;
  bool operator==(const PosteriorReport&) const = default;
};

struct FitOptions {
  PointEstimate estimator = PointEstimate::mean;
  bool diagnostics = true;
};

/// Runs the Metropolis-within-Gibbs chain and keeps every retained draw.
PosteriorDraws muce_sample(const TrialDataset& data, const TrialLayout& layout,
                           const Hyperparameters& hyper, const McmcConfig& cfg);

PosteriorReport summarize(const PosteriorDraws& draws, const McmcConfig& cfg,
                          PointEstimate estimator = PointEstimate::mean);

/// Posterior summary without materialising the full draw set.
PosteriorReport muce_fit(const TrialDataset& data, const TrialLayout& layout,
                         const Hyperparameters& hyper, const McmcConfig& cfg,
                         FitOptions opts = {});

/// ESS from Geyer's initial positive sequence of autocorrelation pairs,
/// capped at the chain length. Zero-variance chains return the length.
double effective_sample_size(std::span<const double> chain);

/// Variance of the first half over the variance of the second half; NaN
/// if either half is constant.
double split_chain_ratio(std::span<const double> chain);

std::vector<ArmDiagnostics> diagnostics(const PosteriorDraws& draws);

}  // namespace muce
