#include "muce/mcmc.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace muce {

namespace {

constexpr double kTargetAcceptance = 0.35;

// X ~ N(0, 1) conditioned on X >= a.
double standard_upper_tail(double a, RandomStream& rng) {
  if (a > 37.0) {
    // Robert (1995) translated-exponential rejection; exact for any a > 0.
    const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (;;) {
      const double x = a + rng.exponential() / rate;
      const double d = x - rate;
      if (rng.uniform() <= std::exp(-0.5 * d * d)) return x;
    }
  }
  const double tail_mass = 0.5 * std::erfc(a / std::numbers::sqrt2);
  return -normal_quantile(rng.uniform() * tail_mass);
}

double log_target(double theta, double theta0, double log_w_alt, double log_w_null,
                  int y, int n, double gamma) {
  const Side side = side_of(theta, theta0);
  return binomial_loglik(y, n, theta) + trunc_cauchy_logpdf(theta, theta0, gamma, side) +
         (side == Side::alt ? log_w_alt : log_w_null);
}

ThetaStep theta_step(double theta, double theta0, double log_w_alt, double log_w_null,
                     int y, int n, double gamma, double step, RandomStream& rng) {
  const double proposal = theta + step * rng.normal();
  const double log_ratio =
      log_target(proposal, theta0, log_w_alt, log_w_null, y, n, gamma) -
      log_target(theta, theta0, log_w_alt, log_w_null, y, n, gamma);
  const double accept_prob = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
  if (rng.uniform() < accept_prob) return {proposal, true, accept_prob};
  return {theta, false, accept_prob};
}

ThetaStep independence_step(double theta, double theta0, double log_w_alt, int y, int n,
                            double gamma, RandomStream& rng) {
  const double half_cauchy = gamma * std::tan(0.5 * std::numbers::pi * rng.uniform());
  const bool alt = std::log(rng.uniform()) < log_w_alt;
  const double proposal = alt ? theta0 + half_cauchy : theta0 - half_cauchy;
  const double log_ratio = binomial_loglik(y, n, proposal) - binomial_loglik(y, n, theta);
  const double accept_prob = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
  if (rng.uniform() < accept_prob) return {proposal, true, accept_prob};
  return {theta, false, accept_prob};
}

// theta on `side` as a function of the half-Cauchy probability coordinate
// u in (0, 1); TC_side(theta) d theta = du under this map.
double theta_from_u(double u, double theta0, double gamma, Side side) {
  const double r = gamma * std::tan(0.5 * std::numbers::pi * u);
  return side == Side::alt ? theta0 + r : theta0 - r;
}

// Supremum of the binomial log-likelihood over the half-line `side`.
double side_loglik_sup(int y, int n, double theta0, Side side) {
  if (n == 0) return 0.0;
  if (y == 0) return side == Side::null ? 0.0 : binomial_loglik(y, n, theta0);
  if (y == n) return side == Side::alt ? 0.0 : binomial_loglik(y, n, theta0);
  const double mle = std::log(static_cast<double>(y) / (n - y));
  const double at = side == Side::null ? std::min(mle, theta0) : std::max(mle, theta0);
  return binomial_loglik(y, n, at);
}

// Data-dependent quantities of one arm that stay fixed through a chain:
// log of the integrated likelihood on each half-line under TC_side.
struct ArmEvidence {
  double log_null = 0.0;
  double log_alt = 0.0;
  double sup_null = 0.0;
  double sup_alt = 0.0;
};

ArmEvidence arm_evidence(int y, int n, double theta0, double gamma) {
  ArmEvidence ev;
  ev.sup_null = side_loglik_sup(y, n, theta0, Side::null);
  ev.sup_alt = side_loglik_sup(y, n, theta0, Side::alt);
  auto integral = [&](Side side, double sup) {
    auto f = [&](double u) {
      return std::exp(binomial_loglik(y, n, theta_from_u(u, theta0, gamma, side)) - sup);
    };
    const double v =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-12);
    return sup + std::log(v);
  };
  ev.log_null = integral(Side::null, ev.sup_null);
  ev.log_alt = integral(Side::alt, ev.sup_alt);
  return ev;
}

// Exact draw from Bin(y | theta) * TC_side(theta): half-Cauchy proposal,
// accepted against the likelihood supremum on that side.
double draw_theta_on_side(int y, int n, double theta0, double gamma, Side side, double sup,
                          RandomStream& rng) {
  for (;;) {
    const double theta = theta_from_u(rng.uniform(), theta0, gamma, side);
    if (std::log(rng.uniform()) <= binomial_loglik(y, n, theta) - sup) return theta;
  }
}

// State of one Metropolis-within-Gibbs chain. Each sweep first moves the
// random effects with every hypothesis indicator and latent score summed
// out, then redraws each arm's hypothesis and theta given the effects, then
// Z given theta, and finally all effects jointly given Z.
class Chain {
 public:
  Chain(const TrialDataset& data, const TrialLayout& layout, const Hyperparameters& hyper,
        const McmcConfig& cfg)
      : data_(data), hyper_(hyper), cfg_(cfg),
        n_ind_(static_cast<std::size_t>(layout.n_indications)),
        n_dose_(static_cast<std::size_t>(layout.n_doses)),
        sigma0_(std::sqrt(hyper.sigma0_sq)),
        rng_(cfg.seed), z_(n_ind_, n_dose_, 0.0), block_(n_ind_, n_dose_, hyper) {
    const std::size_t arms = n_ind_ * n_dose_;
    theta0_.resize(arms);
    theta_.resize(arms);
    log_step_.assign(arms, std::log(cfg.proposal_scale));
    log_effect_step_.assign(n_ind_ + n_dose_ + 2, 0.0);
    accepted_.assign(arms, 0);
    for (std::size_t i = 0; i < n_ind_; ++i) {
      for (std::size_t j = 0; j < n_dose_; ++j) {
        const std::size_t k = i * n_dose_ + j;
        theta0_[k] = logit(layout.pi0[i]);
        const double n = data.n(i, j), y = data.y(i, j);
        theta_[k] = logit((y + 0.5) / (n + 1.0));
        evidence_.push_back(arm_evidence(data.y(i, j), data.n(i, j), theta0_[k], hyper.gamma));
        z_[k] = theta_[k] > theta0_[k] ? 0.5 : -0.5;
      }
    }
    effects_.xi.assign(n_ind_, hyper.mu_xi0);
    effects_.eta.assign(n_dose_, hyper.mu_eta0);
    effects_.xi0 = hyper.mu_xi0;
    effects_.eta0 = hyper.mu_eta0;
    marginal_.resize(arms);
    row_arms_.resize(n_ind_);
    col_arms_.resize(n_dose_);
    for (std::size_t k = 0; k < arms; ++k) {
      row_arms_[k / n_dose_].push_back(k);
      col_arms_[k % n_dose_].push_back(k);
      all_arms_.push_back(k);
    }
  }

  template <class Sink>
  void run(Sink&& sink) {
    const long total = static_cast<long>(cfg_.burn_in) +
                       static_cast<long>(cfg_.n_keep) * cfg_.thin;
    int kept = 0;
    for (long it = 0; it < total; ++it) {
      const bool burning = it < cfg_.burn_in;
      sweep(burning, it);
      if (!burning && (it - cfg_.burn_in + 1) % cfg_.thin == 0) {
        check_sign_consistency();
        sink(kept++, *this);
      }
    }
  }

  std::size_t arms() const { return theta_.size(); }
  const std::vector<double>& theta() const { return theta_; }
  const std::vector<double>& theta0() const { return theta0_; }
  const ArmMatrix<double>& z() const { return z_; }
  const Effects& effects() const { return effects_; }

  std::vector<double> acceptance() const {
    const long post = static_cast<long>(cfg_.n_keep) * cfg_.thin;
    std::vector<double> out(arms());
    for (std::size_t k = 0; k < arms(); ++k)
      out[k] = static_cast<double>(accepted_[k]) / static_cast<double>(post);
    return out;
  }

 private:
  void sweep(bool burning, long it) {
    const double gain = 1.0 / std::pow(static_cast<double>(it) + 1.0, 0.6);
    refresh_marginals();
    marginal_effect_steps(burning, gain);
    for (std::size_t i = 0; i < n_ind_; ++i) {
      for (std::size_t j = 0; j < n_dose_; ++j) {
        const std::size_t k = i * n_dose_ + j;
        const int y = data_.y(i, j), n = data_.n(i, j);
        const double mean = effects_.xi[i] + effects_.eta[j];
        const ArmMarginal& am = marginal_[k];

        // Hypothesis with theta integrated out; theta is redrawn exactly on a switch.
        const ArmEvidence& ev = evidence_[k];
        const double p_alt = std::exp(ev.log_alt + am.log_w_alt - am.total);
        const Side side = rng_.uniform() < p_alt ? Side::alt : Side::null;
        if (side != side_of(theta_[k], theta0_[k]))
          theta_[k] = draw_theta_on_side(y, n, theta0_[k], hyper_.gamma, side,
                                         side == Side::alt ? ev.sup_alt : ev.sup_null, rng_);

        const ThetaStep s = theta_step(theta_[k], theta0_[k], am.log_w_alt, am.log_w_null, y,
                                       n, hyper_.gamma, std::exp(log_step_[k]), rng_);
        theta_[k] = s.theta;
        if (burning) {
          if (cfg_.adapt) log_step_[k] += gain * (s.accept_prob - kTargetAcceptance);
        } else if (s.accepted) {
          ++accepted_[k];
        }
        theta_[k] = independence_step(theta_[k], theta0_[k], am.log_w_alt, y, n, hyper_.gamma,
                                      rng_)
                        .theta;
        z_[k] = update_z(theta_[k], theta0_[k], mean, hyper_.sigma0_sq, rng_);
      }
    }
    effects_ = block_.draw(z_, rng_);
  }

  // Per-arm terms at the current latent mean m: log Phi(+-m / sigma0) and
  // log [e_alt Phi(m / sigma0) + e_null Phi(-m / sigma0)].
  struct ArmMarginal {
    double log_w_alt = 0.0;
    double log_w_null = 0.0;
    double total = 0.0;
  };

  ArmMarginal arm_marginal(std::size_t k, double m) const {
    const ArmEvidence& ev = evidence_[k];
    ArmMarginal am{log_normal_cdf(m / sigma0_), log_normal_cdf(-m / sigma0_), 0.0};
    const double a = ev.log_alt + am.log_w_alt;
    const double b = ev.log_null + am.log_w_null;
    am.total = std::max(a, b) + std::log1p(std::exp(-std::abs(a - b)));
    return am;
  }

  void refresh_marginals() {
    for (std::size_t i = 0; i < n_ind_; ++i)
      for (std::size_t j = 0; j < n_dose_; ++j)
        marginal_[i * n_dose_ + j] =
            arm_marginal(i * n_dose_ + j, effects_.xi[i] + effects_.eta[j]);
  }

  // Random-walk Metropolis on one scalar whose move changes the latent mean
  // of the arms listed in `touched`. `mean_of(k, v)` is arm k's latent mean
  // at value v; the Gaussian prior term is N(prior_mean, prior_var).
  template <class MeanOf>
  bool effect_step(double& value, double prior_mean, double prior_var, std::size_t slot,
                   const std::vector<std::size_t>& touched, MeanOf&& mean_of, bool burning,
                   double gain) {
    const double proposal = value + std::exp(log_effect_step_[slot]) * rng_.normal();
    double log_ratio = -0.5 *
                       ((proposal - prior_mean) * (proposal - prior_mean) -
                        (value - prior_mean) * (value - prior_mean)) /
                       prior_var;
    scratch_.clear();
    for (std::size_t k : touched) {
      scratch_.push_back(arm_marginal(k, mean_of(k, proposal)));
      log_ratio += scratch_.back().total - marginal_[k].total;
    }
    const double accept_prob = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
    const bool accept = rng_.uniform() < accept_prob;
    if (accept) {
      value = proposal;
      for (std::size_t t = 0; t < touched.size(); ++t) marginal_[touched[t]] = scratch_[t];
    }
    if (burning && cfg_.adapt) log_effect_step_[slot] += gain * (accept_prob - 0.44);
    return accept;
  }

  // Moves on the effects under their posterior given the data alone (every
  // hypothesis indicator and latent score summed out), plus conjugate draws
  // of xi0 and eta0.
  void marginal_effect_steps(bool burning, double gain) {
    for (std::size_t i = 0; i < n_ind_; ++i) {
      effect_step(effects_.xi[i], effects_.xi0, hyper_.sigma_xi_sq, i, row_arms_[i],
                  [&](std::size_t k, double v) { return v + effects_.eta[k % n_dose_]; },
                  burning, gain);
    }
    for (std::size_t j = 0; j < n_dose_; ++j) {
      effect_step(effects_.eta[j], effects_.eta0, hyper_.sigma_eta_sq, n_ind_ + j,
                  col_arms_[j],
                  [&](std::size_t k, double v) { return effects_.xi[k / n_dose_] + v; },
                  burning, gain);
    }

    // Common shift of every latent mean, carried by (xi, xi0) or (eta, eta0).
    auto shifted = [&](std::size_t k, double c) {
      return effects_.xi[k / n_dose_] + effects_.eta[k % n_dose_] + c;
    };
    double shift = 0.0;
    if (effect_step(shift, hyper_.mu_xi0 - effects_.xi0, hyper_.sigma_xi0_sq,
                    n_ind_ + n_dose_, all_arms_, shifted, burning, gain)) {
      for (double& v : effects_.xi) v += shift;
      effects_.xi0 += shift;
    }
    shift = 0.0;
    if (effect_step(shift, hyper_.mu_eta0 - effects_.eta0, hyper_.sigma_eta0_sq,
                    n_ind_ + n_dose_ + 1, all_arms_, shifted, burning, gain)) {
      for (double& v : effects_.eta) v += shift;
      effects_.eta0 += shift;
    }

    auto draw = [&](NormalLaw law) { return rng_.normal(law.mean, std::sqrt(law.var)); };
    effects_.xi0 = draw(xi0_conditional(effects_, hyper_));
    effects_.eta0 = draw(eta0_conditional(effects_, hyper_));
  }

  void check_sign_consistency() const {
    for (std::size_t k = 0; k < arms(); ++k) {
      if ((theta_[k] > theta0_[k]) != (z_[k] >= 0.0))
        throw std::logic_error("sign consistency between theta and Z violated");
    }
  }

  const TrialDataset& data_;
  const Hyperparameters& hyper_;
  const McmcConfig& cfg_;
  std::size_t n_ind_;
  std::size_t n_dose_;
  double sigma0_;
  RandomStream rng_;
  std::vector<double> theta0_;
  std::vector<double> theta_;
  std::vector<double> log_step_;
  std::vector<double> log_effect_step_;
  std::vector<ArmEvidence> evidence_;
  std::vector<long> accepted_;
  ArmMatrix<double> z_;
  Effects effects_;
  EffectsBlock block_;
  std::vector<ArmMarginal> marginal_;
  std::vector<ArmMarginal> scratch_;
  std::vector<std::vector<std::size_t>> row_arms_;
  std::vector<std::vector<std::size_t>> col_arms_;
  std::vector<std::size_t> all_arms_;
};

void validate_inputs(const TrialDataset& data, const TrialLayout& layout,
                     const Hyperparameters& hyper, const McmcConfig& cfg) {
  layout.validate();
  data.validate_against(layout);
  hyper.validate();
  cfg.validate();
}

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(mid));
  return 0.5 * (lo + hi);
}

double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size() - 1);
}

}  // namespace

double sample_trunc_normal(double mean, double sd, ZSide side, RandomStream& rng) {
  const double a = -mean / sd;
  if (side == ZSide::nonneg) {
    const double z = mean + sd * standard_upper_tail(a, rng);
    return std::max(z, 0.0);
  }
  const double z = mean - sd * standard_upper_tail(-a, rng);
  return std::min(z, -std::numeric_limits<double>::denorm_min());
}

ThetaStep update_theta(double theta, double theta0, double weight_h1, int y, int n,
                       double gamma, double step, RandomStream& rng) {
  return theta_step(theta, theta0, std::log(weight_h1), std::log1p(-weight_h1), y, n,
                    gamma, step, rng);
}

double update_z(double theta, double theta0, double latent_mean, double sigma0_sq,
                RandomStream& rng) {
  const ZSide side = theta > theta0 ? ZSide::nonneg : ZSide::neg;
  return sample_trunc_normal(latent_mean, std::sqrt(sigma0_sq), side, rng);
}

NormalLaw xi_conditional(const ArmMatrix<double>& z, const Effects& e, std::size_t i,
                         const Hyperparameters& h) {
  double resid = 0.0;
  for (std::size_t j = 0; j < z.cols(); ++j) resid += z(i, j) - e.eta[j];
  const double prec = static_cast<double>(z.cols()) / h.sigma0_sq + 1.0 / h.sigma_xi_sq;
  return {(resid / h.sigma0_sq + e.xi0 / h.sigma_xi_sq) / prec, 1.0 / prec};
}

NormalLaw eta_conditional(const ArmMatrix<double>& z, const Effects& e, std::size_t j,
                          const Hyperparameters& h) {
  double resid = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) resid += z(i, j) - e.xi[i];
  const double prec = static_cast<double>(z.rows()) / h.sigma0_sq + 1.0 / h.sigma_eta_sq;
  return {(resid / h.sigma0_sq + e.eta0 / h.sigma_eta_sq) / prec, 1.0 / prec};
}

NormalLaw xi0_conditional(const Effects& e, const Hyperparameters& h) {
  const double sum = std::accumulate(e.xi.begin(), e.xi.end(), 0.0);
  const double prec = static_cast<double>(e.xi.size()) / h.sigma_xi_sq + 1.0 / h.sigma_xi0_sq;
  return {(sum / h.sigma_xi_sq + h.mu_xi0 / h.sigma_xi0_sq) / prec, 1.0 / prec};
}

NormalLaw eta0_conditional(const Effects& e, const Hyperparameters& h) {
  const double sum = std::accumulate(e.eta.begin(), e.eta.end(), 0.0);
  const double prec =
      static_cast<double>(e.eta.size()) / h.sigma_eta_sq + 1.0 / h.sigma_eta0_sq;
  return {(sum / h.sigma_eta_sq + h.mu_eta0 / h.sigma_eta0_sq) / prec, 1.0 / prec};
}

Effects update_effects(const ArmMatrix<double>& z, Effects e, const Hyperparameters& h,
                       RandomStream& rng) {
  auto draw = [&rng](NormalLaw law) { return rng.normal(law.mean, std::sqrt(law.var)); };
  for (std::size_t i = 0; i < e.xi.size(); ++i) e.xi[i] = draw(xi_conditional(z, e, i, h));
  for (std::size_t j = 0; j < e.eta.size(); ++j) e.eta[j] = draw(eta_conditional(z, e, j, h));
  e.xi0 = draw(xi0_conditional(e, h));
  e.eta0 = draw(eta0_conditional(e, h));
  return e;
}

struct EffectsBlock::Impl {
  std::size_t n_ind;
  std::size_t n_dose;
  Hyperparameters h;
  Eigen::LLT<Eigen::MatrixXd> llt;

  Eigen::VectorXd linear_term(const ArmMatrix<double>& z) const {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_ind + n_dose + 2));
    for (std::size_t i = 0; i < n_ind; ++i) {
      for (std::size_t j = 0; j < n_dose; ++j) {
        b(static_cast<Eigen::Index>(i)) += z(i, j) / h.sigma0_sq;
        b(static_cast<Eigen::Index>(n_ind + j)) += z(i, j) / h.sigma0_sq;
      }
    }
    b(static_cast<Eigen::Index>(n_ind + n_dose)) += h.mu_xi0 / h.sigma_xi0_sq;
    b(static_cast<Eigen::Index>(n_ind + n_dose + 1)) += h.mu_eta0 / h.sigma_eta0_sq;
    return b;
  }
};

EffectsBlock::EffectsBlock(std::size_t n_ind, std::size_t n_dose, const Hyperparameters& h)
    : impl_(std::make_unique<Impl>()) {
  impl_->n_ind = n_ind;
  impl_->n_dose = n_dose;
  impl_->h = h;
  const auto d = static_cast<Eigen::Index>(n_ind + n_dose + 2);
  const auto xi0 = static_cast<Eigen::Index>(n_ind + n_dose);
  const auto eta0 = xi0 + 1;
  Eigen::MatrixXd prec = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < n_ind; ++i) {
    const auto a = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < n_dose; ++j) {
      const auto b = static_cast<Eigen::Index>(n_ind + j);
      prec(a, a) += 1.0 / h.sigma0_sq;
      prec(b, b) += 1.0 / h.sigma0_sq;
      prec(a, b) += 1.0 / h.sigma0_sq;
      prec(b, a) += 1.0 / h.sigma0_sq;
    }
    prec(a, a) += 1.0 / h.sigma_xi_sq;
    prec(xi0, xi0) += 1.0 / h.sigma_xi_sq;
    prec(a, xi0) -= 1.0 / h.sigma_xi_sq;
    prec(xi0, a) -= 1.0 / h.sigma_xi_sq;
  }
  for (std::size_t j = 0; j < n_dose; ++j) {
    const auto b = static_cast<Eigen::Index>(n_ind + j);
    prec(b, b) += 1.0 / h.sigma_eta_sq;
    prec(eta0, eta0) += 1.0 / h.sigma_eta_sq;
    prec(b, eta0) -= 1.0 / h.sigma_eta_sq;
    prec(eta0, b) -= 1.0 / h.sigma_eta_sq;
  }
  prec(xi0, xi0) += 1.0 / h.sigma_xi0_sq;
  prec(eta0, eta0) += 1.0 / h.sigma_eta0_sq;
  impl_->llt.compute(prec);
}

EffectsBlock::~EffectsBlock() = default;
EffectsBlock::EffectsBlock(EffectsBlock&&) noexcept = default;
EffectsBlock& EffectsBlock::operator=(EffectsBlock&&) noexcept = default;

std::vector<double> EffectsBlock::mean(const ArmMatrix<double>& z) const {
  const Eigen::VectorXd m = impl_->llt.solve(impl_->linear_term(z));
  return {m.data(), m.data() + m.size()};
}

std::vector<double> EffectsBlock::covariance() const {
  const auto d = static_cast<Eigen::Index>(impl_->n_ind + impl_->n_dose + 2);
  const Eigen::MatrixXd cov = impl_->llt.solve(Eigen::MatrixXd::Identity(d, d));
  std::vector<double> out(static_cast<std::size_t>(d * d));
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) out[static_cast<std::size_t>(r * d + c)] = cov(r, c);
  return out;
}

Effects EffectsBlock::draw(const ArmMatrix<double>& z, RandomStream& rng) const {
  const auto d = static_cast<Eigen::Index>(impl_->n_ind + impl_->n_dose + 2);
  Eigen::VectorXd eps(d);
  for (Eigen::Index r = 0; r < d; ++r) eps(r) = rng.normal();
  const Eigen::VectorXd v =
      impl_->llt.solve(impl_->linear_term(z)) + impl_->llt.matrixU().solve(eps);
  Effects e;
  e.xi.assign(v.data(), v.data() + impl_->n_ind);
  e.eta.assign(v.data() + impl_->n_ind, v.data() + impl_->n_ind + impl_->n_dose);
  e.xi0 = v(d - 2);
  e.eta0 = v(d - 1);
  return e;
}

ThetaStep prior_independence_step(double theta, double theta0, double weight_h1, int y,
                                  int n, double gamma, RandomStream& rng) {
  return independence_step(theta, theta0, std::log(weight_h1), y, n, gamma, rng);
}

std::vector<double> PosteriorDraws::theta_chain(int arm) const {
  std::vector<double> out(static_cast<std::size_t>(n_draws));
  const std::size_t k = static_cast<std::size_t>(arms());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = theta[r * k + static_cast<std::size_t>(arm)];
  return out;
}

PosteriorDraws muce_sample(const TrialDataset& data, const TrialLayout& layout,
                           const Hyperparameters& hyper, const McmcConfig& cfg) {
  validate_inputs(data, layout, hyper, cfg);
  Chain chain(data, layout, hyper, cfg);
  const std::size_t arms = chain.arms();
  const std::size_t rows = static_cast<std::size_t>(cfg.n_keep);

  PosteriorDraws d;
  d.n_draws = cfg.n_keep;
  d.n_indications = layout.n_indications;
  d.n_doses = layout.n_doses;
  d.theta.resize(rows * arms);
  d.z.resize(rows * arms);
  d.xi.resize(rows * static_cast<std::size_t>(layout.n_indications));
  d.eta.resize(rows * static_cast<std::size_t>(layout.n_doses));
  d.xi0.resize(rows);
  d.eta0.resize(rows);

  chain.run([&](int r, const Chain& c) {
    const std::size_t row = static_cast<std::size_t>(r);
    std::copy(c.theta().begin(), c.theta().end(), d.theta.begin() + static_cast<long>(row * arms));
    std::copy(c.z().values().begin(), c.z().values().end(),
              d.z.begin() + static_cast<long>(row * arms));
    const Effects& e = c.effects();
    std::copy(e.xi.begin(), e.xi.end(), d.xi.begin() + static_cast<long>(row * e.xi.size()));
    std::copy(e.eta.begin(), e.eta.end(), d.eta.begin() + static_cast<long>(row * e.eta.size()));
    d.xi0[row] = e.xi0;
    d.eta0[row] = e.eta0;
  });
  d.acceptance = chain.acceptance();
  d.theta0 = chain.theta0();
  return d;
}

PosteriorReport summarize(const PosteriorDraws& d, const McmcConfig& cfg,
                          PointEstimate estimator) {
  const std::size_t rows = static_cast<std::size_t>(d.n_indications);
  const std::size_t cols = static_cast<std::size_t>(d.n_doses);
  PosteriorReport rep{ArmMatrix<double>(rows, cols), ArmMatrix<double>(rows, cols),
                      ArmMatrix<double>(rows, cols), ArmMatrix<double>(rows, cols), cfg,
                      estimator};
  const std::size_t arms = rows * cols;
  const double n = static_cast<double>(d.n_draws);
  for (std::size_t k = 0; k < arms; ++k) {
    long h1 = 0;
    std::vector<double> p(static_cast<std::size_t>(d.n_draws));
    for (std::size_t r = 0; r < p.size(); ++r) {
      if (d.z[r * arms + k] >= 0.0) ++h1;
      p[r] = inv_logit(d.theta[r * arms + k]);
    }
    rep.pr_h1[k] = static_cast<double>(h1) / n;
    switch (estimator) {
      case PointEstimate::mean:
        rep.est_p[k] = std::accumulate(p.begin(), p.end(), 0.0) / n;
        break;
      case PointEstimate::median:
        rep.est_p[k] = median_of(std::move(p));
        break;
      case PointEstimate::logit_mean: {
        double s = 0.0;
        for (std::size_t r = 0; r < p.size(); ++r) s += d.theta[r * arms + k];
        rep.est_p[k] = inv_logit(s / n);
        break;
      }
    }
    rep.ess[k] = effective_sample_size(d.theta_chain(static_cast<int>(k)));
    rep.acceptance[k] = d.acceptance[k];
  }
  return rep;
}

PosteriorReport muce_fit(const TrialDataset& data, const TrialLayout& layout,
                         const Hyperparameters& hyper, const McmcConfig& cfg,
                         FitOptions opts) {
  if (opts.diagnostics || opts.estimator != PointEstimate::mean)
    return summarize(muce_sample(data, layout, hyper, cfg), cfg, opts.estimator);

  validate_inputs(data, layout, hyper, cfg);
  Chain chain(data, layout, hyper, cfg);
  const std::size_t arms = chain.arms();
  std::vector<long> h1(arms, 0);
  std::vector<double> sum_p(arms, 0.0);
  chain.run([&](int, const Chain& c) {
    for (std::size_t k = 0; k < arms; ++k) {
      if (c.z()[k] >= 0.0) ++h1[k];
      sum_p[k] += inv_logit(c.theta()[k]);
    }
  });

  const std::size_t rows = static_cast<std::size_t>(layout.n_indications);
  const std::size_t cols = static_cast<std::size_t>(layout.n_doses);
  PosteriorReport rep{ArmMatrix<double>(rows, cols), ArmMatrix<double>(rows, cols),
                      ArmMatrix<double>(rows, cols, std::numeric_limits<double>::quiet_NaN()),
                      ArmMatrix<double>(rows, cols), cfg, opts.estimator};
  const std::vector<double> acc = chain.acceptance();
  const double n = static_cast<double>(cfg.n_keep);
  for (std::size_t k = 0; k < arms; ++k) {
    rep.pr_h1[k] = static_cast<double>(h1[k]) / n;
    rep.est_p[k] = sum_p[k] / n;
    rep.acceptance[k] = acc[k];
  }
  return rep;
}

double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - mean) * (x[t + lag] - mean);
    return s / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) return static_cast<double>(n);

  double tau = -1.0;
  for (std::size_t lag = 0; lag + 1 < n; lag += 2) {
    const double pair = (autocov(lag) + autocov(lag + 1)) / c0;
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  return std::min(static_cast<double>(n), static_cast<double>(n) / tau);
}

double split_chain_ratio(std::span<const double> chain) {
  const std::size_t half = chain.size() / 2;
  const double v1 = variance(chain.first(half));
  const double v2 = variance(chain.subspan(chain.size() - half));
  if (!(v1 > 0.0) || !(v2 > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return v1 / v2;
}

std::vector<ArmDiagnostics> diagnostics(const PosteriorDraws& d) {
  if (d.n_draws < 100) throw std::invalid_argument("diagnostics need at least 100 draws");
  std::vector<ArmDiagnostics> out(static_cast<std::size_t>(d.arms()));
  for (int k = 0; k < d.arms(); ++k) {
    const std::vector<double> chain = d.theta_chain(k);
    ArmDiagnostics& a = out[static_cast<std::size_t>(k)];
    a.ess = effective_sample_size(chain);
    a.acceptance = d.acceptance.empty() ? 0.0 : d.acceptance[static_cast<std::size_t>(k)];
    a.split_chain_ratio = split_chain_ratio(chain);
    a.flagged = !(a.split_chain_ratio >= 0.5 && a.split_chain_ratio <= 2.0);
  }
  return out;
}

}  // namespace muce
