#include "muce/comparators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <tuple>

#include "muce/random.hpp"

namespace muce {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Bin(k; n, p) for k = 0..n, evaluated in log space.
std::vector<double> binomial_pmf(int n, double p) {
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1, 0.0);
  if (p <= 0.0) {
    pmf.front() = 1.0;
    return pmf;
  }
  if (p >= 1.0) {
    pmf.back() = 1.0;
    return pmf;
  }
  const double lp = std::log(p), lq = std::log1p(-p);
  const double lgn = std::lgamma(n + 1.0);
  for (int k = 0; k <= n; ++k) {
    const double lc = lgn - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    pmf[static_cast<std::size_t>(k)] = std::exp(lc + k * lp + (n - k) * lq);
  }
  return pmf;
}

// surv[t] = Pr(Y > t) for t = 0..n, accumulated from the upper tail.
std::vector<double> binomial_survival(const std::vector<double>& pmf) {
  std::vector<double> surv(pmf.size(), 0.0);
  double acc = 0.0;
  for (std::size_t t = pmf.size(); t-- > 0;) {
    surv[t] = acc;
    acc += pmf[t];
  }
  return surv;
}

double survival_at(const std::vector<double>& surv, int t) {
  if (t < 0) return 1.0;
  if (t >= static_cast<int>(surv.size())) return 0.0;
  return surv[static_cast<std::size_t>(t)];
}

double reject_prob(const std::vector<double>& pmf1, const std::vector<double>& surv2, int r1,
                   int r) {
  double s = 0.0;
  for (int y1 = static_cast<int>(pmf1.size()) - 1; y1 > r1; --y1)
    s += pmf1[static_cast<std::size_t>(y1)] * survival_at(surv2, r - y1);
  return s;
}

}  // namespace

void SimonDesign::validate() const {
  require(r1 >= 0 && r1 < n1, "Simon design needs 0 <= r1 < n1");
  require(n1 <= N, "Simon design needs n1 <= N");
  require(r >= r1 && r <= N, "Simon design needs r1 <= r <= N");
}

StageErrorRates two_stage_error_rates(const SimonDesign& d, double p) {
  d.validate();
  require(p >= 0.0 && p <= 1.0, "response rate must lie in [0,1]");
  const std::vector<double> pmf1 = binomial_pmf(d.n1, p);
  const std::vector<double> surv2 = binomial_survival(binomial_pmf(d.N - d.n1, p));
  StageErrorRates out;
  for (int y1 = d.r1; y1 >= 0; --y1) out.pet += pmf1[static_cast<std::size_t>(y1)];
  out.pet = std::min(out.pet, 1.0);
  out.reject_prob = reject_prob(pmf1, surv2, d.r1, d.r);
  out.expected_n = d.n1 + (1.0 - out.pet) * (d.N - d.n1);
  return out;
}

SimonDesign simon_search(double p0, double p1, double alpha, double beta,
                         SimonCriterion criterion, int n_max) {
  require(p0 > 0.0 && p0 < 1.0 && p1 > 0.0 && p1 < 1.0, "p0 and p1 must lie in (0,1)");
  require(p0 < p1, "simon_search needs p0 < p1");
  require(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0,
          "alpha and beta must lie in (0,1)");
  require(n_max >= 2, "n_max must be at least 2");

  std::vector<std::vector<double>> pmf0(static_cast<std::size_t>(n_max) + 1);
  std::vector<std::vector<double>> pmf1(pmf0.size()), surv0(pmf0.size()), surv1(pmf0.size());
  for (int m = 0; m <= n_max; ++m) {
    const auto u = static_cast<std::size_t>(m);
    pmf0[u] = binomial_pmf(m, p0);
    pmf1[u] = binomial_pmf(m, p1);
    surv0[u] = binomial_survival(pmf0[u]);
    surv1[u] = binomial_survival(pmf1[u]);
  }

  std::optional<SimonDesign> best;
  double best_en = std::numeric_limits<double>::infinity();
  auto better = [&](const SimonDesign& d, double en) {
    if (!best) return true;
    constexpr double tie = 1e-12;
    if (criterion == SimonCriterion::minimax) {
      if (d.N != best->N) return d.N < best->N;
      if (std::abs(en - best_en) > tie) return en < best_en;
    } else {
      if (std::abs(en - best_en) > tie) return en < best_en;
      if (d.N != best->N) return d.N < best->N;
    }
    return std::tie(d.n1, d.r1, d.r) < std::tie(best->n1, best->r1, best->r);
  };

  for (int N = 2; N <= n_max; ++N) {
    if (criterion == SimonCriterion::minimax && best && N > best->N) break;
    for (int n1 = 1; n1 < N; ++n1) {
      if (criterion == SimonCriterion::optimal && n1 > best_en) break;
      const auto a = static_cast<std::size_t>(n1);
      const auto b = static_cast<std::size_t>(N - n1);
      double pet0 = 0.0;
      for (int r1 = 0; r1 < n1; ++r1) {
        pet0 += pmf0[a][static_cast<std::size_t>(r1)];
        const double en = n1 + (1.0 - std::min(pet0, 1.0)) * (N - n1);
        // Type I error falls with r, so take the smallest admissible r; it
        // gives the largest power among designs sharing (r1, n1, N).
        int lo = r1, hi = N;  // reject_prob(hi) == 0
        if (reject_prob(pmf0[a], surv0[b], r1, hi - 1) > alpha) continue;
        while (lo < hi) {
          const int mid = lo + (hi - lo) / 2;
          if (reject_prob(pmf0[a], surv0[b], r1, mid) <= alpha)
            hi = mid;
          else
            lo = mid + 1;
        }
        if (lo >= N) continue;
        if (reject_prob(pmf1[a], surv1[b], r1, lo) < 1.0 - beta) continue;
        const SimonDesign d{r1, n1, lo, N};
        if (better(d, en)) {
          best = d;
          best_en = en;
        }
      }
    }
  }
  if (!best) throw InfeasibleDesign("no two-stage design satisfies the error constraints");
  return *best;
}

double fwer_independent(double alpha, int K) {
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0,1]");
  require(K >= 1, "K must be at least 1");
  return -std::expm1(K * std::log1p(-alpha));
}

void BasketData::validate() const {
  const std::size_t k = n.size();
  require(k >= 1, "basket data needs at least one arm");
  require(y.size() == k && pi0.size() == k && pi1.size() == k,
          "basket data vectors must share one length");
  for (std::size_t a = 0; a < k; ++a) {
    require(n[a] >= 0, "n must be nonnegative");
    if (y[a] < 0 || y[a] > n[a]) throw std::domain_error("responders must satisfy 0 <= y <= n");
    require(pi0[a] > 0.0 && pi0[a] < 1.0 && pi1[a] > 0.0 && pi1[a] < 1.0,
            "pi0 and pi1 must lie in (0,1)");
  }
}

void BbhmHyper::validate() const {
  require(theta0_var > 0.0 && ig_shape > 0.0 && ig_rate > 0.0,
          "BBHM variances and inverse-gamma parameters must be positive");
  if (fixed_sigma_sq) require(*fixed_sigma_sq > 0.0, "fixed sigma^2 must be positive");
}

void ExnexHyper::validate() const {
  const std::size_t c = ex_mean_prior_mean.size();
  require(c >= 1, "EXNEX needs at least one EX component");
  require(ex_mean_prior_var.size() == c, "one EX mean prior variance per component");
  require(weights.size() == c + 1, "weights need one entry per EX component plus NEX");
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0, "mixture weights must be nonnegative");
    total += w;
  }
  require(std::abs(total - 1.0) < 1e-9, "mixture weights must sum to 1");
  for (double v : ex_mean_prior_var) require(v > 0.0, "EX mean prior variances must be positive");
  require(ig_shape > 0.0 && ig_rate > 0.0 && nex_var > 0.0,
          "EXNEX variance parameters must be positive");
  if (fixed_ex_var) {
    require(fixed_ex_var->size() == c, "one fixed EX variance per component");
    for (double v : *fixed_ex_var) require(v > 0.0, "fixed EX variances must be positive");
  }
}

namespace {

// Gaussian-mixture shrinkage model shared by BBHM (one EX component, no
// NEX) and EXNEX.
struct MixtureModel {
  std::vector<double> log_w;  // size C + 1, last entry NEX; -inf if absent
  std::vector<double> mean_prior_mean;
  std::vector<double> mean_prior_var;
  double ig_shape = 1.0;
  double ig_rate = 1.0;
  std::optional<std::vector<double>> fixed_var;
  std::vector<double> nex_mean;  // per arm
  double nex_var = 1.0;
};

double normal_logpdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

class MixtureChain {
 public:
  MixtureChain(const BasketData& data, const MixtureModel& model, const McmcConfig& cfg)
      : data_(data), model_(model), cfg_(cfg), rng_(cfg.seed) {
    const std::size_t k = data.arms(), c = model.mean_prior_mean.size();
    offset_.resize(k);
    theta_.resize(k);
    member_.assign(k, 0);
    log_step_.assign(k, std::log(cfg.proposal_scale));
    accepted_.assign(k, 0);
    for (std::size_t a = 0; a < k; ++a) {
      offset_[a] = logit(data.pi1[a]);
      theta_[a] = logit((data.y[a] + 0.5) / (data.n[a] + 1.0)) - offset_[a];
    }
    mu_ = model.mean_prior_mean;
    tau2_ = model.fixed_var ? *model.fixed_var : std::vector<double>(c, 1.0);
    log_shift_step_.assign(c, std::log(0.5));
  }

  template <class Sink>
  void run(Sink&& sink) {
    const long total = static_cast<long>(cfg_.burn_in) +
                       static_cast<long>(cfg_.n_keep) * cfg_.thin;
    for (long it = 0; it < total; ++it) {
      const bool burning = it < cfg_.burn_in;
      sweep(burning, 1.0 / std::pow(static_cast<double>(it) + 1.0, 0.6));
      if (!burning && (it - cfg_.burn_in + 1) % cfg_.thin == 0) sink(*this);
    }
  }

  const std::vector<double>& theta() const { return theta_; }
  const std::vector<double>& offset() const { return offset_; }
  const std::vector<std::size_t>& member() const { return member_; }
  std::size_t nex_index() const { return mu_.size(); }

  std::vector<double> acceptance() const {
    const double post = static_cast<double>(cfg_.n_keep) * cfg_.thin;
    std::vector<double> out(accepted_.size());
    for (std::size_t a = 0; a < out.size(); ++a) out[a] = accepted_[a] / post;
    return out;
  }

 private:
  double component_logpdf(std::size_t a, std::size_t c, double theta) const {
    if (c == nex_index())
      return model_.log_w[c] + normal_logpdf(theta, model_.nex_mean[a], model_.nex_var);
    return model_.log_w[c] + normal_logpdf(theta, mu_[c], tau2_[c]);
  }

  double prior_logpdf(std::size_t a, double theta) const {
    double hi = -std::numeric_limits<double>::infinity();
    std::vector<double>& terms = terms_;
    terms.clear();
    for (std::size_t c = 0; c <= nex_index(); ++c) {
      if (!std::isfinite(model_.log_w[c])) continue;
      terms.push_back(component_logpdf(a, c, theta));
      hi = std::max(hi, terms.back());
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - hi);
    return hi + std::log(s);
  }

  double loglik(std::size_t a, double theta) const {
    return binomial_loglik(data_.y[a], data_.n[a], theta + offset_[a]);
  }

  void sweep(bool burning, double gain) {
    for (std::size_t a = 0; a < theta_.size(); ++a) {
      // Membership summed out, so an arm can move between components freely.
      const double proposal = theta_[a] + std::exp(log_step_[a]) * rng_.normal();
      const double log_ratio = loglik(a, proposal) + prior_logpdf(a, proposal) -
                               loglik(a, theta_[a]) - prior_logpdf(a, theta_[a]);
      const double accept_prob = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
      if (rng_.uniform() < accept_prob) {
        theta_[a] = proposal;
        if (!burning) ++accepted_[a];
      }
      if (burning && cfg_.adapt) log_step_[a] += gain * (accept_prob - 0.44);
      draw_membership(a);
    }
    for (std::size_t c = 0; c < mu_.size(); ++c) {
      shift_component(c, burning, gain);
      update_component(c);
    }
  }

  void draw_membership(std::size_t a) {
    const double total = prior_logpdf(a, theta_[a]);
    double u = rng_.uniform();
    std::size_t last = 0;
    for (std::size_t c = 0; c <= nex_index(); ++c) {
      if (!std::isfinite(model_.log_w[c])) continue;
      last = c;
      u -= std::exp(component_logpdf(a, c, theta_[a]) - total);
      if (u < 0.0) {
        member_[a] = c;
        return;
      }
    }
    member_[a] = last;
  }

  // Translates mu_c together with its member arms. The within-component
  // prior is unchanged, which removes the strong mu / theta coupling when
  // tau_c^2 is small.
  void shift_component(std::size_t c, bool burning, double gain) {
    const double s = std::exp(log_shift_step_[c]) * rng_.normal();
    double log_ratio = normal_logpdf(mu_[c] + s, model_.mean_prior_mean[c],
                                     model_.mean_prior_var[c]) -
                       normal_logpdf(mu_[c], model_.mean_prior_mean[c], model_.mean_prior_var[c]);
    bool any = false;
    for (std::size_t a = 0; a < theta_.size(); ++a) {
      if (member_[a] != c) continue;
      any = true;
      log_ratio += loglik(a, theta_[a] + s) - loglik(a, theta_[a]);
    }
    if (!any) return;
    const double accept_prob = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
    if (rng_.uniform() < accept_prob) {
      mu_[c] += s;
      for (std::size_t a = 0; a < theta_.size(); ++a)
        if (member_[a] == c) theta_[a] += s;
    }
    if (burning && cfg_.adapt) log_shift_step_[c] += gain * (accept_prob - 0.44);
  }

  void update_component(std::size_t c) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t a = 0; a < theta_.size(); ++a) {
      if (member_[a] != c) continue;
      sum += theta_[a];
      ++count;
    }
    const double prec = count / tau2_[c] + 1.0 / model_.mean_prior_var[c];
    const double mean = (sum / tau2_[c] + model_.mean_prior_mean[c] / model_.mean_prior_var[c]) / prec;
    mu_[c] = rng_.normal(mean, std::sqrt(1.0 / prec));
    if (model_.fixed_var) return;
    double ss = 0.0;
    for (std::size_t a = 0; a < theta_.size(); ++a)
      if (member_[a] == c) ss += (theta_[a] - mu_[c]) * (theta_[a] - mu_[c]);
    tau2_[c] = rng_.inverse_gamma(model_.ig_shape + 0.5 * count, model_.ig_rate + 0.5 * ss);
  }

  const BasketData& data_;
  const MixtureModel& model_;
  const McmcConfig& cfg_;
  RandomStream rng_;
  std::vector<double> offset_;
  std::vector<double> theta_;
  std::vector<std::size_t> member_;
  std::vector<double> mu_;
  std::vector<double> tau2_;
  std::vector<double> log_step_;
  std::vector<double> log_shift_step_;
  std::vector<long> accepted_;
  mutable std::vector<double> terms_;
};

BasketReport fit_mixture(const BasketData& data, const MixtureModel& model,
                         const McmcConfig& cfg) {
  data.validate();
  cfg.validate();
  MixtureChain chain(data, model, cfg);
  const std::size_t k = data.arms();
  std::vector<long> above0(k, 0), above_mid(k, 0), ex(k, 0);
  std::vector<double> sum_p(k, 0.0);
  // Thresholds on the theta scale: p > pi  <=>  theta > logit(pi) - logit(pi1).
  std::vector<double> cut0(k), cut_mid(k);
  for (std::size_t a = 0; a < k; ++a) {
    cut0[a] = logit(data.pi0[a]) - logit(data.pi1[a]);
    cut_mid[a] = logit(0.5 * (data.pi0[a] + data.pi1[a])) - logit(data.pi1[a]);
  }
  chain.run([&](const MixtureChain& c) {
    for (std::size_t a = 0; a < k; ++a) {
      const double t = c.theta()[a];
      if (t > cut0[a]) ++above0[a];
      if (t > cut_mid[a]) ++above_mid[a];
      if (c.member()[a] != c.nex_index()) ++ex[a];
      sum_p[a] += inv_logit(t + c.offset()[a]);
    }
  });
  const double r = static_cast<double>(cfg.n_keep);
  BasketReport rep;
  rep.acceptance = chain.acceptance();
  for (std::size_t a = 0; a < k; ++a) {
    rep.pr_final.push_back(above0[a] / r);
    rep.pr_interim.push_back(above_mid[a] / r);
    rep.est_p.push_back(sum_p[a] / r);
    rep.ex_membership.push_back(ex[a] / r);
  }
  return rep;
}

}  // namespace

BasketReport bbhm_fit(const BasketData& data, const BbhmHyper& hyper, const McmcConfig& cfg) {
  hyper.validate();
  MixtureModel m;
  m.log_w = {0.0, -std::numeric_limits<double>::infinity()};
  m.mean_prior_mean = {hyper.theta0_mean};
  m.mean_prior_var = {hyper.theta0_var};
  m.ig_shape = hyper.ig_shape;
  m.ig_rate = hyper.ig_rate;
  if (hyper.fixed_sigma_sq) m.fixed_var = std::vector<double>{*hyper.fixed_sigma_sq};
  m.nex_mean.assign(data.arms(), 0.0);
  BasketReport rep = fit_mixture(data, m, cfg);
  rep.ex_membership.clear();
  return rep;
}

BasketReport exnex_fit(const BasketData& data, const ExnexHyper& hyper, const McmcConfig& cfg) {
  hyper.validate();
  data.validate();
  MixtureModel m;
  for (double w : hyper.weights)
    m.log_w.push_back(w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity());
  m.mean_prior_mean = hyper.ex_mean_prior_mean;
  m.mean_prior_var = hyper.ex_mean_prior_var;
  m.ig_shape = hyper.ig_shape;
  m.ig_rate = hyper.ig_rate;
  m.fixed_var = hyper.fixed_ex_var;
  for (std::size_t a = 0; a < data.arms(); ++a)
    m.nex_mean.push_back(logit(data.pi0[a]) - logit(data.pi1[a]) + hyper.nex_offset);
  m.nex_var = hyper.nex_var;
  return fit_mixture(data, m, cfg);
}

}  // namespace muce
