#pragma once

// Reference values computed by deterministic quadrature and enumeration,
// coded separately from the library's samplers.

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/binomial.hpp>

#include <cmath>
#include <numbers>
#include <tuple>
#include <vector>

#include "muce/model.hpp"

namespace oracle {

inline double gk(auto&& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, 1e-11);
}

// Half-line integral of f over (t0, inf) or (-inf, t0].
inline double half_line(auto&& f, double t0, bool upper) {
  boost::math::quadrature::exp_sinh<double> q;
  if (upper) return q.integrate([&](double t) { return f(t0 + t); });
  return q.integrate([&](double t) { return f(t0 - t); });
}

inline double lik(int y, int n, double theta) {
  // Binomial kernel without the coefficient, written as a product of powers.
  const double p = 1.0 / (1.0 + std::exp(-theta));
  return std::pow(p, y) * std::pow(1.0 - p, n - y);
}

inline double half_cauchy(double theta, double t0, double g) {
  const double u = (theta - t0) / g;
  return 2.0 / (std::numbers::pi * g * (1.0 + u * u));
}

// Integrals of Bin * TC_side, theta * Bin * TC_side and p * Bin * TC_side.
struct SideMoments {
  double mass[2];
  double theta[2];
  double p[2];
};

inline SideMoments side_moments(int y, int n, double t0, double g) {
  SideMoments m{};
  for (int s = 0; s < 2; ++s) {
    const bool upper = s == 1;
    auto f = [&](double t) { return lik(y, n, t) * half_cauchy(t, t0, g); };
    m.mass[s] = half_line(f, t0, upper);
    m.theta[s] = half_line([&](double t) { return t * f(t); }, t0, upper);
    m.p[s] = half_line([&](double t) { return f(t) / (1.0 + std::exp(-t)); }, t0, upper);
  }
  return m;
}

struct ArmPosterior {
  double pr_h1;
  double mean_theta;
  double mean_p;
};

inline double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// I = J = 1: the mixture weight is the marginal prior Pr(Z >= 0).
inline ArmPosterior single_arm(int y, int n, double pi0, const muce::Hyperparameters& h) {
  const double var =
      h.sigma0_sq + h.sigma_xi_sq + h.sigma_eta_sq + h.sigma_xi0_sq + h.sigma_eta0_sq;
  const double w = phi_cdf((h.mu_xi0 + h.mu_eta0) / std::sqrt(var));
  const SideMoments m = side_moments(y, n, std::log(pi0 / (1.0 - pi0)), h.gamma);
  const double z = w * m.mass[1] + (1.0 - w) * m.mass[0];
  return {w * m.mass[1] / z, (w * m.theta[1] + (1.0 - w) * m.theta[0]) / z,
          (w * m.p[1] + (1.0 - w) * m.p[0]) / z};
}

// One dose, I indications. Conditional on S = xi0 + eta_1, the latent
// scores are iid N(S, sigma_xi^2 + sigma0^2), so the posterior reduces to a
// one-dimensional integral over S.
inline std::vector<ArmPosterior> single_dose(const std::vector<int>& n,
                                             const std::vector<int>& y, double pi0,
                                             const muce::Hyperparameters& h) {
  const std::size_t K = n.size();
  const double t0 = std::log(pi0 / (1.0 - pi0));
  std::vector<SideMoments> m;
  for (std::size_t k = 0; k < K; ++k) m.push_back(side_moments(y[k], n[k], t0, h.gamma));
  const double mean_s = h.mu_xi0 + h.mu_eta0;
  const double sd_s = std::sqrt(h.sigma_xi0_sq + h.sigma_eta0_sq + h.sigma_eta_sq);
  const double sd_z = std::sqrt(h.sigma_xi_sq + h.sigma0_sq);
  const boost::math::normal_distribution<double> prior_s(mean_s, sd_s);

  // kind: 0 marginal, 1 H1 mass of arm k, 2 theta moment of arm k, 3 p moment.
  auto integrand = [&](double s, std::size_t arm, int kind) {
    const double w = phi_cdf(s / sd_z);
    double prod = boost::math::pdf(prior_s, s);
    for (std::size_t k = 0; k < K; ++k) {
      if (k == arm && kind == 1)
        prod *= w * m[k].mass[1];
      else if (k == arm && kind == 2)
        prod *= w * m[k].theta[1] + (1.0 - w) * m[k].theta[0];
      else if (k == arm && kind == 3)
        prod *= w * m[k].p[1] + (1.0 - w) * m[k].p[0];
      else
        prod *= w * m[k].mass[1] + (1.0 - w) * m[k].mass[0];
    }
    return prod;
  };
  const double lo = mean_s - 12.0 * sd_s, hi = mean_s + 12.0 * sd_s;
  auto integrate = [&](std::size_t arm, int kind) {
    auto f = [&](double s) { return integrand(s, arm, kind); };
    if (lo < 0.0 && hi > 0.0) return gk(f, lo, 0.0) + gk(f, 0.0, hi);
    return gk(f, lo, hi);
  };
  const double z = integrate(K, 0);
  std::vector<ArmPosterior> out;
  for (std::size_t k = 0; k < K; ++k)
    out.push_back({integrate(k, 1) / z, integrate(k, 2) / z, integrate(k, 3) / z});
  return out;
}

inline double inv_logit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

// BBHM with one arm: theta_1 ~ N(m0, v0 + sigma^2), sigma^2 ~ IG(a, b).
struct BasketTail {
  double pr_final;
  double pr_interim;
};

inline BasketTail bbhm_single_arm(int y, int n, double pi0, double pi1, double m0, double v0,
                                  double a, double b) {
  const double off = std::log(pi1 / (1.0 - pi1));
  auto prior = [&](double t) {
    boost::math::quadrature::exp_sinh<double> q;
    return q.integrate([&](double s2) {
      const double ig = std::exp(a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(s2) - b / s2);
      return normal_pdf(t, m0, v0 + s2) * ig;
    });
  };
  auto post = [&](double t) { return lik(y, n, t + off) * prior(t); };
  const double cut0 = std::log(pi0 / (1.0 - pi0)) - off;
  const double mid = 0.5 * (pi0 + pi1);
  const double cut_mid = std::log(mid / (1.0 - mid)) - off;
  const double lo = -60.0, hi = 60.0;
  const double z = gk(post, lo, cut0) + gk(post, cut0, hi);
  return {gk(post, cut0, hi) / z, gk(post, cut_mid, hi) / z};
}

// Single arm with a fixed normal prior on theta = logit(p) - logit(pi1).
inline BasketTail normal_prior_arm(int y, int n, double pi0, double pi1, double mean, double var) {
  const double off = std::log(pi1 / (1.0 - pi1));
  auto post = [&](double t) { return lik(y, n, t + off) * normal_pdf(t, mean, var); };
  const double sd = std::sqrt(var);
  const double lo = mean - 14.0 * sd - 30.0, hi = mean + 14.0 * sd + 30.0;
  const double cut0 = std::log(pi0 / (1.0 - pi0)) - off;
  const double mid = 0.5 * (pi0 + pi1);
  const double cut_mid = std::log(mid / (1.0 - mid)) - off;
  const double z = gk(post, lo, cut0) + gk(post, cut0, hi);
  return {gk(post, cut0, hi) / z, gk(post, cut_mid, hi) / z};
}

// EXNEX, two arms, one EX component with mean ~ N(m, s2) and fixed
// variance tau2; NEX component N(nex_k, v_nex) per arm. The four membership
// configurations are enumerated and theta is integrated by nested quadrature.
inline std::vector<BasketTail> exnex_two_arms(const int n[2], const int y[2], double pi0,
                                              double pi1, double w_ex, double m, double s2,
                                              double tau2, double v_nex) {
  const double off = std::log(pi1 / (1.0 - pi1));
  const double nex = std::log(pi0 / (1.0 - pi0)) - off;
  auto prior = [&](double t1, double t2) {
    const double w_nex = 1.0 - w_ex;
    // Both EX: bivariate normal with common-mean covariance s2.
    const double v = s2 + tau2;
    const double det = v * v - s2 * s2;
    const double d1 = t1 - m, d2 = t2 - m;
    const double q = (v * d1 * d1 - 2.0 * s2 * d1 * d2 + v * d2 * d2) / det;
    const double both = std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(det));
    return w_ex * w_ex * both +
           w_ex * w_nex * normal_pdf(t1, m, v) * normal_pdf(t2, nex, v_nex) +
           w_nex * w_ex * normal_pdf(t1, nex, v_nex) * normal_pdf(t2, m, v) +
           w_nex * w_nex * normal_pdf(t1, nex, v_nex) * normal_pdf(t2, nex, v_nex);
  };
  const double cut0 = std::log(pi0 / (1.0 - pi0)) - off;
  const double mid = 0.5 * (pi0 + pi1);
  const double cut_mid = std::log(mid / (1.0 - mid)) - off;
  const double lo = -25.0, hi = 25.0;
  auto inner = [&](double t1, double a, double b) {
    return gk([&](double t2) { return lik(y[1], n[1], t2 + off) * prior(t1, t2); }, a, b);
  };
  auto outer = [&](double a1, double b1, double a2, double b2) {
    return gk([&](double t1) { return lik(y[0], n[0], t1 + off) * inner(t1, a2, b2); }, a1, b1);
  };
  const double z = outer(lo, hi, lo, hi);
  return {{outer(cut0, hi, lo, hi) / z, outer(cut_mid, hi, lo, hi) / z},
          {outer(lo, hi, cut0, hi) / z, outer(lo, hi, cut_mid, hi) / z}};
}

// Exact two-stage rejection probability by direct double summation.
inline double simon_reject(int r1, int n1, int r, int N, double p) {
  auto pmf = [&](int k, int m) {
    return boost::math::binomial_coefficient<double>(static_cast<unsigned>(m),
                                                     static_cast<unsigned>(k)) *
           std::pow(p, k) * std::pow(1.0 - p, m - k);
  };
  double s = 0.0;
  for (int y1 = r1 + 1; y1 <= n1; ++y1)
    for (int y2 = 0; y2 <= N - n1; ++y2)
      if (y1 + y2 > r) s += pmf(y1, n1) * pmf(y2, N - n1);
  return s;
}

inline double simon_pet(int r1, int n1, double p) {
  double s = 0.0;
  for (int y1 = 0; y1 <= r1; ++y1)
    s += boost::math::binomial_coefficient<double>(static_cast<unsigned>(n1),
                                                   static_cast<unsigned>(y1)) *
         std::pow(p, y1) * std::pow(1.0 - p, n1 - y1);
  return s;
}

struct SimonTuple {
  int r1, n1, r, N;
  double en0;
};

// Brute force over (r1, n1, N) with a linear scan over r, using the direct
// double sums above; optimal criterion with the documented tie-break.
inline SimonTuple simon_brute_force_optimal(double p0, double p1, double alpha, double beta,
                                            int n_max) {
  SimonTuple best{-1, -1, -1, -1, 1e300};
  for (int N = 2; N <= n_max; ++N) {
    for (int n1 = 1; n1 < N; ++n1) {
      for (int r1 = 0; r1 < n1; ++r1) {
        const double pet = simon_pet(r1, n1, p0);
        const double en = n1 + (1.0 - pet) * (N - n1);
        if (en > best.en0 + 1e-9) continue;
        for (int r = r1; r < N; ++r) {
          if (simon_reject(r1, n1, r, N, p0) > alpha) continue;
          if (simon_reject(r1, n1, r, N, p1) < 1.0 - beta) break;
          const bool better = en < best.en0 - 1e-12 ||
                              (std::abs(en - best.en0) <= 1e-12 &&
                               std::tie(N, n1, r1, r) < std::tie(best.N, best.n1, best.r1, best.r));
          if (better) best = {r1, n1, r, N, en};
          break;
        }
      }
    }
  }
  return best;
}

}  // namespace oracle
