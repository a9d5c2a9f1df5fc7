#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "muce/mcmc.hpp"
#include "oracles.hpp"

using namespace muce;

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// E[X | X < 0] and E[X | X >= 0] for X ~ N(mu, sd^2), in long double so the
// far-tail ratio of density to mass does not underflow.
double trunc_mean(double mu, double sd, ZSide side) {
  const long double a = -mu / sd;
  const long double pdf = std::exp(-0.5L * a * a) / std::sqrt(2.0L * std::numbers::pi_v<long double>);
  const long double sqrt2 = std::numbers::sqrt2_v<long double>;
  if (side == ZSide::nonneg) return static_cast<double>(mu + sd * pdf / (0.5L * std::erfc(a / sqrt2)));
  return static_cast<double>(mu - sd * pdf / (0.5L * std::erfc(-a / sqrt2)));
}

TrialLayout one_dose_layout(int indications, double pi0) {
  return TrialLayout{indications, 1, std::vector<double>(static_cast<std::size_t>(indications), pi0),
                     29, {}};
}

TrialDataset one_dose_data(const std::vector<int>& n, const std::vector<int>& y) {
  TrialDataset d(n.size(), 1);
  for (std::size_t k = 0; k < n.size(); ++k) {
    d.n[k] = n[k];
    d.y[k] = y[k];
  }
  return d;
}

}  // namespace

TEST_CASE("truncated normal sampler") {
  RandomStream rng(3);
  const int draws = 200'000;
  struct Case {
    double mu, sd;
    ZSide side;
  };
  for (const Case& c : {Case{0.0, 1.0, ZSide::nonneg}, Case{0.0, 1.0, ZSide::neg},
                        Case{8.0, 1.0, ZSide::neg}, Case{-3.0, 2.0, ZSide::nonneg},
                        Case{50.0, 1.0, ZSide::neg}, Case{1.5, 0.3, ZSide::nonneg}}) {
    std::vector<double> x;
    x.reserve(draws);
    for (int r = 0; r < draws; ++r) {
      const double v = sample_trunc_normal(c.mu, c.sd, c.side, rng);
      REQUIRE(std::isfinite(v));
      if (c.side == ZSide::nonneg)
        REQUIRE(v >= 0.0);
      else
        REQUIRE(v < 0.0);
      x.push_back(v);
    }
    const double expect = trunc_mean(c.mu, c.sd, c.side);
    const double se = std::sqrt(var_of(x) / draws);
    CHECK(std::abs(mean_of(x) - expect) < 5.0 * se + 1e-12);
  }
  // Half-normal mean sqrt(2/pi).
  std::vector<double> x;
  for (int r = 0; r < draws; ++r) x.push_back(sample_trunc_normal(0.0, 1.0, ZSide::nonneg, rng));
  CHECK(mean_of(x) == doctest::Approx(0.7979).epsilon(0.005));
}

TEST_CASE("theta update without data recovers the prior mixture weight") {
  RandomStream rng(11);
  const double t0 = logit(0.2), w = 0.3;
  double theta = t0 + 1.0;
  long alt = 0;
  const long steps = 400'000;
  for (long s = 0; s < steps; ++s) {
    theta = update_theta(theta, t0, w, 0, 0, 2.5, 4.0, rng).theta;
    theta = prior_independence_step(theta, t0, w, 0, 0, 2.5, rng).theta;
    alt += theta > t0;
  }
  CHECK(std::abs(static_cast<double>(alt) / steps - w) < 0.01);
}

TEST_CASE("theta random walk matches the quadrature posterior") {
  const double pi0 = 0.2, t0 = logit(pi0), g = 2.5;
  struct Case {
    int y, n;
    double w;
  };
  const double w_star = oracle::single_arm(0, 0, pi0, setting(1)).pr_h1;
  for (const Case& c : {Case{6, 29, w_star}, Case{5, 10, 0.5}, Case{1, 10, 0.3}, Case{13, 29, 0.8}}) {
    const oracle::SideMoments m = oracle::side_moments(c.y, c.n, t0, g);
    const double z = c.w * m.mass[1] + (1 - c.w) * m.mass[0];
    const double pr = c.w * m.mass[1] / z;
    const double mean_p = (c.w * m.p[1] + (1 - c.w) * m.p[0]) / z;

    RandomStream rng(static_cast<std::uint64_t>(c.y * 100 + c.n));
    double theta = t0;
    long alt = 0, accepted = 0;
    double sum_p = 0.0;
    const long steps = 300'000;
    for (long s = 0; s < steps; ++s) {
      const ThetaStep st = update_theta(theta, t0, c.w, c.y, c.n, g, 1.2, rng);
      theta = st.theta;
      accepted += st.accepted;
      alt += theta > t0;
      sum_p += inv_logit(theta);
    }
    CHECK(std::abs(static_cast<double>(alt) / steps - pr) < 0.01);
    CHECK(std::abs(sum_p / steps - mean_p) < 0.01);
    CHECK(accepted > 0);
  }
}

TEST_CASE("independence step leaves the posterior invariant") {
  const double t0 = logit(0.2), g = 2.5, w = 0.6;
  const oracle::SideMoments m = oracle::side_moments(3, 10, t0, g);
  const double pr = w * m.mass[1] / (w * m.mass[1] + (1 - w) * m.mass[0]);
  RandomStream rng(8);
  double theta = t0 - 1.0;
  long alt = 0;
  const long steps = 300'000;
  for (long s = 0; s < steps; ++s) {
    theta = prior_independence_step(theta, t0, w, 3, 10, g, rng).theta;
    alt += theta > t0;
  }
  CHECK(std::abs(static_cast<double>(alt) / steps - pr) < 0.01);
}

TEST_CASE("latent score follows the side of theta") {
  RandomStream rng(4);
  const double t0 = 0.0;
  std::vector<double> pos, negs;
  for (int r = 0; r < 100'000; ++r) {
    const double a = update_z(0.5, t0, -0.4, 2.0, rng);
    const double b = update_z(-0.5, t0, -0.4, 2.0, rng);
    REQUIRE(a >= 0.0);
    REQUIRE(b < 0.0);
    pos.push_back(a);
    negs.push_back(b);
  }
  CHECK(mean_of(pos) == doctest::Approx(trunc_mean(-0.4, std::sqrt(2.0), ZSide::nonneg)).epsilon(0.01));
  CHECK(mean_of(negs) == doctest::Approx(trunc_mean(-0.4, std::sqrt(2.0), ZSide::neg)).epsilon(0.01));
  std::vector<double> half;
  for (int r = 0; r < 100'000; ++r) half.push_back(update_z(1.0, t0, 0.0, 1.0, rng));
  CHECK(std::abs(mean_of(half) - 0.7979) < 0.01);
  // theta exactly at the reference logit belongs to the null side.
  CHECK(update_z(t0, t0, 3.0, 1.0, rng) < 0.0);
}

TEST_CASE("Gaussian full conditionals") {
  const Hyperparameters h = setting(1);
  ArmMatrix<double> z(1, 1, 0.0);
  Effects e{{0.0}, {0.0}, 0.0, 0.0};
  const NormalLaw xi = xi_conditional(z, e, 0, h);
  CHECK(xi.mean == doctest::Approx(0.0));
  CHECK(xi.var == doctest::Approx(0.5));

  // Two doses, z = (1, 3), eta = (0.5, -0.5), xi0 = 2:
  // precision 2 + 1 = 3, mean (1 - 0.5 + 3 + 0.5 + 2) / 3 = 2.
  ArmMatrix<double> z2(1, 2);
  z2(0, 0) = 1.0;
  z2(0, 1) = 3.0;
  Effects e2{{0.0}, {0.5, -0.5}, 2.0, 0.0};
  const NormalLaw x2 = xi_conditional(z2, e2, 0, h);
  CHECK(x2.var == doctest::Approx(1.0 / 3.0));
  CHECK(x2.mean == doctest::Approx(2.0));

  Hyperparameters s3 = setting(3);
  Effects e3{{1.0, -1.0, 2.0}, {0.0}, 0.0, 0.0};
  const NormalLaw x0 = xi0_conditional(e3, s3);
  CHECK(x0.var == doctest::Approx(1.0 / 4.0));
  CHECK(x0.mean == doctest::Approx((2.0 - 3.0) / 4.0));
  const NormalLaw y0 = eta0_conditional(e3, s3);
  CHECK(y0.var == doctest::Approx(0.5));
  CHECK(y0.mean == doctest::Approx(-1.5));
}

namespace {

// Joint Gaussian of (xi_1, xi_2, eta_1, eta_2, xi0, eta0, Z_11, Z_12, Z_21,
// Z_22) written as a linear map of independent standard normals, then
// conditioned on Z by the covariance (Schur complement) formula.
struct Conditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

Conditional condition_2x2(const Hyperparameters& h, const Eigen::Vector4d& z) {
  // Independent sources: u_xi0, u_eta0, u_xi1, u_xi2, u_eta1, u_eta2, e_11..e_22.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(10, 10);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(10);
  const double sx0 = std::sqrt(h.sigma_xi0_sq), se0 = std::sqrt(h.sigma_eta0_sq);
  const double sx = std::sqrt(h.sigma_xi_sq), se = std::sqrt(h.sigma_eta_sq);
  const double s0 = std::sqrt(h.sigma0_sq);
  // Rows 4, 5: xi0, eta0.
  A(4, 0) = sx0;
  mu(4) = h.mu_xi0;
  A(5, 1) = se0;
  mu(5) = h.mu_eta0;
  for (int i = 0; i < 2; ++i) {
    A.row(i) = A.row(4);
    A(i, 2 + i) = sx;
    mu(i) = h.mu_xi0;
    A.row(2 + i) = A.row(5);
    A(2 + i, 4 + i) = se;
    mu(2 + i) = h.mu_eta0;
  }
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const int r = 6 + 2 * i + j;
      A.row(r) = A.row(i) + A.row(2 + j);
      A(r, 6 + 2 * i + j) = s0;
      mu(r) = mu(i) + mu(2 + j);
    }
  const Eigen::MatrixXd S = A * A.transpose();
  const Eigen::MatrixXd Sxx = S.topLeftCorner(6, 6);
  const Eigen::MatrixXd Sxz = S.topRightCorner(6, 4);
  const Eigen::MatrixXd Szz = S.bottomRightCorner(4, 4);
  const Eigen::MatrixXd K = Sxz * Szz.inverse();
  return {mu.head(6) + K * (z - mu.tail(4)), Sxx - K * Sxz.transpose()};
}

}  // namespace

TEST_CASE("block effects draw matches the Gaussian conditional") {
  for (int s : {1, 2, 3, 4, 5}) {
    const Hyperparameters h = setting(s);
    ArmMatrix<double> z(2, 2);
    z(0, 0) = 0.7;
    z(0, 1) = -1.2;
    z(1, 0) = 2.5;
    z(1, 1) = -0.1;
    const Conditional c = condition_2x2(h, Eigen::Vector4d(0.7, -1.2, 2.5, -0.1));
    EffectsBlock block(2, 2, h);
    const std::vector<double> m = block.mean(z);
    const std::vector<double> cov = block.covariance();
    REQUIRE(m.size() == 6);
    REQUIRE(cov.size() == 36);
    for (int a = 0; a < 6; ++a) {
      CHECK(m[static_cast<std::size_t>(a)] == doctest::Approx(c.mean(a)).epsilon(1e-9));
      for (int b = 0; b < 6; ++b)
        CHECK(std::abs(cov[static_cast<std::size_t>(6 * a + b)] - c.cov(a, b)) < 1e-9);
    }

    if (s == 1) {
      RandomStream rng(17);
      const int draws = 100'000;
      std::vector<double> sum(6, 0.0);
      double cross = 0.0;
      for (int r = 0; r < draws; ++r) {
        const Effects e = block.draw(z, rng);
        const double v[6] = {e.xi[0], e.xi[1], e.eta[0], e.eta[1], e.xi0, e.eta0};
        for (int a = 0; a < 6; ++a) sum[static_cast<std::size_t>(a)] += v[a];
        cross += (v[0] - c.mean(0)) * (v[4] - c.mean(4));
      }
      for (int a = 0; a < 6; ++a)
        CHECK(std::abs(sum[static_cast<std::size_t>(a)] / draws - c.mean(a)) <
              5.0 * std::sqrt(c.cov(a, a) / draws));
      CHECK(std::abs(cross / draws - c.cov(0, 4)) < 0.01);
    }
  }
}

TEST_CASE("coordinate sweep agrees with the block conditional") {
  const Hyperparameters h = setting(1);
  ArmMatrix<double> z(2, 2);
  z(0, 0) = 0.7;
  z(0, 1) = -1.2;
  z(1, 0) = 2.5;
  z(1, 1) = -0.1;
  const Conditional c = condition_2x2(h, Eigen::Vector4d(0.7, -1.2, 2.5, -0.1));
  RandomStream rng(23);
  Effects e{{0.0, 0.0}, {0.0, 0.0}, 0.0, 0.0};
  const int sweeps = 400'000;
  for (int r = 0; r < 1000; ++r) e = update_effects(z, e, h, rng);
  std::vector<std::vector<double>> chain(6);
  for (int r = 0; r < sweeps; ++r) {
    e = update_effects(z, e, h, rng);
    const double v[6] = {e.xi[0], e.xi[1], e.eta[0], e.eta[1], e.xi0, e.eta0};
    for (std::size_t a = 0; a < 6; ++a) chain[a].push_back(v[a]);
  }
  for (std::size_t a = 0; a < 6; ++a) {
    const Eigen::Index ia = static_cast<Eigen::Index>(a);
    CAPTURE(a);
    CHECK(std::abs(mean_of(chain[a]) - c.mean(ia)) < 0.02);
    CHECK(std::abs(var_of(chain[a]) - c.cov(ia, ia)) < 0.02);
  }
}

TEST_CASE("fit without data reproduces the prior") {
  McmcConfig cfg{2000, 20000, 1, 5, 1.0, true};
  for (int s : {1, 3}) {
    const Hyperparameters h = setting(s);
    const TrialLayout l = one_dose_layout(2, 0.2);
    const PosteriorReport r = muce_fit(one_dose_data({0, 0}, {0, 0}), l, h, cfg);
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(std::abs(r.pr_h1[k] - marginal_prior_h1(h)) < 0.02);
  }
  const PosteriorReport r =
      muce_fit(one_dose_data({0}, {0}), one_dose_layout(1, 0.3), setting(1), cfg);
  // The prior median of p is pi0 on either side; the logit mean sits at pi0.
  CHECK(r.pr_h1[0] == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("single-arm posterior matches quadrature") {
  McmcConfig cfg{2000, 40000, 1, 9, 1.0, true};
  struct Case {
    int y, n, s;
  };
  for (const Case& c : {Case{6, 29, 1}, Case{5, 10, 1}, Case{1, 10, 1}, Case{6, 29, 3}, Case{10, 20, 2}}) {
    const Hyperparameters h = setting(c.s);
    const oracle::ArmPosterior o = oracle::single_arm(c.y, c.n, 0.2, h);
    const TrialDataset d = one_dose_data({c.n}, {c.y});
    const TrialLayout l = one_dose_layout(1, 0.2);
    const PosteriorReport mean = muce_fit(d, l, h, cfg);
    CHECK(std::abs(mean.pr_h1[0] - o.pr_h1) < 0.01);
    CHECK(std::abs(mean.est_p[0] - o.mean_p) < 0.01);
    const PosteriorReport lm = muce_fit(d, l, h, cfg, {PointEstimate::logit_mean, false});
    CHECK(std::abs(lm.est_p[0] - oracle::inv_logit(o.mean_theta)) < 0.01);
    CHECK(lm.pr_h1 == mean.pr_h1);
  }
}

TEST_CASE("four indications, one dose, match the integrated posterior") {
  McmcConfig cfg{2000, 20000, 1, 13, 1.0, true};
  const std::vector<int> n{20, 20, 20, 20}, y{4, 10, 9, 8};
  for (int s : {1, 2, 3, 4, 5}) {
    const Hyperparameters h = setting(s);
    const auto o = oracle::single_dose(n, y, 0.2, h);
    const PosteriorReport r = muce_fit(one_dose_data(n, y), one_dose_layout(4, 0.2), h, cfg);
    for (std::size_t k = 0; k < 4; ++k) {
      CAPTURE(s);
      CAPTURE(k);
      CHECK(std::abs(r.pr_h1[k] - o[k].pr_h1) < 0.02);
      CHECK(std::abs(r.est_p[k] - o[k].mean_p) < 0.01);
      CHECK(r.acceptance[k] >= 0.2);
      CHECK(r.acceptance[k] <= 0.6);
    }
  }
}

TEST_CASE("fits are deterministic in the seed") {
  McmcConfig cfg{500, 2000, 1, 42, 1.0, true};
  const TrialDataset d = one_dose_data({10, 10, 10}, {1, 5, 6});
  const TrialLayout l = one_dose_layout(3, 0.2);
  const PosteriorReport a = muce_fit(d, l, setting(1), cfg);
  const PosteriorReport b = muce_fit(d, l, setting(1), cfg);
  CHECK(a == b);
  cfg.seed = 43;
  CHECK_FALSE(muce_fit(d, l, setting(1), cfg).pr_h1 == a.pr_h1);

  cfg.seed = 42;
  const PosteriorDraws draws = muce_sample(d, l, setting(1), cfg);
  const PosteriorReport c = summarize(draws, cfg);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(c.pr_h1[k] == doctest::Approx(a.pr_h1[k]).epsilon(1e-12));
    CHECK(c.est_p[k] == doctest::Approx(a.est_p[k]).epsilon(1e-12));
  }
  CHECK(draws.n_draws == 2000);
  CHECK(draws.theta.size() == 6000);
}

TEST_CASE("thinning keeps every k-th draw") {
  McmcConfig cfg{100, 300, 3, 2, 1.0, true};
  const PosteriorDraws d =
      muce_sample(one_dose_data({10}, {3}), one_dose_layout(1, 0.2), setting(1), cfg);
  CHECK(d.n_draws == 300);
}

TEST_CASE("posterior H1 probability agrees with the theta draws") {
  McmcConfig cfg{500, 4000, 1, 3, 1.0, true};
  const TrialDataset d = one_dose_data({10, 20}, {2, 9});
  const TrialLayout l = one_dose_layout(2, 0.2);
  const PosteriorDraws draws = muce_sample(d, l, setting(1), cfg);
  const PosteriorReport r = summarize(draws, cfg);
  for (int k = 0; k < 2; ++k) {
    const std::vector<double> chain = draws.theta_chain(k);
    long alt = 0;
    for (std::size_t t = 0; t < chain.size(); ++t) {
      const bool a = chain[t] > draws.theta0[static_cast<std::size_t>(k)];
      const bool zpos = draws.z[t * 2 + static_cast<std::size_t>(k)] >= 0.0;
      CHECK(a == zpos);
      alt += a;
    }
    CHECK(r.pr_h1[static_cast<std::size_t>(k)] ==
          doctest::Approx(static_cast<double>(alt) / chain.size()));
  }
}

TEST_CASE("exchangeable arms get matching posteriors") {
  // Two indications with identical data; averaged over seeds the fitted
  // probabilities coincide.
  const TrialDataset d = one_dose_data({15, 15, 15}, {5, 5, 1});
  const TrialLayout l = one_dose_layout(3, 0.2);
  double diff = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    McmcConfig cfg{500, 2000, 1, seed, 1.0, true};
    const PosteriorReport r = muce_fit(d, l, setting(1), cfg, {PointEstimate::mean, false});
    diff += r.pr_h1[0] - r.pr_h1[1];
  }
  CHECK(std::abs(diff / 50) < 0.01);
}

TEST_CASE("a pessimistic prior lowers posterior probabilities") {
  const TrialDataset d = one_dose_data({10, 10, 10, 10}, {1, 5, 6, 3});
  const TrialLayout l = one_dose_layout(4, 0.2);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    McmcConfig cfg{500, 2000, 1, seed, 1.0, true};
    const PosteriorReport a = muce_fit(d, l, setting(1), cfg, {PointEstimate::mean, false});
    const PosteriorReport b = muce_fit(d, l, setting(3), cfg, {PointEstimate::mean, false});
    for (std::size_t k = 0; k < 4; ++k) CHECK(b.pr_h1[k] < a.pr_h1[k]);
  }
}

TEST_CASE("multi-dose layout runs and respects bounds") {
  TrialLayout l{2, 3, {0.2, 0.3}, 29, {10}};
  TrialDataset d(2, 3);
  const int ns[6] = {10, 10, 0, 29, 29, 29}, ys[6] = {0, 3, 0, 10, 12, 29};
  for (int k = 0; k < 6; ++k) {
    d.n[static_cast<std::size_t>(k)] = ns[k];
    d.y[static_cast<std::size_t>(k)] = ys[k];
  }
  McmcConfig cfg{500, 2000, 1, 1, 1.0, true};
  const PosteriorReport r = muce_fit(d, l, setting(1), cfg);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(r.pr_h1[k] >= 0.0);
    CHECK(r.pr_h1[k] <= 1.0);
    CHECK(r.est_p[k] > 0.0);
    CHECK(r.est_p[k] < 1.0);
    CHECK(r.acceptance[k] > 0.05);
  }
  CHECK(r.pr_h1(1, 2) > 0.99);
  CHECK(r.pr_h1(0, 0) < r.pr_h1(0, 1));

  TrialDataset bad = d;
  bad.y[0] = 11;
  CHECK_THROWS(muce_fit(bad, l, setting(1), cfg));
  TrialDataset wrong(3, 3);
  CHECK_THROWS_AS(muce_fit(wrong, l, setting(1), cfg), std::invalid_argument);
}

TEST_CASE("effective sample size") {
  RandomStream rng(99);
  std::vector<double> iid(20000);
  for (double& v : iid) v = rng.normal(0.0, 1.0);
  const double e_iid = effective_sample_size(iid);
  CHECK(e_iid > 0.8 * 20000);
  CHECK(e_iid <= 20000);

  // AR(1) with rho = 0.9: ESS / n = (1 - rho) / (1 + rho).
  std::vector<double> ar(20000);
  double x = 0.0;
  for (double& v : ar) {
    x = 0.9 * x + std::sqrt(1 - 0.81) * rng.normal(0.0, 1.0);
    v = x;
  }
  const double expected = 20000 * 0.1 / 1.9;
  CHECK(std::abs(effective_sample_size(ar) - expected) < 0.25 * expected);

  const std::vector<double> flat(100, 2.0);
  CHECK(effective_sample_size(flat) == 100.0);
  CHECK(std::isnan(split_chain_ratio(flat)));
  CHECK(split_chain_ratio(iid) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("diagnostics flag a stuck chain") {
  PosteriorDraws d;
  d.n_draws = 1000;
  d.n_indications = 2;
  d.n_doses = 1;
  d.acceptance = {0.4, 0.0};
  d.theta0 = {logit(0.2), logit(0.2)};
  RandomStream rng(1);
  for (int r = 0; r < 1000; ++r) {
    d.theta.push_back(rng.normal(0.0, 1.0));
    d.theta.push_back(-1.0);
  }
  const auto diag = diagnostics(d);
  REQUIRE(diag.size() == 2);
  CHECK_FALSE(diag[0].flagged);
  CHECK(diag[1].flagged);
  CHECK(diag[0].acceptance == 0.4);
}
