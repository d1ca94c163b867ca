#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dmdd/diffusion.hpp"
#include "dmdd/jamming.hpp"
#include "dmdd/score_model.hpp"
#include "helpers.hpp"

using namespace dmdd;

TEST_CASE("make_vp_schedule: closed form and invariants") {
  const DiffusionSchedule s = make_vp_schedule(200, 0.1, 20.0);
  CHECK(s.times.size() == 200);
  CHECK(s.times.front() == doctest::Approx(1.0 / 200));
  CHECK(s.times.back() == doctest::Approx(1.0));
  CHECK(s.beta_bar_at(0.0) == 1.0);
  CHECK(s.b_at(0.0) == 0.0);
  CHECK(s.beta_bar.back() == doctest::Approx(std::exp(-5.025)).epsilon(1e-12));
  CHECK(s.beta_bar.back() <= 1e-2);
  for (std::size_t m = 0; m < s.times.size(); ++m) {
    CHECK(std::abs(s.beta_bar[m] * s.beta_bar[m] + s.b[m] * s.b[m] - 1.0) < 1e-14);
    if (m > 0) CHECK(s.beta_bar[m] < s.beta_bar[m - 1]);
  }
  CHECK(s.drift_coef(0.5) == doctest::Approx(-0.5 * (0.1 + 0.5 * 19.9)));
  CHECK(s.diff_coef(1.0) == doctest::Approx(std::sqrt(20.0)));
  CHECK_THROWS_AS(make_vp_schedule(1), Error);
  CHECK_THROWS_AS(make_vp_schedule(10, 2.0, 1.0), Error);
  CHECK_THROWS_AS(make_vp_schedule(10, 0.0, 1.0), Error);
}

TEST_CASE("forward_perturb: kernel moments") {
  const DiffusionSchedule s = make_vp_schedule();
  Rng rng(4);
  CVector i0(4);
  i0 << cplx(1.0, 2.0), cplx(-0.5, 0.0), cplx(0.0, 3.0), cplx(2.0, -1.0);
  CHECK((forward_perturb(i0, 0.0, s, rng) - i0).norm() == 0.0);

  const int draws = 10000;
  double second = 0.0;
  for (int d = 0; d < draws; ++d) second += forward_perturb(i0, 1.0, s, rng).squaredNorm();
  CHECK(second / (4.0 * draws) == doctest::Approx(2.0).epsilon(0.05));

  CVector mean = CVector::Zero(4);
  for (int d = 0; d < draws; ++d) mean += forward_perturb(i0, 0.5, s, rng);
  mean /= draws;
  // Pooled over the 8 real coordinates: sum of squared z-scores is
  // chi-square with 8 dof; 23.6 is its 3-sigma (99.73%) quantile.
  const double se = s.b_at(0.5) / std::sqrt(double(draws));
  const CVector z = (mean - s.beta_bar_at(0.5) * i0) / se;
  CHECK(z.squaredNorm() < 23.6);
}

TEST_CASE("conditional_score_target") {
  const DiffusionSchedule s = make_vp_schedule();
  Rng rng(5);
  const CVector i0 = complex_normal_vector(rng, 6, 1.0);
  const double t = 0.4;
  CHECK(conditional_score_target(s.beta_bar_at(t) * i0, i0, t, s).norm() < 1e-12);
  CHECK_THROWS_AS(conditional_score_target(i0, i0, 0.0, s), Error);

  // Scalar plug-in: b^2 = 0.5 at the time where beta_bar^2 = 0.5.
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (s.b_sq_at(mid) < 0.5 ? lo : hi) = mid;
  }
  const double th = 0.5 * (lo + hi);
  CVector one(1), zero_i0(1);
  one << 1.0;
  zero_i0 << 0.0;
  CHECK(conditional_score_target(one, zero_i0, th, s)[0].real() == doctest::Approx(-1.0).epsilon(1e-9));

  SUBCASE("zero conditional mean") {
    CVector acc = CVector::Zero(6);
    const int draws = 20000;
    for (int d = 0; d < draws; ++d) acc += conditional_score_target(forward_perturb(i0, t, s, rng), i0, t, s);
    acc /= draws;
    // Per-component std of the target is 1 / (sqrt(2) b).
    const double se = 1.0 / (std::sqrt(2.0) * s.b_at(t) * std::sqrt(double(draws)));
    CHECK(acc.cwiseAbs().maxCoeff() < 4.0 * se);
  }
  SUBCASE("matches finite differences of the log kernel") {
    const CVector it = forward_perturb(i0, t, s, rng);
    const double bb = s.beta_bar_at(t), b2 = s.b_sq_at(t);
    auto logp = [&](const CVector& v) { return -(v - bb * i0).squaredNorm() / (2.0 * b2); };
    const CVector g = conditional_score_target(it, i0, t, s);
    const double h = 1e-4;
    for (int n = 0; n < 6; ++n) {
      CVector p = it, m = it;
      p[n] += h;
      m[n] -= h;
      const double d_re = (logp(p) - logp(m)) / (2 * h);
      p = it;
      m = it;
      p[n] += cplx(0, h);
      m[n] -= cplx(0, h);
      const double d_im = (logp(p) - logp(m)) / (2 * h);
      const cplx fd = 0.5 * cplx(d_re, d_im);
      CHECK(std::abs(fd - g[n]) <= 1e-5 * std::max(1.0, std::abs(g[n])));
    }
  }
}

TEST_CASE("corrector_step") {
  Rng rng(6);
  CVector i(1), grad(1), z(1);
  i << 0.0;
  grad << 2.0;
  z << 1.0;
  StepInfo info;
  const CVector out = corrector_step(i, grad, z, 1.0, &info);
  CHECK(info.step_size == doctest::Approx(0.5));
  CHECK(out[0].real() == doctest::Approx(2.0));
  CHECK(out[0].imag() == doctest::Approx(0.0));

  CVector x = complex_normal_vector(rng, 5, 1.0);
  StepInfo skip;
  CHECK((corrector_step(x, CVector::Zero(5), rng, 1.0, &skip) - x).norm() == 0.0);
  CHECK(skip.skipped);
}

TEST_CASE("corrector_step: Langevin chain approaches the Gaussian target") {
  // Target CN(0, 1) per component: grad = -2 i. KS distance of the pooled
  // real parts against N(0, 1/2) must shrink as the chains mix.
  Rng rng(7);
  const int chains = 200, dim = 64;
  std::vector<CVector> state(chains, CVector::Constant(dim, cplx(3.0, 0.0)));
  auto ks = [&]() {
    std::vector<double> v;
    for (const auto& x : state)
      for (int n = 0; n < dim; ++n) v.push_back(x[n].real());
    std::sort(v.begin(), v.end());
    const double total = static_cast<double>(v.size());
    double d = 0.0;
    for (std::size_t c = 0; c < v.size(); ++c) {
      const double cdf = 0.5 * std::erfc(-v[c]);
      d = std::max({d, std::abs(cdf - c / total), std::abs(cdf - (c + 1) / total)});
    }
    return d;
  };
  std::vector<double> dist;
  for (int step = 0; step <= 100; ++step) {
    if (step % 25 == 0) dist.push_back(ks());
    for (auto& x : state) x = corrector_step(x, -2.0 * x, rng, 0.1);
  }
  CHECK(dist.back() < dist.front());
  CHECK(dist.back() < 0.05);
}

TEST_CASE("predictor_step fixtures") {
  CVector i(1), grad(1), z(1);
  i << 1.0;
  grad << 0.0;
  z << 0.0;
  CHECK(predictor_step(i, grad, -0.5, 0.0, 0.1, z)[0].real() == doctest::Approx(1.05));
  grad << -1.0;
  CHECK(predictor_step(i, grad, -0.5, 1.0, 0.1, z)[0].real() == doctest::Approx(0.95));
}

TEST_CASE("predictor_step: reverse chain with the exact score reproduces the prior") {
  const DiffusionSchedule s = make_vp_schedule(200);
  const auto prior = gaussian_prior_from_tones({{1e6, 1.0}, {-3e6, 0.5}}, 8, 31.25e6);
  CMatrix cov = prior.covariance;
  cov.diagonal().array() += 0.05;
  Rng rng(8);
  const int runs = 1000;
  CMatrix acc = CMatrix::Zero(8, 8);
  for (int r = 0; r < runs; ++r) {
    CVector x = std::sqrt(2.0) * s.b.back() * complex_normal_vector(rng, 8, 1.0);
    for (int m = s.n_steps - 1; m >= 0; --m) {
      const double t = s.times[m];
      x = predictor_step(x, 2.0 * analytic_score(x, t, cov, s), t, s.dt(), s, rng);
    }
    acc += x * x.adjoint();
  }
  acc /= runs;
  CHECK((acc - cov).norm() / cov.norm() < 0.15);
}
