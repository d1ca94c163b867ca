#pragma once

#include <vector>

#include "dmdd/common.hpp"

namespace dmdd {

/// Variance-preserving schedule with a linear rate on [0, 1].
///
/// Grid point m (0-based) sits at t_m = (m + 1) / T. beta_bar is the signal
/// retention exp(-0.5 * int_0^t rate), b^2 = 1 - beta_bar^2.
struct DiffusionSchedule {
  int n_steps = 0;
  double rate_min = 0.1;
  double rate_max = 20.0;
  std::vector<double> times;
  std::vector<double> beta_bar;
  std::vector<double> b;

  double dt() const { return 1.0 / n_steps; }
  double rate(double t) const { return rate_min + t * (rate_max - rate_min); }
  double drift_coef(double t) const { return -0.5 * rate(t); }
  double diff_coef(double t) const { return std::sqrt(rate(t)); }
  double beta_bar_at(double t) const;
  /// 1 - beta_bar^2, evaluated with expm1 so it stays accurate near t = 0.
  double b_sq_at(double t) const;
  double b_at(double t) const { return std::sqrt(b_sq_at(t)); }
};

DiffusionSchedule make_vp_schedule(int n_steps = 200, double rate_min = 0.1,
                                   double rate_max = 20.0);

/// beta_bar_t i0 + b_t eps with eps ~ CN(0, 2E).
CVector forward_perturb(const CVector& i0, double t, const DiffusionSchedule& schedule,
                        Rng& rng);

/// Wirtinger gradient of log CN(i_t; beta_bar_t i0, 2 b_t^2 E) w.r.t. conj(i_t).
CVector conditional_score_target(const CVector& i_t, const CVector& i0, double t,
                                 const DiffusionSchedule& schedule);

struct StepInfo {
  bool skipped = false;
  double step_size = 0.0;
};

// The two samplers below take `grad`, the gradient of log p in real
// coordinates packed as d/dRe + j d/dIm. It equals twice the Wirtinger score.

/// Langevin refinement i + eps grad + sqrt(2 eps) z, z ~ CN(0, 2E), with
/// eps = scale * E||z||^2 / ||grad||^2 and E||z||^2 = 2N. A zero gradient
/// leaves the input unchanged and sets info->skipped.
CVector corrector_step(const CVector& i_t, const CVector& grad, Rng& rng,
                       double scale = 1.0, StepInfo* info = nullptr);
CVector corrector_step(const CVector& i_t, const CVector& grad, const CVector& z,
                       double scale = 1.0, StepInfo* info = nullptr);

/// Reverse Euler-Maruyama step from t to t - dt:
/// i + (-f(t) i + g(t)^2 grad) dt + g(t) sqrt(dt) z, z ~ CN(0, 2E).
CVector predictor_step(const CVector& i_t, const CVector& grad, double t, double dt,
                       const DiffusionSchedule& schedule, Rng& rng);
CVector predictor_step(const CVector& i_t, const CVector& grad, double drift, double diff,
                       double dt, const CVector& z);

}  // namespace dmdd
