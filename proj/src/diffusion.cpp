#include "dmdd/diffusion.hpp"

#include <cmath>

namespace dmdd {

namespace {

double half_integral(const DiffusionSchedule& s, double t) {
  return 0.5 * (s.rate_min * t + 0.5 * (s.rate_max - s.rate_min) * t * t);
}

}  // namespace

double DiffusionSchedule::beta_bar_at(double t) const { return std::exp(-half_integral(*this, t)); }

double DiffusionSchedule::b_sq_at(double t) const {
  return -std::expm1(-2.0 * half_integral(*this, t));
}

DiffusionSchedule make_vp_schedule(int n_steps, double rate_min, double rate_max) {
  if (n_steps < 2) throw Error(ErrorCode::InvalidArgument, "diffusion needs T >= 2");
  if (!(rate_min > 0.0) || !(rate_max > rate_min))
    throw Error(ErrorCode::InvalidArgument, "need 0 < rate_min < rate_max");
  DiffusionSchedule s;
  s.n_steps = n_steps;
  s.rate_min = rate_min;
  s.rate_max = rate_max;
  for (int m = 0; m < n_steps; ++m) {
    const double t = static_cast<double>(m + 1) / n_steps;
    s.times.push_back(t);
    s.beta_bar.push_back(s.beta_bar_at(t));
    s.b.push_back(s.b_at(t));
  }
  return s;
}

CVector forward_perturb(const CVector& i0, double t, const DiffusionSchedule& schedule,
                        Rng& rng) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidArgument, "t must lie in [0, 1]");
  if (t == 0.0) return i0;
  const CVector eps = complex_normal_vector(rng, i0.size(), 2.0);
  return schedule.beta_bar_at(t) * i0 + schedule.b_at(t) * eps;
}

CVector conditional_score_target(const CVector& i_t, const CVector& i0, double t,
                                 const DiffusionSchedule& schedule) {
  const double b_sq = schedule.b_sq_at(t);
  if (!(b_sq > 0.0))
    throw Error(ErrorCode::SingularKernel, "conditional score is undefined at b_t = 0");
  return -(i_t - schedule.beta_bar_at(t) * i0) / (2.0 * b_sq);
}

CVector corrector_step(const CVector& i_t, const CVector& grad, const CVector& z,
                       double scale, StepInfo* info) {
  const double g2 = grad.squaredNorm();
  if (!(g2 > 0.0)) {
    if (info) *info = {true, 0.0};
    return i_t;
  }
  const double eps = scale * 2.0 * static_cast<double>(i_t.size()) / g2;
  if (info) *info = {false, eps};
  return i_t + eps * grad + std::sqrt(2.0 * eps) * z;
}

CVector corrector_step(const CVector& i_t, const CVector& grad, Rng& rng, double scale,
                       StepInfo* info) {
  if (!(grad.squaredNorm() > 0.0)) return corrector_step(i_t, grad, CVector(), scale, info);
  return corrector_step(i_t, grad, complex_normal_vector(rng, i_t.size(), 2.0), scale, info);
}

CVector predictor_step(const CVector& i_t, const CVector& grad, double drift, double diff,
                       double dt, const CVector& z) {
  return i_t + (-drift * i_t + diff * diff * grad) * dt + diff * std::sqrt(dt) * z;
}

CVector predictor_step(const CVector& i_t, const CVector& grad, double t, double dt,
                       const DiffusionSchedule& schedule, Rng& rng) {
  if (!(t - dt >= -1e-12)) throw Error(ErrorCode::InvalidArgument, "predictor needs t - dt >= 0");
  const CVector z = complex_normal_vector(rng, i_t.size(), 2.0);
  return predictor_step(i_t, grad, schedule.drift_coef(t), schedule.diff_coef(t), dt, z);
}

}  // namespace dmdd
