#pragma once

#include <memory>
#include <vector>

#include "dmdd/common.hpp"
#include "dmdd/diffusion.hpp"
#include "dmdd/jamming.hpp"

namespace dmdd {

/// Estimate of the Wirtinger score of the diffused jamming marginal p(i_t).
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual CVector evaluate(const CVector& i_t, double t) const = 0;
  /// Signal length the model was built for; 0 means any.
  virtual Eigen::Index length() const { return 0; }
};

/// -(beta_bar_t^2 C + 2 b_t^2 E)^{-1} i_t by a Cholesky solve.
CVector analytic_score(const CVector& i_t, double t, const CMatrix& prior_cov,
                       const DiffusionSchedule& schedule);

/// Exact score of a Gaussian jamming prior. The covariance is diagonalized
/// once, so each evaluation costs two N x N products.
class AnalyticGaussianScore : public ScoreModel {
 public:
  AnalyticGaussianScore(const CMatrix& prior_cov, DiffusionSchedule schedule);

  CVector evaluate(const CVector& i_t, double t) const override;
  Eigen::Index length() const override { return basis_.rows(); }
  const DiffusionSchedule& schedule() const { return schedule_; }

 private:
  CMatrix basis_;
  RVector eigenvalues_;
  DiffusionSchedule schedule_;
};

}  // namespace dmdd
