#include "dmdd/score_model.hpp"

namespace dmdd {

CVector analytic_score(const CVector& i_t, double t, const CMatrix& prior_cov,
                       const DiffusionSchedule& schedule) {
  const Eigen::Index n = i_t.size();
  if (prior_cov.rows() != n || prior_cov.cols() != n)
    throw Error(ErrorCode::LengthMismatch, "prior covariance does not match signal length");
  const double bb = schedule.beta_bar_at(t);
  CMatrix k = bb * bb * prior_cov;
  k.diagonal().array() += 2.0 * schedule.b_sq_at(t);
  Eigen::LLT<CMatrix> llt(k);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::Factorization, "diffused prior covariance is not positive definite");
  return -llt.solve(i_t);
}

AnalyticGaussianScore::AnalyticGaussianScore(const CMatrix& prior_cov,
                                             DiffusionSchedule schedule)
    : schedule_(std::move(schedule)) {
  if (prior_cov.rows() != prior_cov.cols())
    throw Error(ErrorCode::InvalidArgument, "prior covariance must be square");
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(prior_cov);
  if (eig.info() != Eigen::Success)
    throw Error(ErrorCode::Factorization, "eigendecomposition of prior covariance failed");
  basis_ = eig.eigenvectors();
  eigenvalues_ = eig.eigenvalues().cwiseMax(0.0);
}

CVector AnalyticGaussianScore::evaluate(const CVector& i_t, double t) const {
  if (i_t.size() != basis_.rows())
    throw Error(ErrorCode::LengthMismatch, "signal length differs from the prior");
  const double bb = schedule_.beta_bar_at(t);
  const RVector denom = (bb * bb) * eigenvalues_.array() + 2.0 * schedule_.b_sq_at(t);
  if (!(denom.minCoeff() > 0.0))
    throw Error(ErrorCode::Factorization, "diffused prior covariance is singular");
  const CVector coeff = (basis_.adjoint() * i_t).cwiseQuotient(denom.cast<cplx>());
  return -(basis_ * coeff);
}

}  // namespace dmdd
