#include "dmdd/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "dmdd/engine.hpp"

namespace dmdd {

RVector pulse_compress(const CVector& y, const ChirpParams& params) {
  const CVector ref = sample_baseband(params, 0.0);
  if (ref.size() != y.size())
    throw Error(ErrorCode::LengthMismatch, "measurement length differs from the waveform window");
  Eigen::Index support = ref.size();
  while (support > 0 && ref[support - 1] == cplx(0.0)) --support;
  const double norm = ref.head(support).norm();
  const Eigen::Index n = y.size();
  RVector out(n);
  for (Eigen::Index d = 0; d < n; ++d) {
    const Eigen::Index len = std::min(support, n - d);
    out[d] = std::abs(ref.head(len).dot(y.segment(d, len))) / norm;
  }
  return out;
}

void CfarConfig::validate() const {
  if (n_train < 1) throw Error(ErrorCode::InvalidArgument, "n_train must be >= 1");
  if (n_guard < 0) throw Error(ErrorCode::InvalidArgument, "n_guard must be >= 0");
  if (!(target_pfa > 0.0 && target_pfa < 1.0))
    throw Error(ErrorCode::InvalidArgument, "target_pfa must lie in (0, 1)");
}

std::vector<Detection> cfar_detect(const RVector& profile, const CfarConfig& config) {
  config.validate();
  const Eigen::Index n = profile.size();
  const Eigen::Index reach = config.n_train + config.n_guard;
  if (n <= 2 * reach + 1)
    throw Error(ErrorCode::InvalidArgument, "profile too short for the CFAR window");
  const RVector power = profile.cwiseAbs2();
  // Prefix sums make each window sum O(1).
  RVector prefix(n + 1);
  prefix[0] = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + power[k];
  auto range_sum = [&](Eigen::Index lo, Eigen::Index hi) {  // [lo, hi)
    lo = std::clamp<Eigen::Index>(lo, 0, n);
    hi = std::clamp<Eigen::Index>(hi, 0, n);
    return hi > lo ? std::pair{prefix[hi] - prefix[lo], hi - lo} : std::pair{0.0, Eigen::Index{0}};
  };
  std::vector<Detection> out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [ls, lc] = range_sum(i - reach, i - config.n_guard);
    const auto [rs, rc] = range_sum(i + config.n_guard + 1, i + reach + 1);
    const Eigen::Index cells = lc + rc;
    if (cells == 0) continue;
    const double noise = (ls + rs) / static_cast<double>(cells);
    const double nc = static_cast<double>(cells);
    const double alpha = nc * (std::pow(config.target_pfa, -1.0 / nc) - 1.0);
    if (noise > 0.0 && power[i] > alpha * noise) {
      const double ratio_db = to_db(power[i] / noise);
      out.push_back({static_cast<std::size_t>(i), static_cast<double>(i), ratio_db,
                     ratio_db - to_db(alpha)});
    }
  }
  return out;
}

namespace {

double noise_floor(const CVector& y) {
  return std::max(1e-10 * y.squaredNorm() / static_cast<double>(y.size()), 1e-30);
}

RVector matched_filter_init(const CVector& y, const CMatrix& A) {
  const CVector c = A.adjoint() * y;
  RVector out(A.cols());
  for (Eigen::Index q = 0; q < A.cols(); ++q) {
    const double e = A.col(q).squaredNorm();
    out[q] = e > 0.0 ? std::norm(c[q]) / (e * e) : 0.0;
  }
  return out.cwiseMax(kSigmaFloor);
}

bool sigma_converged(const RVector& prev, const RVector& next, double tol) {
  const double denom = std::max(prev.norm(), 1e-300);
  return (next - prev).norm() / denom < tol;
}

}  // namespace

SblResult sbl_solve(const CVector& y, const CMatrix& A, int max_iter, double tol) {
  if (A.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "A rows differ from N");
  const double n = static_cast<double>(y.size());
  const double floor = noise_floor(y);
  const CMatrix gram = A.adjoint() * A;
  SblResult r;
  r.sigma_sq = matched_filter_init(y, A);
  r.noise_var = std::max(0.1 * y.squaredNorm() / n, floor);
  for (int it = 0; it < max_iter; ++it) {
    const MeasurementCovariance cov(A, gram, r.sigma_sq, r.noise_var);
    r.mu = cov.amplitude_means(y);
    const RVector sdiag = cov.shared_cov_diag();
    const RVector d = r.sigma_sq.cwiseMax(kSigmaFloor);
    const double shrink = (1.0 - sdiag.cwiseQuotient(d).array()).sum();
    const RVector next = sdiag + r.mu.cwiseAbs2();
    r.noise_var = std::max(((y - A * r.mu).squaredNorm() + r.noise_var * shrink) / n, floor);
    r.iterations = it + 1;
    const bool done = sigma_converged(r.sigma_sq, next, tol);
    r.sigma_sq = next;
    if (done) {
      r.converged = true;
      break;
    }
  }
  const MeasurementCovariance cov(A, gram, r.sigma_sq, r.noise_var);
  r.mu = cov.amplitude_means(y);
  return r;
}

JammingMoments JammingMoments::from_samples(const std::vector<CVector>& samples) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "no jamming samples");
  const Eigen::Index n = samples.front().size();
  JammingMoments m;
  m.covariance = CMatrix::Zero(n, n);
  for (const auto& s : samples) {
    if (s.size() != n) throw Error(ErrorCode::LengthMismatch, "jamming sample lengths differ");
    m.covariance.selfadjointView<Eigen::Lower>().rankUpdate(s, 1.0);
  }
  m.covariance = m.covariance.selfadjointView<Eigen::Lower>();
  m.covariance /= static_cast<double>(samples.size());
  const double load = 1e-3 * m.covariance.diagonal().real().sum() / static_cast<double>(n);
  m.covariance.diagonal().array() += load;
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(m.covariance);
  if (eig.info() != Eigen::Success)
    throw Error(ErrorCode::Factorization, "eigendecomposition of jamming covariance failed");
  m.basis = eig.eigenvectors();
  m.eigenvalues = eig.eigenvalues().cwiseMax(0.0);
  return m;
}

JammingMoments JammingMoments::from_dataset(const JammingDataset& dataset, std::size_t max_samples) {
  const std::size_t count = max_samples ? std::min(max_samples, dataset.size()) : dataset.size();
  if (count < static_cast<std::size_t>(dataset.length()))
    throw Error(ErrorCode::InvalidArgument, "SBL-SOM needs at least N jamming samples");
  std::vector<CVector> samples;
  samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) samples.push_back(dataset.sample(k));
  return from_samples(samples);
}

SblResult sbl_som_solve(const CVector& y, const CMatrix& A, const JammingMoments& moments,
                        int max_iter, double tol) {
  if (A.rows() != y.size() || moments.basis.rows() != y.size())
    throw Error(ErrorCode::LengthMismatch, "SBL-SOM dimensions are inconsistent");
  const double n = static_cast<double>(y.size());
  const double floor = noise_floor(y);
  // Rotate into the eigenbasis of C^, where the noise covariance is diagonal.
  const CVector yw = moments.basis.adjoint() * y;
  const CMatrix aw = moments.basis.adjoint() * A;
  const RVector& lam = moments.eigenvalues;

  SblResult r;
  r.sigma_sq = matched_filter_init(y, A);
  r.noise_var = std::max(0.1 * y.squaredNorm() / n, floor);
  auto solve_at = [&](const RVector& sigma_sq, double noise_var, RVector* sdiag, RVector* resid_var) {
    const RVector scale = (lam.array() + noise_var).rsqrt();
    const CMatrix b = scale.asDiagonal() * aw;
    const CVector z = scale.asDiagonal() * yw;
    const CMatrix gram = b.adjoint() * b;
    const MeasurementCovariance cov(b, gram, sigma_sq, 1.0);
    CVector mu = cov.amplitude_means(z);
    if (sdiag) *sdiag = cov.shared_cov_diag();
    if (resid_var) {
      // E|e_n|^2 = |yw - aw mu|_n^2 + (aw Sigma aw^H)_nn
      const CMatrix sig = cov.shared_cov();
      const CMatrix as = aw * sig;
      *resid_var = (yw - aw * mu).cwiseAbs2() + as.cwiseProduct(aw.conjugate()).rowwise().sum().real();
    }
    return mu;
  };
  for (int it = 0; it < max_iter; ++it) {
    RVector sdiag, evar;
    r.mu = solve_at(r.sigma_sq, r.noise_var, &sdiag, &evar);
    const RVector next = sdiag + r.mu.cwiseAbs2();
    // Fixed point of the noise-variance M-step with weights 1/v_n^2.
    const RVector v = lam.array() + r.noise_var;
    const RVector w = v.cwiseAbs2().cwiseInverse();
    r.noise_var = std::max(w.dot(evar - lam) / w.sum(), floor);
    r.iterations = it + 1;
    const bool done = sigma_converged(r.sigma_sq, next, tol);
    r.sigma_sq = next;
    if (done) {
      r.converged = true;
      break;
    }
  }
  r.mu = solve_at(r.sigma_sq, r.noise_var, nullptr, nullptr);
  return r;
}

SblResult sbl_som_solve(const CVector& y, const CMatrix& A, const JammingDataset& dataset,
                        int max_iter, double tol) {
  return sbl_som_solve(y, A, JammingMoments::from_dataset(dataset), max_iter, tol);
}

void AdmmConfig::validate() const {
  if (!(lambda > 0.0) || !(rho > 0.0))
    throw Error(ErrorCode::InvalidArgument, "ADMM needs lambda > 0 and rho > 0");
  if (max_iter < 1 || adapt_iters < 0 || !(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "bad ADMM stopping rule");
  if (freq_grid_size < 0 || !(f_min < f_max))
    throw Error(ErrorCode::InvalidArgument, "bad ADMM frequency grid");
}

CMatrix fourier_dictionary(Eigen::Index n_samples, double sample_freq, int count, double f_min,
                           double f_max) {
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "frequency grid needs >= 1 point");
  CMatrix f(n_samples, count);
  for (int m = 0; m < count; ++m) {
    const double freq = count == 1 ? f_min : f_min + (f_max - f_min) * m / (count - 1);
    for (Eigen::Index n = 0; n < n_samples; ++n)
      f(n, m) = std::polar(1.0, 2.0 * kPi * freq * static_cast<double>(n) / sample_freq);
  }
  return f;
}

double admm_lambda_max(const CVector& y, const CMatrix& A, const CMatrix& F) {
  double top = 0.0;
  if (A.cols() > 0) top = (A.adjoint() * y).cwiseAbs().maxCoeff();
  if (F.cols() > 0) top = std::max(top, (F.adjoint() * y).cwiseAbs().maxCoeff());
  return top;
}

double lasso_objective(const CVector& y, const CMatrix& B, const CVector& w, double lambda) {
  return 0.5 * (y - B * w).squaredNorm() + lambda * w.cwiseAbs().sum();
}

namespace {

CVector soft_threshold(const CVector& v, double kappa) {
  CVector out(v.size());
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    const double mag = std::abs(v[k]);
    out[k] = mag > kappa ? v[k] * ((mag - kappa) / mag) : cplx(0.0);
  }
  return out;
}

}  // namespace

AdmmResult admm_solve(const CVector& y, const CMatrix& A, const CMatrix& F, const AdmmConfig& config) {
  config.validate();
  const Eigen::Index n = y.size();
  if (A.rows() != n || F.rows() != n) throw Error(ErrorCode::LengthMismatch, "ADMM dictionary rows differ from N");
  CMatrix B(n, A.cols() + F.cols());
  B << A, F;
  const Eigen::Index p = B.cols();

  AdmmResult r;
  if (config.lambda >= admm_lambda_max(y, A, F)) {
    // Zero satisfies the optimality conditions exactly.
    r.x = CVector::Zero(A.cols());
    r.z = CVector::Zero(F.cols());
    r.converged = true;
    r.objective = 0.5 * y.squaredNorm();
    return r;
  }

  double rho = config.rho;
  // (B^H B + rho E)^{-1} v = (v - B^H (rho E + B B^H)^{-1} B v) / rho.
  const CMatrix bbh = B * B.adjoint();
  Eigen::LLT<CMatrix> llt;
  auto factor = [&] {
    CMatrix small = bbh;
    small.diagonal().array() += rho;
    llt.compute(small);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::Factorization, "ADMM system factorization failed");
  };
  factor();
  const CVector bhy = B.adjoint() * y;

  CVector w = CVector::Zero(p), z = CVector::Zero(p), u = CVector::Zero(p);
  const double sqrt_p = std::sqrt(static_cast<double>(p));
  for (int it = 0; it < config.max_iter; ++it) {
    const CVector rhs = bhy + rho * (z - u);
    w = (rhs - B.adjoint() * llt.solve(B * rhs)) / rho;
    const CVector z_old = z;
    z = soft_threshold(w + u, config.lambda / rho);
    u += w - z;
    r.iterations = it + 1;
    r.objective_history.push_back(lasso_objective(y, B, z, config.lambda));
    const double primal = (w - z).norm();
    const double dual = rho * (z - z_old).norm();
    const double eps_pri = sqrt_p * config.tol + config.tol * std::max(w.norm(), z.norm());
    const double eps_dual = sqrt_p * config.tol + config.tol * rho * u.norm();
    if (primal < eps_pri && dual < eps_dual) {
      r.converged = true;
      break;
    }
    // Residual balancing; u is the scaled dual, so it rescales with rho.
    if (it < config.adapt_iters) {
      double step = 1.0;
      if (primal > 10.0 * dual) step = 2.0;
      else if (dual > 10.0 * primal) step = 0.5;
      if (step != 1.0) {
        rho *= step;
        u /= step;
        factor();
      }
    }
  }
  r.x = z.head(A.cols());
  r.z = z.tail(F.cols());
  r.objective = lasso_objective(y, B, z, config.lambda);
  return r;
}

AdmmResult admm_solve(const CVector& y, const CMatrix& A, double sample_freq, const AdmmConfig& config) {
  config.validate();
  const int m = config.freq_grid_size ? config.freq_grid_size : static_cast<int>(4 * y.size());
  const CMatrix F = fourier_dictionary(y.size(), sample_freq, m, config.f_min, config.f_max);
  return admm_solve(y, A, F, config);
}

}  // namespace dmdd
