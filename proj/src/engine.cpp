#include "dmdd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dmdd {

double integration_gain_db(double coherent_samples) {
  if (!(coherent_samples >= 1.0))
    throw Error(ErrorCode::InvalidArgument, "N_p must be >= 1");
  return to_db(coherent_samples);
}

std::vector<Detection> threshold_detect(const CVector& mu, double noise_var, double threshold_db,
                                        double coherent_samples, const RangeGrid* grid) {
  if (!(noise_var > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_var must be > 0");
  const double p_min = threshold_db - integration_gain_db(coherent_samples);
  if (grid && grid->size() != static_cast<std::size_t>(mu.size()))
    throw Error(ErrorCode::LengthMismatch, "grid size differs from amplitude vector");
  std::vector<Detection> out;
  for (Eigen::Index q = 0; q < mu.size(); ++q) {
    const double p2 = std::norm(mu[q]);
    if (p2 == 0.0) continue;
    const double power = to_db(p2 / noise_var);
    if (power >= p_min) {
      const auto idx = static_cast<std::size_t>(q);
      out.push_back({idx, grid ? grid->ranges[idx] : static_cast<double>(q), power, power - p_min});
    }
  }
  return out;
}

double equivalent_noise_var(double t, double noise_var, const DiffusionSchedule& schedule) {
  const double bb = schedule.beta_bar_at(t);
  if (!(bb > 0.0)) throw Error(ErrorCode::ZeroDenominator, "beta_bar is zero");
  return 2.0 * schedule.b_sq_at(t) / (bb * bb) + noise_var;
}

MeasurementCovariance::MeasurementCovariance(const CMatrix& A, const CMatrix& gram,
                                             const RVector& sigma_sq, double equiv_noise_var)
    : A_(A), s_(equiv_noise_var) {
  if (!(s_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "equivalent noise variance must be > 0");
  if (sigma_sq.size() != A.cols() || gram.rows() != A.cols())
    throw Error(ErrorCode::LengthMismatch, "sigma^2 / Gram size differs from Q");
  sqrt_d_ = sigma_sq.cwiseMax(kSigmaFloor).cwiseSqrt();
  CMatrix m = sqrt_d_.asDiagonal() * gram * sqrt_d_.asDiagonal() / s_;
  m.diagonal().array() += 1.0;
  llt_.compute(m);
  if (llt_.info() != Eigen::Success)
    throw Error(ErrorCode::Factorization, "measurement covariance factorization failed");
}

CMatrix MeasurementCovariance::solve(const CMatrix& R) const {
  const CMatrix inner = llt_.solve(sqrt_d_.asDiagonal() * (A_.adjoint() * R));
  return (R - A_ * (sqrt_d_.asDiagonal() * inner) / s_) / s_;
}

CMatrix MeasurementCovariance::amplitude_means(const CMatrix& R) const {
  return sqrt_d_.asDiagonal() * llt_.solve(sqrt_d_.asDiagonal() * (A_.adjoint() * R)) / s_;
}

RVector MeasurementCovariance::quadratic_forms(const CMatrix& R) const {
  const CMatrix w = llt_.matrixL().solve(sqrt_d_.asDiagonal() * (A_.adjoint() * R));
  RVector out(R.cols());
  for (Eigen::Index j = 0; j < R.cols(); ++j)
    out[j] = (R.col(j).squaredNorm() - w.col(j).squaredNorm() / s_) / s_;
  return out;
}

RVector MeasurementCovariance::shared_cov_diag() const {
  const Eigen::Index q = sqrt_d_.size();
  const CMatrix linv = llt_.matrixL().solve(CMatrix::Identity(q, q));
  RVector out(q);
  for (Eigen::Index k = 0; k < q; ++k) out[k] = sqrt_d_[k] * sqrt_d_[k] * linv.col(k).squaredNorm();
  return out;
}

CMatrix MeasurementCovariance::shared_cov() const {
  const Eigen::Index q = sqrt_d_.size();
  const CMatrix minv = llt_.solve(CMatrix::Identity(q, q));
  return sqrt_d_.asDiagonal() * minv * sqrt_d_.asDiagonal();
}

double MeasurementCovariance::trace_a_shared_cov() const {
  const Eigen::Index q = sqrt_d_.size();
  const CMatrix linv = llt_.matrixL().solve(CMatrix::Identity(q, q));
  // tr(G D^{1/2} M^{-1} D^{1/2}) = s tr((M - E) M^{-1}) = s (Q - tr M^{-1}).
  return s_ * (static_cast<double>(q) - linv.squaredNorm());
}

CVector likelihood_score(const CVector& i_t, const CVector& y, const CMatrix& A,
                         const RVector& sigma_sq, double noise_var, double t,
                         const DiffusionSchedule& schedule) {
  const double s = equivalent_noise_var(t, noise_var, schedule);
  if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "equivalent noise variance must be > 0");
  const double bb = schedule.beta_bar_at(t);
  const RVector d = sigma_sq.cwiseMax(kSigmaFloor);
  CMatrix sy = A * d.asDiagonal() * A.adjoint();
  sy.diagonal().array() += s;
  Eigen::LLT<CMatrix> llt(sy);
  if (llt.info() != Eigen::Success) {
    sy.diagonal().array() += 1e-8 * sy.diagonal().real().sum() / static_cast<double>(sy.rows());
    llt.compute(sy);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::Factorization, "measurement covariance is not positive definite");
  }
  return llt.solve(y - i_t / bb) / bb;
}

CVector posterior_score(const CVector& prior_score, const CVector& lik_score) {
  if (prior_score.size() != lik_score.size())
    throw Error(ErrorCode::LengthMismatch, "score lengths differ");
  return prior_score + lik_score;
}

PriorSampleBank::PriorSampleBank(std::vector<CVector> clean, DiffusionSchedule schedule,
                                 std::uint64_t seed)
    : clean_(std::move(clean)), schedule_(std::move(schedule)), seed_(seed) {}

CVector PriorSampleBank::sample(std::size_t j, double t) const {
  if (j >= clean_.size()) throw Error(ErrorCode::InvalidArgument, "bank index out of range");
  if (t <= 0.0) return clean_[j];
  const auto step = static_cast<std::uint64_t>(std::llround(t * schedule_.n_steps));
  Rng rng(derive_seed(seed_, 3, step * clean_.size() + j));
  return forward_perturb(clean_[j], t, schedule_, rng);
}

std::vector<CVector> PriorSampleBank::slice(double t) const {
  std::vector<CVector> out;
  out.reserve(clean_.size());
  for (std::size_t j = 0; j < clean_.size(); ++j) out.push_back(sample(j, t));
  return out;
}

PriorSampleBank build_prior_bank(const JammingDataset& dataset, const DiffusionSchedule& schedule,
                                 std::size_t bank_size, Rng& rng) {
  if (bank_size < 1) throw Error(ErrorCode::InvalidArgument, "bank size must be >= 1");
  if (dataset.size() < bank_size)
    throw Error(ErrorCode::InvalidArgument, "dataset holds " + std::to_string(dataset.size()) +
                                                " samples, bank needs " + std::to_string(bank_size));
  std::vector<std::size_t> idx(dataset.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<CVector> clean;
  for (std::size_t k = 0; k < bank_size; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
    std::swap(idx[k], idx[pick(rng)]);
    clean.push_back(dataset.sample(idx[k]));
  }
  const std::uint64_t seed = rng();
  return PriorSampleBank(std::move(clean), schedule, seed);
}

namespace {

CMatrix residual_matrix(const CVector& y, const std::vector<CVector>& slice, double beta_bar) {
  CMatrix r(y.size(), static_cast<Eigen::Index>(slice.size()));
  for (std::size_t j = 0; j < slice.size(); ++j) {
    if (slice[j].size() != y.size())
      throw Error(ErrorCode::LengthMismatch, "bank sample length differs from y");
    r.col(static_cast<Eigen::Index>(j)) = y - slice[j] / beta_bar;
  }
  return r;
}

}  // namespace

PosteriorGmm amplitude_posterior(const CVector& y, const CMatrix& A, const CMatrix& gram,
                                 const MeasurementCovariance& cov,
                                 const std::vector<CVector>& bank_slice, double beta_bar,
                                 const PosteriorOptions& options) {
  if (bank_slice.empty()) throw Error(ErrorCode::InvalidArgument, "empty bank slice");
  if (A.rows() != y.size() || gram.rows() != A.cols())
    throw Error(ErrorCode::LengthMismatch, "dictionary does not match y or the Gram matrix");
  const auto nj = static_cast<Eigen::Index>(bank_slice.size());
  const CMatrix R = residual_matrix(y, bank_slice, beta_bar);

  PosteriorGmm g;
  g.component_means = cov.amplitude_means(R);
  if (options.weighting == "uniform") {
    g.weights = RVector::Constant(nj, 1.0 / static_cast<double>(nj));
  } else if (options.weighting == "marginal") {
    const RVector kappa = cov.quadratic_forms(R);
    RVector logw = -kappa;
    const double top = logw.maxCoeff();
    g.weights = (logw.array() - top).exp();
    const double total = g.weights.sum();
    if (!std::isfinite(total) || !(total > 0.0)) {
      g.weights = RVector::Constant(nj, 1.0 / static_cast<double>(nj));
      g.weight_fallback = true;
    } else {
      g.weights /= total;
    }
  } else {
    throw Error(ErrorCode::InvalidArgument, "weighting must be 'marginal' or 'uniform'");
  }

  g.mean = g.component_means * g.weights.cast<cplx>();
  g.shared_cov_diag = cov.shared_cov_diag();
  const RVector second = g.component_means.cwiseAbs2() * g.weights;
  g.cov_diag = (g.shared_cov_diag + second - g.mean.cwiseAbs2()).cwiseMax(0.0);

  const CMatrix gm = gram * g.component_means;
  double spread = 0.0;
  for (Eigen::Index j = 0; j < nj; ++j)
    spread += g.weights[j] * g.component_means.col(j).dot(gm.col(j)).real();
  spread -= g.mean.dot(gram * g.mean).real();
  g.trace_a_cov = cov.trace_a_shared_cov() + std::max(spread, 0.0);

  if (options.full_covariance) {
    g.shared_cov = cov.shared_cov();
    g.cov = g.shared_cov + g.component_means * g.weights.cast<cplx>().asDiagonal() *
                               g.component_means.adjoint() -
            g.mean * g.mean.adjoint();
  }
  return g;
}

PosteriorGmm amplitude_posterior(const CVector& y, const CMatrix& A,
                                 const std::vector<CVector>& bank_slice, const RVector& sigma_sq,
                                 double noise_var, double t, const DiffusionSchedule& schedule,
                                 const PosteriorOptions& options) {
  const CMatrix gram = A.adjoint() * A;
  const MeasurementCovariance cov(A, gram, sigma_sq, equivalent_noise_var(t, noise_var, schedule));
  return amplitude_posterior(y, A, gram, cov, bank_slice, schedule.beta_bar_at(t), options);
}

RVector update_sigma_sq(const PosteriorGmm& gmm) { return gmm.cov_diag + gmm.mean.cwiseAbs2(); }

double update_noise_var(const CVector& y, const CMatrix& A, const PosteriorGmm& gmm,
                        const std::vector<CVector>& bank_slice, double t,
                        const DiffusionSchedule& schedule, double zeta) {
  if (!(zeta > 0.0)) throw Error(ErrorCode::InvalidArgument, "zeta must be > 0");
  if (bank_slice.empty()) throw Error(ErrorCode::InvalidArgument, "empty bank slice");
  const double bb = schedule.beta_bar_at(t);
  const CVector base = y - A * gmm.mean;
  double resid = 0.0;
  for (const auto& s : bank_slice) resid += (base - s / bb).squaredNorm();
  resid /= static_cast<double>(bank_slice.size());
  const double n = static_cast<double>(y.size());
  const double est = (resid + gmm.trace_a_cov) / n - 2.0 * schedule.b_sq_at(t) / (bb * bb);
  return std::max(est, zeta);
}

void DmddConfig::validate() const {
  if (n_chains < 1) throw Error(ErrorCode::InvalidArgument, "J must be >= 1");
  if (bank_size < 1) throw Error(ErrorCode::InvalidArgument, "J~ must be >= 1");
  if (!(zeta_scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "zeta must be > 0");
  if (!(corrector_scale >= 0.0)) throw Error(ErrorCode::InvalidArgument, "corrector_scale must be >= 0");
  if (bank_source != "prior" && bank_source != "posterior")
    throw Error(ErrorCode::InvalidArgument, "bank_source must be 'prior' or 'posterior'");
  if (weighting != "marginal" && weighting != "uniform")
    throw Error(ErrorCode::InvalidArgument, "weighting must be 'marginal' or 'uniform'");
  if (!(init_sigma_sq > 0.0) || !(init_noise_var > 0.0))
    throw Error(ErrorCode::InvalidArgument, "initial variances must be > 0");
}

DmddResult run_dmdd(const CVector& y, const Dictionary& dict, const ScoreModel& score,
                    const PriorSampleBank* bank, const DmddConfig& config) {
  config.validate();
  const CMatrix& A = dict.atoms;
  const Eigen::Index n = y.size();
  const Eigen::Index q = A.cols();
  if (A.rows() != n) throw Error(ErrorCode::LengthMismatch, "dictionary rows differ from N");
  if (score.length() != 0 && score.length() != n)
    throw Error(ErrorCode::LengthMismatch, "score model length differs from N");
  const bool use_prior_bank = config.bank_source == "prior";
  if (use_prior_bank && (!bank || bank->size() == 0))
    throw Error(ErrorCode::InvalidArgument, "bank_source 'prior' needs a prior sample bank");
  if (config.sigma_sq_init.size() != 0 && config.sigma_sq_init.size() != q)
    throw Error(ErrorCode::LengthMismatch, "sigma_sq_init length differs from Q");

  const DiffusionSchedule sched = config.schedule();
  const int T = sched.n_steps;
  const double dt = sched.dt();
  const CMatrix gram = A.adjoint() * A;
  const double zeta = config.zeta_scale * y.squaredNorm() / static_cast<double>(n);
  const PosteriorOptions popt{config.weighting, false};

  Rng rng(derive_seed(config.seed, 5, 0));
  std::vector<CVector> chains;
  const double init_var = 2.0 * sched.b_sq_at(1.0);
  for (int j = 0; j < config.n_chains; ++j) chains.push_back(complex_normal_vector(rng, n, init_var));

  RVector sigma_sq = config.sigma_sq_init.size() ? config.sigma_sq_init
                                                 : RVector::Constant(q, config.init_sigma_sq);
  double noise_var = config.init_noise_var;

  DmddResult result;
  PosteriorGmm gmm;
  auto posterior_grad = [&](const MeasurementCovariance& cov, double t, double bb) {
    CMatrix R(n, config.n_chains);
    for (int j = 0; j < config.n_chains; ++j) R.col(j) = y - chains[static_cast<std::size_t>(j)] / bb;
    const CMatrix lik = cov.solve(R) / bb;
    std::vector<CVector> grads;
    for (int j = 0; j < config.n_chains; ++j) {
      const auto& c = chains[static_cast<std::size_t>(j)];
      // Samplers take the real-coordinate gradient, twice the Wirtinger score.
      grads.push_back(2.0 * posterior_score(score.evaluate(c, t), lik.col(j)));
    }
    return grads;
  };

  for (int m = T - 1; m >= 0; --m) {
    const double t = static_cast<double>(m + 1) / T;
    const double t_next = static_cast<double>(m) / T;
    const double bb = sched.beta_bar_at(t);
    StepDiagnostics diag;
    diag.step = m;
    diag.t = t_next;

    {
      const MeasurementCovariance cov(A, gram, sigma_sq, equivalent_noise_var(t, noise_var, sched));
      auto grads = posterior_grad(cov, t, bb);
      for (int j = 0; j < config.n_chains; ++j) {
        StepInfo info;
        auto& c = chains[static_cast<std::size_t>(j)];
        c = corrector_step(c, grads[static_cast<std::size_t>(j)], rng, config.corrector_scale, &info);
        if (info.skipped) ++diag.corrector_skips;
      }
      grads = posterior_grad(cov, t, bb);
      for (int j = 0; j < config.n_chains; ++j) {
        auto& c = chains[static_cast<std::size_t>(j)];
        c = predictor_step(c, grads[static_cast<std::size_t>(j)], t, dt, sched, rng);
        if (!all_finite(c))
          throw Error(ErrorCode::NonFinite, "jamming chain became non-finite at t=" + std::to_string(t));
      }
    }

    const double bb_next = sched.beta_bar_at(t_next);
    const std::vector<CVector> slice = use_prior_bank ? bank->slice(t_next) : chains;
    const MeasurementCovariance cov_next(A, gram, sigma_sq,
                                         equivalent_noise_var(t_next, noise_var, sched));
    gmm = amplitude_posterior(y, A, gram, cov_next, slice, bb_next, popt);
    if (!all_finite(gmm.mean))
      throw Error(ErrorCode::NonFinite, "amplitude posterior became non-finite at t=" +
                                            std::to_string(t_next));
    if (!config.freeze_sigma_sq) sigma_sq = update_sigma_sq(gmm);
    if (!config.freeze_noise_var)
      noise_var = update_noise_var(y, A, gmm, slice, t_next, sched, zeta);

    CVector mean_jam = CVector::Zero(n);
    for (const auto& s : slice) mean_jam += s;
    mean_jam /= static_cast<double>(slice.size()) * bb_next;
    diag.sigma_w = std::sqrt(noise_var);
    diag.residual_norm = (y - A * gmm.mean - mean_jam).norm();
    diag.weight_fallback = gmm.weight_fallback;
    result.diagnostics.push_back(diag);
  }

  result.mu_post = gmm.mean;
  result.cov_diag = gmm.cov_diag;
  result.sigma_sq = sigma_sq;
  result.noise_var = noise_var;
  result.jamming_samples = chains;
  result.detections =
      threshold_detect(gmm.mean, noise_var, config.threshold_db, config.coherent_samples,
                       dict.grid.size() ? &dict.grid : nullptr);
  return result;
}

std::vector<PriorSnapshot> sample_prior(const ScoreModel& score, const DiffusionSchedule& schedule,
                                        std::size_t count, const std::vector<double>& snapshot_times,
                                        std::uint64_t seed, double corrector_scale) {
  const Eigen::Index n = score.length();
  if (n <= 0) throw Error(ErrorCode::InvalidArgument, "score model has no fixed length");
  const int T = schedule.n_steps;
  const double dt = schedule.dt();
  std::vector<int> snap_steps;
  for (double ts : snapshot_times) {
    if (!(ts >= 0.0 && ts <= 1.0)) throw Error(ErrorCode::InvalidArgument, "snapshot time outside [0, 1]");
    snap_steps.push_back(static_cast<int>(std::lround(ts * T)));
  }
  std::vector<PriorSnapshot> out(snapshot_times.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k].t = static_cast<double>(snap_steps[k]) / T;

  for (std::size_t s = 0; s < count; ++s) {
    Rng rng(derive_seed(seed, 8, s));
    CVector x = complex_normal_vector(rng, n, 2.0 * schedule.b_sq_at(1.0));
    auto record = [&](int level) {
      for (std::size_t k = 0; k < out.size(); ++k)
        if (snap_steps[k] == level) out[k].samples.push_back(x);
    };
    record(T);
    for (int m = T - 1; m >= 0; --m) {
      const double t = static_cast<double>(m + 1) / T;
      x = corrector_step(x, 2.0 * score.evaluate(x, t), rng, corrector_scale);
      x = predictor_step(x, 2.0 * score.evaluate(x, t), t, dt, schedule, rng);
      if (!all_finite(x)) throw Error(ErrorCode::NonFinite, "prior sample became non-finite");
      record(m);
    }
  }
  return out;
}

}  // namespace dmdd
