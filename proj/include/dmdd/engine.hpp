#pragma once

#include <string>
#include <vector>

#include "dmdd/detection.hpp"
#include "dmdd/diffusion.hpp"
#include "dmdd/jamming.hpp"
#include "dmdd/score_model.hpp"
#include "dmdd/signal.hpp"

namespace dmdd {

/// Variances below this are floored before inversion.
inline constexpr double kSigmaFloor = 1e-12;

struct SblState {
  RVector sigma_sq;
  double noise_var = 1.0;
};

struct PosteriorGmm {
  RVector weights;          // gamma~, sums to 1
  CMatrix component_means;  // Q x J~
  RVector shared_cov_diag;  // diag of Sigma~
  CVector mean;             // mu_post
  RVector cov_diag;         // diag of Sigma_post
  /// tr(A Sigma_post A^H).
  double trace_a_cov = 0.0;
  /// Full Q x Q matrices, filled only on request.
  CMatrix shared_cov;
  CMatrix cov;
  bool weight_fallback = false;
};

/// sigma_e^2 = 2 b_t^2 / beta_bar_t^2 + sigma_w^2.
double equivalent_noise_var(double t, double noise_var, const DiffusionSchedule& schedule);

/// Factored Sigma_y = A diag(d) A^H + s E through the Q x Q matrix
/// M = E + D^{1/2} A^H A D^{1/2} / s, which has eigenvalues >= 1.
class MeasurementCovariance {
 public:
  /// `gram` is A^H A; d is floored at kSigmaFloor.
  MeasurementCovariance(const CMatrix& A, const CMatrix& gram, const RVector& sigma_sq,
                        double equiv_noise_var);

  /// Sigma_y^{-1} R.
  CMatrix solve(const CMatrix& R) const;
  /// Columns D A^H Sigma_y^{-1} R, the conditional amplitude means.
  CMatrix amplitude_means(const CMatrix& R) const;
  /// r^H Sigma_y^{-1} r for each column.
  RVector quadratic_forms(const CMatrix& R) const;
  /// diag of Sigma~ = (A^H A / s + D^{-1})^{-1}.
  RVector shared_cov_diag() const;
  CMatrix shared_cov() const;
  /// tr(A Sigma~ A^H).
  double trace_a_shared_cov() const;
  double noise() const { return s_; }

 private:
  const CMatrix& A_;
  RVector sqrt_d_;
  double s_;
  Eigen::LLT<CMatrix> llt_;
};

/// (1/beta_bar) Sigma_y^{-1} (y - i_t / beta_bar) by an N x N Cholesky,
/// retried once with jitter 1e-8 tr/N.
CVector likelihood_score(const CVector& i_t, const CVector& y, const CMatrix& A,
                         const RVector& sigma_sq, double noise_var, double t,
                         const DiffusionSchedule& schedule);

CVector posterior_score(const CVector& prior_score, const CVector& lik_score);

/// Diffused prior jamming draws. Entries at a time are generated on demand
/// from the stored clean draws with per-(step, sample) seeds, so a bank is
/// a pure function of its seed.
class PriorSampleBank {
 public:
  PriorSampleBank() = default;
  PriorSampleBank(std::vector<CVector> clean, DiffusionSchedule schedule, std::uint64_t seed);

  std::size_t size() const { return clean_.size(); }
  const std::vector<CVector>& clean() const { return clean_; }
  CVector sample(std::size_t j, double t) const;
  std::vector<CVector> slice(double t) const;

 private:
  std::vector<CVector> clean_;
  DiffusionSchedule schedule_;
  std::uint64_t seed_ = 0;
};

/// Draws J~ clean samples without replacement from `dataset`.
PriorSampleBank build_prior_bank(const JammingDataset& dataset, const DiffusionSchedule& schedule,
                                 std::size_t bank_size, Rng& rng);

struct PosteriorOptions {
  /// "marginal": gamma~ from the per-component evidence exponents kappa.
  /// "uniform": gamma~ = 1/J~ (the components are already posterior draws).
  std::string weighting = "marginal";
  bool full_covariance = false;
};

/// Collapsed Gaussian-mixture posterior of the amplitudes given the bank
/// slice {i~_t}. Component j has mean D A^H Sigma_y^{-1} (y - i~_j / beta_bar)
/// and shared covariance Sigma~.
PosteriorGmm amplitude_posterior(const CVector& y, const CMatrix& A,
                                 const std::vector<CVector>& bank_slice, const RVector& sigma_sq,
                                 double noise_var, double t, const DiffusionSchedule& schedule,
                                 const PosteriorOptions& options = {});

/// Same, reusing a factorization built for sigma_e^2(t) and `gram` = A^H A.
PosteriorGmm amplitude_posterior(const CVector& y, const CMatrix& A, const CMatrix& gram,
                                 const MeasurementCovariance& cov,
                                 const std::vector<CVector>& bank_slice, double beta_bar,
                                 const PosteriorOptions& options = {});

/// EM update sigma^2 = diag(Sigma_post) + |mu_post|^2.
RVector update_sigma_sq(const PosteriorGmm& gmm);

/// Noise-variance EM update with lower clamp at zeta.
double update_noise_var(const CVector& y, const CMatrix& A, const PosteriorGmm& gmm,
                        const std::vector<CVector>& bank_slice, double t,
                        const DiffusionSchedule& schedule, double zeta);

struct DmddConfig {
  int n_chains = 1;
  int bank_size = 64;
  int n_steps = 200;
  double rate_min = 0.1;
  double rate_max = 20.0;
  /// zeta = zeta_scale * ||y||^2 / N.
  double zeta_scale = 1e-6;
  double threshold_db = 16.8;
  double coherent_samples = 313.0;
  double corrector_scale = 1.0;
  /// "prior": bank of diffused dataset draws. "posterior": the chains
  /// themselves serve as the bank.
  std::string bank_source = "posterior";
  /// Weighting of bank components; see PosteriorOptions.
  std::string weighting = "uniform";
  double init_sigma_sq = 1e4;
  double init_noise_var = 1.0;
  /// Optional per-bin initial sigma^2 (overrides init_sigma_sq).
  RVector sigma_sq_init;
  bool freeze_sigma_sq = false;
  bool freeze_noise_var = false;
  std::uint64_t seed = 0;

  void validate() const;
  DiffusionSchedule schedule() const { return make_vp_schedule(n_steps, rate_min, rate_max); }
};

struct StepDiagnostics {
  int step = 0;
  double t = 0.0;
  double sigma_w = 0.0;
  double residual_norm = 0.0;
  int corrector_skips = 0;
  bool weight_fallback = false;
};

struct DmddResult {
  CVector mu_post;
  RVector cov_diag;
  RVector sigma_sq;
  double noise_var = 0.0;
  std::vector<CVector> jamming_samples;
  std::vector<Detection> detections;
  std::vector<StepDiagnostics> diagnostics;
};

struct PriorSnapshot {
  double t = 0.0;
  std::vector<CVector> samples;
};

/// Unconditional predictor-corrector sampling of the jamming prior from
/// CN(0, 2 b_1^2 E) at t = 1 down to t = 0. The state is recorded at the
/// grid time nearest to each entry of `snapshot_times`.
std::vector<PriorSnapshot> sample_prior(const ScoreModel& score, const DiffusionSchedule& schedule,
                                        std::size_t count, const std::vector<double>& snapshot_times,
                                        std::uint64_t seed, double corrector_scale = 1.0);

/// Conditional jamming sampling fused with amplitude posterior inference
/// and EM hyperparameter updates, followed by the constant-threshold
/// detector on mu_post at t = 0. `bank` is required when bank_source is
/// "prior".
DmddResult run_dmdd(const CVector& y, const Dictionary& dict, const ScoreModel& score,
                    const PriorSampleBank* bank, const DmddConfig& config);

}  // namespace dmdd
