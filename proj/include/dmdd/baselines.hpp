#pragma once

#include <vector>

#include "dmdd/detection.hpp"
#include "dmdd/jamming.hpp"
#include "dmdd/signal.hpp"

namespace dmdd {

/// |sum_n y[n + d] conj(s[n])| / ||s|| for lags d = 0..N-1, with s the
/// undelayed pulse.
RVector pulse_compress(const CVector& y, const ChirpParams& params);

struct CfarConfig {
  int n_train = 32;
  int n_guard = 4;
  double target_pfa = 1e-5;

  void validate() const;
};

/// Square-law cell-averaging CFAR on a magnitude profile. Near the edges the
/// available training cells on either side are pooled and the threshold
/// factor is recomputed for their count. power_db reports the cell power
/// over the local noise estimate.
std::vector<Detection> cfar_detect(const RVector& profile, const CfarConfig& config);

struct SblResult {
  CVector mu;
  RVector sigma_sq;
  double noise_var = 0.0;
  int iterations = 0;
  bool converged = false;
};

SblResult sbl_solve(const CVector& y, const CMatrix& A, int max_iter = 200, double tol = 1e-4);

/// Second-order jamming statistics for SBL-SOM: eigendecomposition of the
/// loaded sample covariance C^ = (1/M) sum i i^H + 1e-3 tr/N E.
struct JammingMoments {
  CMatrix covariance;
  CMatrix basis;
  RVector eigenvalues;

  static JammingMoments from_samples(const std::vector<CVector>& samples);
  static JammingMoments from_dataset(const JammingDataset& dataset, std::size_t max_samples = 0);
};

/// SBL with noise covariance C^ + sigma_w^2 E in place of sigma_w^2 E.
SblResult sbl_som_solve(const CVector& y, const CMatrix& A, const JammingMoments& moments,
                        int max_iter = 200, double tol = 1e-4);
SblResult sbl_som_solve(const CVector& y, const CMatrix& A, const JammingDataset& dataset,
                        int max_iter = 200, double tol = 1e-4);

struct AdmmConfig {
  /// Weight of the l1 term in 0.5 ||y - Ax - Fz||^2 + lambda (||x||_1 + ||z||_1).
  double lambda = 1.0;
  /// Initial penalty; adapted by residual balancing during the first adapt_iters iterations.
  double rho = 1.0;
  int adapt_iters = 200;
  int max_iter = 2000;
  double tol = 1e-6;
  /// Fourier atoms M; 0 means 4N.
  int freq_grid_size = 0;
  double f_min = -7.5e6;
  double f_max = 7.5e6;

  void validate() const;
};

struct AdmmResult {
  CVector x;
  CVector z;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  std::vector<double> objective_history;
};

/// a(f)[n] = exp(j 2 pi f n Ts) for M uniformly spaced f in [f_min, f_max].
CMatrix fourier_dictionary(Eigen::Index n_samples, double sample_freq, int count, double f_min,
                           double f_max);

/// Largest lambda with a nonzero solution: max |B^H y|, B = [A F].
double admm_lambda_max(const CVector& y, const CMatrix& A, const CMatrix& F);

double lasso_objective(const CVector& y, const CMatrix& B, const CVector& w, double lambda);

AdmmResult admm_solve(const CVector& y, const CMatrix& A, const CMatrix& F, const AdmmConfig& config);
AdmmResult admm_solve(const CVector& y, const CMatrix& A, double sample_freq, const AdmmConfig& config);

}  // namespace dmdd
