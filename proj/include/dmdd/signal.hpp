#pragma once

#include <cstdint>
#include <vector>

#include "dmdd/common.hpp"

namespace dmdd {

/// LFM pulse and receiver sampling parameters.
///
/// The transmitted pulse is s(tau) = exp(j(2 pi f_start tau + pi mu tau^2)) on
/// 0 <= tau < pulse_width. `start_freq = 0` gives the plain analytic chirp
/// exp(j pi mu tau^2); `start_freq = -bandwidth / 2` centres the sweep on DC.
struct ChirpParams {
  double carrier_freq = 8.11e9;
  double fm_slope = 1.5e12;
  double pulse_width = 10e-6;
  double pulse_duration = 120e-6;
  double bandwidth = 15e6;
  double sample_freq = 31.25e6;
  double start_freq = 0.0;

  double sample_interval() const { return 1.0 / sample_freq; }
  /// Fast-time samples per pulse repetition window.
  Eigen::Index num_samples() const;
  /// Continuous-time pulse length in samples (T_p * f_s, may be fractional).
  double pulse_samples() const { return pulse_width * sample_freq; }
  /// Samples n >= 0 with n Ts < T_p: the coherent integration length N_p.
  Eigen::Index pulse_sample_count() const;
  void validate() const;
};

/// Table I waveform, with the window shortened to `num_samples` samples and
/// the sweep centred on DC.
ChirpParams desk_chirp(Eigen::Index num_samples = 512);

struct RangeGrid {
  std::vector<double> ranges;
  double spacing = 0.0;

  static RangeGrid uniform(double start, double spacing, std::size_t count);
  /// Spacing equal to one fast-time sample, c / (2 f_s).
  static RangeGrid sample_aligned(const ChirpParams& params, std::size_t count,
                                  std::size_t first_bin = 0);
  std::size_t size() const { return ranges.size(); }
  /// Index of the grid point nearest to `range`.
  std::size_t nearest(double range) const;
  void validate() const;
};

struct Dictionary {
  CMatrix atoms;  // N x Q
  RangeGrid grid;
};

struct Target {
  double range = 0.0;
  cplx amplitude{0.0, 0.0};
};

struct Scene {
  std::vector<double> true_ranges;
  std::vector<cplx> true_amplitudes;
  CVector echo;  // sum_k x_k s_N(r_k)
  CVector jamming;
  CVector noise;
  double noise_var = 0.0;
  std::uint64_t noise_seed = 0;
  CVector measurement;
};

double delay_of_range(double range);

CVector sample_baseband(const ChirpParams& params, double delay);

Dictionary build_dictionary(const ChirpParams& params, const RangeGrid& grid);

/// Synthesizes y = sum_k x_k s_N(r_k) + i + w at the true (possibly off-grid)
/// ranges, with w ~ CN(0, noise_var I) drawn from `rng_seed`.
Scene synthesize_scene(const ChirpParams& params, const std::vector<Target>& targets,
                       const CVector& jamming, double noise_var,
                       std::uint64_t rng_seed);

/// Same scene with a different jamming component; echo and noise are kept.
Scene with_jamming(const Scene& scene, const CVector& jamming);

double compute_sjr(const Scene& scene);
double compute_snr(cplx amplitude, double noise_var);

CVector scale_jamming_to_sjr(const Scene& scene, double target_sjr_db);

}  // namespace dmdd
