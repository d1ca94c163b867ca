#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dmdd/baselines.hpp"
#include "dmdd/engine.hpp"
#include "dmdd/jamming.hpp"
#include "dmdd/signal.hpp"

namespace dmdd {

struct TrialScore {
  std::vector<bool> hits;
  std::size_t false_alarms = 0;
};

/// A target counts as hit when an unused detection lies within
/// `radius_bins` of its nearest grid bin; leftover detections are false
/// alarms.
TrialScore score_trial(const std::vector<double>& true_ranges, const RangeGrid& grid,
                       const std::vector<std::size_t>& detected_bins, int radius_bins = 1);

struct WilsonInterval {
  double lo = 0.0;
  double hi = 1.0;
};

/// 95% Wilson score interval for k successes out of n.
WilsonInterval wilson_interval(double successes, double trials, double z = 1.959963984540054);

struct SceneConfig {
  ChirpParams chirp = desk_chirp(512);
  std::size_t grid_size = 200;
  std::size_t first_bin = 0;
  int n_targets = 2;
  int min_separation_bins = 4;
  bool off_grid = false;
  /// "comb", "gaussian" or "none".
  std::string jamming = "comb";
  CombParams comb;
  std::vector<Tone> tones;  // for "gaussian"
  double sjr_db = -20.0;
  /// Used to set target power when there is no jamming.
  double reference_amplitude = 0.1;

  RangeGrid grid() const { return RangeGrid::sample_aligned(chirp, grid_size, first_bin); }
  double coherent_samples() const { return static_cast<double>(chirp.pulse_sample_count()); }
};

struct ExperimentConfig {
  std::vector<std::string> methods{"pc", "sbl", "dmdd"};
  SceneConfig scene;
  std::vector<double> sweep_db{14.0, 18.0, 22.0};
  int n_trials = 100;
  std::uint64_t seed = 1;
  int radius_bins = 1;
  double threshold_db = 16.8;
  /// Worker threads over trials; results do not depend on it.
  int threads = 1;

  DmddConfig dmdd;
  CfarConfig cfar;
  AdmmConfig admm;
  /// ADMM lambda = scale * sigma_w * ||a|| * sqrt(2 ln(Q + M)).
  double admm_lambda_scale = 1.0;
  int sbl_max_iter = 200;
  double sbl_tol = 1e-4;

  std::string checkpoint_path;
  /// Jamming dataset for SBL-SOM moments and the DMDD prior bank.
  std::string dataset_path;
  std::size_t som_samples = 0;

  void validate() const;
};

struct TrialRecord {
  int trial = 0;
  double sweep_db = 0.0;
  std::string method;
  std::vector<std::size_t> true_bins;
  std::vector<std::size_t> detected_bins;
  std::vector<bool> hits;
  std::size_t false_alarms = 0;
  double runtime_s = 0.0;
  bool failed = false;
  std::string error;
};

struct CurvePoint {
  double sweep_db = 0.0;
  double pd = 0.0;
  double pfa = 0.0;
  std::size_t n = 0;
  double ci_lo = 0.0;
  double ci_hi = 1.0;
  std::size_t failures = 0;
};

struct PerformanceCurve {
  std::string method;
  std::vector<CurvePoint> points;
};

struct Scenario {
  Scene scene;
  std::vector<std::size_t> true_bins;
  double noise_var = 0.0;
};

/// Everything a trial needs beyond the config: the dictionary and any
/// loaded models.
struct ExperimentContext {
  Dictionary dict;
  std::shared_ptr<const ScoreModel> score;
  std::shared_ptr<const JammingDataset> dataset;
  std::shared_ptr<const JammingMoments> moments;
  std::shared_ptr<const GaussianJammingPrior> gaussian_prior;
  CMatrix fourier;

  /// Loads the checkpoint/dataset named by the config. Missing files raise
  /// MissingPath naming the file.
  static ExperimentContext prepare(const ExperimentConfig& config);
};

/// Scene for one trial: targets on random distinct bins at the given
/// integrated SNR, fresh jamming at the dataset scale, SJR fixed by
/// scaling the targets.
Scenario make_scenario(const ExperimentConfig& config, const ExperimentContext& ctx,
                       double integrated_snr_db, std::uint64_t seed);

/// Grid bins a method declares as targets.
std::vector<std::size_t> run_method(const std::string& method, const Scenario& scenario,
                                    const ExperimentConfig& config, const ExperimentContext& ctx,
                                    std::uint64_t seed);

struct MonteCarloResult {
  std::vector<PerformanceCurve> curves;
  std::vector<TrialRecord> records;
};

using TrialCallback = std::function<void(const TrialRecord&)>;

MonteCarloResult run_monte_carlo(const ExperimentConfig& config, const ExperimentContext& ctx,
                                 const TrialCallback& on_trial = {});

std::vector<PerformanceCurve> aggregate_curves(const std::vector<TrialRecord>& records,
                                               const ExperimentConfig& config);

/// Writes curves.csv, trials.csv, timing.csv and curves.svg into out_dir.
void emit_results(const std::vector<PerformanceCurve>& curves, const std::vector<TrialRecord>& records,
                  const std::string& out_dir);
std::vector<PerformanceCurve> read_curves_csv(const std::string& path);
std::string render_curves_svg(const std::vector<PerformanceCurve>& curves);

}  // namespace dmdd
