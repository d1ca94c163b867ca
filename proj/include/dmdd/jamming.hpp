#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dmdd/common.hpp"

namespace dmdd {

struct CombParams {
  std::pair<int, int> k_range{5, 10};
  std::pair<double, double> freq_range{-7.5e6, 7.5e6};
  std::pair<double, double> spacing_range{0.5e6, 1.5e6};
  std::pair<double, double> amp_range{0.5, 1.5};

  void validate() const;
};

struct CombRealization {
  int n_tones = 0;
  double start_freq = 0.0;
  double spacing = 0.0;
  std::vector<double> amplitudes;
  std::vector<double> phases;
  CVector signal;

  std::vector<double> tone_freqs() const;
};

/// sum_k A_k exp(j(2 pi (f0 + k df) n Ts + phi_k)), k = 0..K-1.
CVector synthesize_comb(double start_freq, double spacing,
                        const std::vector<double>& amplitudes,
                        const std::vector<double>& phases, Eigen::Index n_samples,
                        double sample_freq);

CombRealization draw_comb(const CombParams& params, Eigen::Index n_samples,
                          double sample_freq, Rng& rng);

struct GaussianJammingPrior {
  CMatrix covariance;
  CMatrix factor;  // covariance = factor * factor^H

  static GaussianJammingPrior from_covariance(CMatrix covariance);
  Eigen::Index size() const { return covariance.rows(); }
};

struct Tone {
  double freq = 0.0;
  double power = 0.0;
};

/// C = sum_k p_k a(f_k) a(f_k)^H with a(f)[n] = exp(j 2 pi f n Ts).
GaussianJammingPrior gaussian_prior_from_tones(const std::vector<Tone>& tones,
                                               Eigen::Index n_samples,
                                               double sample_freq);

CVector draw_gaussian_jamming(const GaussianJammingPrior& prior, Rng& rng);

inline constexpr int kDatasetFormatVersion = 1;

struct DatasetMetadata {
  std::size_t count = 0;
  Eigen::Index length = 0;
  int version = kDatasetFormatVersion;
  std::string generator = "{}";  // JSON object describing the source
};

/// Jamming-only training/bank data. Samples are held as interleaved float32
/// pairs, the same layout as the on-disk payload.
class JammingDataset {
 public:
  JammingDataset() = default;
  JammingDataset(Eigen::Index length, std::string generator = "{}");

  std::size_t size() const { return meta_.count; }
  Eigen::Index length() const { return meta_.length; }
  const DatasetMetadata& metadata() const { return meta_; }

  void push_back(const CVector& sample);
  CVector sample(std::size_t index) const;
  const std::vector<std::complex<float>>& raw() const { return data_; }

  friend void write_dataset(const std::string& path, const JammingDataset& dataset);
  friend JammingDataset read_dataset(const std::string& path, Eigen::Index expected_length);

 private:
  DatasetMetadata meta_;
  std::vector<std::complex<float>> data_;
};

JammingDataset generate_comb_dataset(const CombParams& params, std::size_t count,
                                     Eigen::Index n_samples, double sample_freq,
                                     std::uint64_t seed);

void write_dataset(const std::string& path, const JammingDataset& dataset);
/// `expected_length` <= 0 accepts any N.
JammingDataset read_dataset(const std::string& path, Eigen::Index expected_length = 0);

}  // namespace dmdd
