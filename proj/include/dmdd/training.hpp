#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dmdd/jamming.hpp"
#include "dmdd/unet.hpp"

namespace dmdd {

struct TrainConfig {
  int batch_size = 128;
  double learning_rate = 1e-4;
  int n_epochs = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Loss weight lambda(t): "variance" is 2 b_t^2, "none" is 1.
  std::string weighting = "variance";
  double t_min = 1e-3;
  /// Samples drawn per epoch; 0 uses the whole dataset.
  std::size_t samples_per_epoch = 0;
  /// Write a checkpoint every this many epochs (0 disables).
  int checkpoint_every = 1;
  std::string checkpoint_path;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
  bool aborted = false;
  std::string message;
};

/// Weighted denoising score-matching loss of any score model on a batch of
/// clean time-domain samples (no gradients). Each sample draws
/// t ~ U(t_min, 1) and i_t from the forward kernel.
double dsm_loss(const ScoreModel& model, const std::vector<CVector>& batch,
                const DiffusionSchedule& schedule, Rng& rng, double t_min = 1e-3,
                const std::string& weighting = "variance");

/// Same loss for a network, with the parameter gradient accumulated into
/// `grad` (averaged over the batch). `batch` is already in the network's
/// working domain.
template <typename T>
double dsm_loss_and_grad(const UNet1d<T>& net, const std::vector<CVector>& batch,
                         const DiffusionSchedule& schedule, Rng& rng,
                         typename UNet1d<T>::Vec& grad, double t_min = 1e-3,
                         const std::string& weighting = "variance");

using TrainProgress = std::function<void(int epoch, double mean_loss)>;

/// Adam on shuffled epochs. A non-finite batch loss restores the last good
/// parameters and stops.
TrainResult train(ConvScoreNet& net, const JammingDataset& dataset, const TrainConfig& config,
                  const TrainProgress& progress = {});

}  // namespace dmdd
