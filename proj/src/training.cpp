#include "dmdd/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dmdd/checkpoint.hpp"

namespace dmdd {

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  if (n_epochs < 0) throw Error(ErrorCode::InvalidArgument, "n_epochs must be >= 0");
  if (!(t_min > 0.0 && t_min < 1.0)) throw Error(ErrorCode::InvalidArgument, "t_min must lie in (0, 1)");
  if (weighting != "variance" && weighting != "none")
    throw Error(ErrorCode::InvalidArgument, "weighting must be 'variance' or 'none'");
}

namespace {

double loss_weight(const std::string& weighting, double b_sq) {
  return weighting == "none" ? 1.0 : 2.0 * b_sq;
}

}  // namespace

double dsm_loss(const ScoreModel& model, const std::vector<CVector>& batch,
                const DiffusionSchedule& schedule, Rng& rng, double t_min,
                const std::string& weighting) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch");
  std::uniform_real_distribution<double> t_dist(t_min, 1.0);
  double total = 0.0;
  for (const auto& i0 : batch) {
    const double t = t_dist(rng);
    const CVector i_t = forward_perturb(i0, t, schedule, rng);
    const CVector target = conditional_score_target(i_t, i0, t, schedule);
    total += loss_weight(weighting, schedule.b_sq_at(t)) *
             (model.evaluate(i_t, t) - target).squaredNorm();
  }
  return total / static_cast<double>(batch.size());
}

template <typename T>
double dsm_loss_and_grad(const UNet1d<T>& net, const std::vector<CVector>& batch,
                         const DiffusionSchedule& schedule, Rng& rng,
                         typename UNet1d<T>::Vec& grad, double t_min,
                         const std::string& weighting) {
  using Mat = typename UNet1d<T>::Mat;
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch");
  if (grad.size() != net.num_params()) grad = UNet1d<T>::Vec::Zero(net.num_params());
  std::uniform_real_distribution<double> t_dist(t_min, 1.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  typename UNet1d<T>::Cache cache;
  double total = 0.0;
  for (const auto& i0 : batch) {
    const double t = t_dist(rng);
    const double b_sq = schedule.b_sq_at(t);
    const CVector eps = complex_normal_vector(rng, i0.size(), 2.0);
    const CVector i_t = schedule.beta_bar_at(t) * i0 + std::sqrt(b_sq) * eps;
    const Mat out = net.forward(to_channels<T>(i_t), t, &cache);
    const Mat diff = out - to_channels<T>(eps);
    // score = -n_hat/(2b) and target = -eps/(2b), so the weighted squared
    // error is w/(4 b^2) * ||n_hat - eps||^2.
    const double scale = loss_weight(weighting, b_sq) / (4.0 * b_sq);
    total += scale * static_cast<double>(diff.squaredNorm());
    net.backward(cache, (static_cast<T>(2.0 * scale * inv_b) * diff).eval(), grad);
  }
  return total * inv_b;
}

template double dsm_loss_and_grad<float>(const UNet1d<float>&, const std::vector<CVector>&,
                                         const DiffusionSchedule&, Rng&, Eigen::VectorXf&, double,
                                         const std::string&);
template double dsm_loss_and_grad<double>(const UNet1d<double>&, const std::vector<CVector>&,
                                          const DiffusionSchedule&, Rng&, Eigen::VectorXd&, double,
                                          const std::string&);

TrainResult train(ConvScoreNet& net, const JammingDataset& dataset, const TrainConfig& config,
                  const TrainProgress& progress) {
  config.validate();
  if (dataset.length() != net.length())
    throw Error(ErrorCode::LengthMismatch, "dataset N differs from the network length");
  if (dataset.size() < static_cast<std::size_t>(config.batch_size))
    throw Error(ErrorCode::InvalidArgument, "dataset is smaller than one batch");

  auto& params = net.net().params();
  const Eigen::Index n_params = params.size();
  Eigen::VectorXf m = Eigen::VectorXf::Zero(n_params);
  Eigen::VectorXf v = Eigen::VectorXf::Zero(n_params);
  Eigen::VectorXf grad(n_params);
  Eigen::VectorXf last_good = params;

  const std::size_t per_epoch =
      config.samples_per_epoch ? std::min(config.samples_per_epoch, dataset.size()) : dataset.size();
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t n_batches = std::max<std::size_t>(1, per_epoch / bs);

  TrainResult result;
  std::vector<std::size_t> order(dataset.size());
  std::vector<CVector> batch(bs);
  double b1_pow = 1.0, b2_pow = 1.0;
  Rng noise_rng(derive_seed(config.seed, 2, 0));

  for (int epoch = 0; epoch < config.n_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, 1, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_total = 0.0;
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      for (std::size_t k = 0; k < bs; ++k)
        batch[k] = net.to_domain(dataset.sample(order[bi * bs + k]));
      grad.setZero();
      const double loss = dsm_loss_and_grad<float>(net.net(), batch, net.schedule(), noise_rng, grad,
                                                   config.t_min, config.weighting);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        params = last_good;
        result.aborted = true;
        result.message = "non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                         std::to_string(bi + 1) + "; restored last good parameters";
        return result;
      }
      b1_pow *= config.adam_beta1;
      b2_pow *= config.adam_beta2;
      const float b1 = static_cast<float>(config.adam_beta1);
      const float b2 = static_cast<float>(config.adam_beta2);
      m = b1 * m + (1.0f - b1) * grad;
      v = b2 * v + (1.0f - b2) * grad.cwiseAbs2();
      const float step = static_cast<float>(config.learning_rate / (1.0 - b1_pow));
      const float v_corr = static_cast<float>(1.0 / (1.0 - b2_pow));
      params.array() -= step * m.array() /
                        ((v.array() * v_corr).sqrt() + static_cast<float>(config.adam_eps));
      epoch_total += loss;
      ++result.steps;
    }
    last_good = params;
    const double mean_loss = epoch_total / static_cast<double>(n_batches);
    result.epoch_loss.push_back(mean_loss);
    net.training_meta["epochs"] = epoch + 1;
    net.training_meta["steps"] = result.steps;
    net.training_meta["loss_history"] = result.epoch_loss;
    net.training_meta["learning_rate"] = config.learning_rate;
    net.training_meta["batch_size"] = config.batch_size;
    net.training_meta["seed"] = config.seed;
    net.training_meta["dataset_count"] = dataset.size();
    if (!config.checkpoint_path.empty() && config.checkpoint_every > 0 &&
        ((epoch + 1) % config.checkpoint_every == 0 || epoch + 1 == config.n_epochs))
      save_checkpoint(net, config.checkpoint_path);
    if (progress) progress(epoch + 1, mean_loss);
  }
  return result;
}

}  // namespace dmdd
