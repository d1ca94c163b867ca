#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dmdd/common.hpp"
#include "dmdd/diffusion.hpp"
#include "dmdd/score_model.hpp"

namespace dmdd {

/// Architecture of the 1-D encoder/decoder.
///
/// channels[0] is the width of the full-resolution stem; each further entry
/// adds a stride-2 encoder stage of that width. The bottleneck keeps the
/// last width and the decoder mirrors the encoder with transposed
/// convolutions and skip concatenation.
struct UNetSpec {
  std::vector<int> channels{32, 64, 64};
  int groups = 8;
  int embed_dim = 32;
  Eigen::Index length = 512;
  /// Run the network on the centred unitary DFT of the signal.
  bool frequency_domain = false;

  int levels() const { return static_cast<int>(channels.size()) - 1; }
  void validate() const;
  nlohmann::json to_json() const;
  static UNetSpec from_json(const nlohmann::json& j);
  bool operator==(const UNetSpec&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<Eigen::Index> shape;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

/// Time-conditioned U-Net over a 2 x L (re, im) signal with hand-written
/// reverse-mode gradients. Parameters live in one flat vector; weight
/// matrices are column-major views into it.
template <typename T>
class UNet1d {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  struct BlockCache {
    Mat cols;
    Mat normed;
    std::vector<T> rstd;
    Mat pre_act;
  };
  struct Cache {
    Vec embed;
    std::vector<BlockCache> blocks;
    std::vector<Mat> tconv_in;
    Mat head_in;
  };

  explicit UNet1d(UNetSpec spec);

  const UNetSpec& spec() const { return spec_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  Eigen::Index num_params() const { return params_.size(); }
  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  void init(Rng& rng);
  /// Sinusoidal embedding of 1000 t.
  Vec embed_time(double t) const;
  /// x is 2 x L. The cache, when given, is filled for backward().
  Mat forward(const Mat& x, double t, Cache* cache = nullptr) const;
  /// Accumulates d(loss)/d(params) into grad given d(loss)/d(output).
  void backward(const Cache& cache, const Mat& d_out, Vec& grad) const;

  template <typename U>
  UNet1d<U> cast() const {
    UNet1d<U> out(spec_);
    out.params() = params_.template cast<U>();
    return out;
  }

 private:
  struct Conv {
    int cin = 0, cout = 0, kernel = 0, stride = 1;
    Eigen::Index w = 0, b = 0;
  };
  struct TConv {
    int cin = 0, cout = 0;
    Eigen::Index w = 0, b = 0;
  };
  struct Block {
    Conv conv;
    int groups = 1;
    Eigen::Index gamma = 0, beta = 0, emb_w = 0, emb_b = 0;
  };

  Eigen::Index add_tensor(const std::string& name, std::vector<Eigen::Index> shape);
  Block make_block(const std::string& name, int cin, int cout, int stride);
  Conv make_conv(const std::string& name, int cin, int cout, int kernel, int stride);

  Mat conv_forward(const Conv& c, const Mat& x, Mat* cols_out) const;
  Mat block_forward(const Block& blk, const Mat& x, const Vec& emb, BlockCache* cache) const;
  Mat block_backward(const Block& blk, const BlockCache& cache, const Mat& d_out, const Vec& emb,
                     Eigen::Index in_len, Vec& grad, bool need_dx) const;
  Mat tconv_forward(const TConv& c, const Mat& x) const;
  Mat tconv_backward(const TConv& c, const Mat& x, const Mat& d_out, Vec& grad) const;

  UNetSpec spec_;
  std::vector<TensorInfo> tensors_;
  Vec params_;
  Eigen::Index n_params_ = 0;

  Block stem_;
  std::vector<Block> down_;
  Block mid_;
  std::vector<TConv> up_t_;
  std::vector<Block> up_;
  Conv head_;
};

extern template class UNet1d<float>;
extern template class UNet1d<double>;

/// Splits a complex signal into a 2 x N (re, im) matrix and back.
template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> to_channels(const CVector& x);
template <typename T>
CVector from_channels(const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& m);

/// Centred unitary DFT (DC in the middle) and its inverse.
CVector centered_dft(const CVector& x);
CVector centered_idft(const CVector& x);

/// Trainable score network. The network predicts the normalized noise
/// n_hat, and the score is -n_hat / (2 b_t) in the network's domain.
class ConvScoreNet : public ScoreModel {
 public:
  static constexpr double kMinTime = 1e-3;

  ConvScoreNet(UNetSpec spec, DiffusionSchedule schedule);

  CVector evaluate(const CVector& i_t, double t) const override;
  Eigen::Index length() const override { return net_.spec().length; }

  UNet1d<float>& net() { return net_; }
  const UNet1d<float>& net() const { return net_; }
  const UNetSpec& spec() const { return net_.spec(); }
  const DiffusionSchedule& schedule() const { return schedule_; }

  /// Time-domain signal to the network's working domain, and back.
  CVector to_domain(const CVector& x) const;
  CVector from_domain(const CVector& x) const;

  nlohmann::json training_meta = nlohmann::json::object();

 private:
  UNet1d<float> net_;
  DiffusionSchedule schedule_;
};

}  // namespace dmdd
