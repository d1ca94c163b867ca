#include "dmdd/unet.hpp"

#include <cmath>
#include <unsupported/Eigen/FFT>

namespace dmdd {

void UNetSpec::validate() const {
  if (channels.size() < 2)
    throw Error(ErrorCode::InvalidArgument, "U-Net needs a stem and at least one stage");
  if (groups < 1 || embed_dim < 2 || embed_dim % 2 != 0)
    throw Error(ErrorCode::InvalidArgument, "bad group count or embedding size");
  for (int c : channels)
    if (c < 1 || c % groups != 0)
      throw Error(ErrorCode::InvalidArgument, "channel widths must be multiples of the group count");
  const Eigen::Index stride = Eigen::Index{1} << levels();
  if (length < stride || length % stride != 0)
    throw Error(ErrorCode::InvalidArgument,
                "signal length must be divisible by 2^levels = " + std::to_string(stride));
}

nlohmann::json UNetSpec::to_json() const {
  return {{"channels", channels},
          {"groups", groups},
          {"embed_dim", embed_dim},
          {"length", length},
          {"domain", frequency_domain ? "frequency" : "time"}};
}

UNetSpec UNetSpec::from_json(const nlohmann::json& j) {
  UNetSpec s;
  s.channels = j.value("channels", s.channels);
  s.groups = j.value("groups", s.groups);
  s.embed_dim = j.value("embed_dim", s.embed_dim);
  s.length = j.value("length", s.length);
  const std::string domain = j.value("domain", std::string("time"));
  if (domain != "time" && domain != "frequency")
    throw Error(ErrorCode::InvalidArgument, "network domain must be 'time' or 'frequency'");
  s.frequency_domain = domain == "frequency";
  return s;
}

template <typename T>
Eigen::Index UNet1d<T>::add_tensor(const std::string& name, std::vector<Eigen::Index> shape) {
  TensorInfo info;
  info.name = name;
  info.shape = std::move(shape);
  info.offset = n_params_;
  info.size = 1;
  for (auto d : info.shape) info.size *= d;
  n_params_ += info.size;
  tensors_.push_back(info);
  return info.offset;
}

template <typename T>
typename UNet1d<T>::Conv UNet1d<T>::make_conv(const std::string& name, int cin, int cout,
                                              int kernel, int stride) {
  Conv c{cin, cout, kernel, stride, 0, 0};
  c.w = add_tensor(name + ".weight", {cout, cin, kernel});
  c.b = add_tensor(name + ".bias", {cout});
  return c;
}

template <typename T>
typename UNet1d<T>::Block UNet1d<T>::make_block(const std::string& name, int cin, int cout,
                                                int stride) {
  Block b;
  b.conv = make_conv(name + ".conv", cin, cout, 3, stride);
  b.groups = spec_.groups;
  b.gamma = add_tensor(name + ".norm.gamma", {cout});
  b.beta = add_tensor(name + ".norm.beta", {cout});
  b.emb_w = add_tensor(name + ".time.weight", {cout, spec_.embed_dim});
  b.emb_b = add_tensor(name + ".time.bias", {cout});
  return b;
}

template <typename T>
UNet1d<T>::UNet1d(UNetSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const auto& ch = spec_.channels;
  const int levels = spec_.levels();
  stem_ = make_block("stem", 2, ch[0], 1);
  for (int k = 1; k <= levels; ++k)
    down_.push_back(make_block("down" + std::to_string(k), ch[k - 1], ch[k], 2));
  mid_ = make_block("mid", ch[levels], ch[levels], 1);
  for (int k = levels; k >= 1; --k) {
    const std::string name = "up" + std::to_string(k);
    TConv tc{ch[k], ch[k - 1], 0, 0};
    tc.w = add_tensor(name + ".tconv.weight", {2, ch[k - 1], ch[k]});
    tc.b = add_tensor(name + ".tconv.bias", {ch[k - 1]});
    up_t_.push_back(tc);
    up_.push_back(make_block(name, 2 * ch[k - 1], ch[k - 1], 1));
  }
  head_ = make_conv("head", ch[0], 2, 1, 1);
  params_ = Vec::Zero(n_params_);
}

template <typename T>
void UNet1d<T>::init(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Eigen::Index off, Eigen::Index n, double std) {
    for (Eigen::Index k = 0; k < n; ++k) params_[off + k] = static_cast<T>(std * normal(rng));
  };
  params_.setZero();
  auto init_block = [&](const Block& b) {
    fill(b.conv.w, Eigen::Index{b.conv.cout} * b.conv.cin * b.conv.kernel,
         std::sqrt(2.0 / (b.conv.cin * b.conv.kernel)));
    params_.segment(b.gamma, b.conv.cout).setOnes();
    fill(b.emb_w, Eigen::Index{b.conv.cout} * spec_.embed_dim, std::sqrt(1.0 / spec_.embed_dim));
  };
  init_block(stem_);
  for (const auto& b : down_) init_block(b);
  init_block(mid_);
  for (std::size_t k = 0; k < up_.size(); ++k) {
    fill(up_t_[k].w, Eigen::Index{2} * up_t_[k].cout * up_t_[k].cin, std::sqrt(1.0 / up_t_[k].cin));
    init_block(up_[k]);
  }
  fill(head_.w, Eigen::Index{2} * head_.cin, 0.1 * std::sqrt(1.0 / head_.cin));
}

template <typename T>
typename UNet1d<T>::Vec UNet1d<T>::embed_time(double t) const {
  const int half = spec_.embed_dim / 2;
  Vec e(spec_.embed_dim);
  const double pos = 1000.0 * t;
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    e[k] = static_cast<T>(std::sin(pos * freq));
    e[k + half] = static_cast<T>(std::cos(pos * freq));
  }
  return e;
}

template <typename T>
typename UNet1d<T>::Mat UNet1d<T>::conv_forward(const Conv& c, const Mat& x, Mat* cols_out) const {
  const Eigen::Index len = x.cols();
  const int pad = (c.kernel - 1) / 2;
  const Eigen::Index out_len = (len + 2 * pad - c.kernel) / c.stride + 1;
  Mat cols = Mat::Zero(Eigen::Index{c.cin} * c.kernel, out_len);
  for (int ci = 0; ci < c.cin; ++ci)
    for (int kk = 0; kk < c.kernel; ++kk) {
      const Eigen::Index row = Eigen::Index{ci} * c.kernel + kk;
      for (Eigen::Index lo = 0; lo < out_len; ++lo) {
        const Eigen::Index li = lo * c.stride + kk - pad;
        if (li >= 0 && li < len) cols(row, lo) = x(ci, li);
      }
    }
  Eigen::Map<const Mat> w(params_.data() + c.w, c.cout, Eigen::Index{c.cin} * c.kernel);
  Eigen::Map<const Vec> b(params_.data() + c.b, c.cout);
  Mat out = w * cols;
  out.colwise() += b;
  if (cols_out) *cols_out = std::move(cols);
  return out;
}

template <typename T>
typename UNet1d<T>::Mat UNet1d<T>::block_forward(const Block& blk, const Mat& x, const Vec& emb,
                                                 BlockCache* cache) const {
  Mat cols;
  Mat z = conv_forward(blk.conv, x, &cols);
  const Eigen::Index c = z.rows(), len = z.cols();
  const Eigen::Index per = c / blk.groups;
  Mat normed(c, len);
  std::vector<T> rstd(static_cast<std::size_t>(blk.groups));
  for (int g = 0; g < blk.groups; ++g) {
    auto zg = z.middleRows(g * per, per);
    const T mean = zg.mean();
    const T var = (zg.array() - mean).square().mean();
    const T rs = T(1) / std::sqrt(var + T(1e-5));
    rstd[static_cast<std::size_t>(g)] = rs;
    normed.middleRows(g * per, per) = (zg.array() - mean) * rs;
  }
  Eigen::Map<const Vec> gamma(params_.data() + blk.gamma, c);
  Eigen::Map<const Vec> beta(params_.data() + blk.beta, c);
  Eigen::Map<const Mat> ew(params_.data() + blk.emb_w, c, spec_.embed_dim);
  Eigen::Map<const Vec> eb(params_.data() + blk.emb_b, c);
  const Vec shift = beta + ew * emb + eb;
  Mat pre = gamma.asDiagonal() * normed;
  pre.colwise() += shift;
  Mat out = pre.cwiseMax(T(0));
  if (cache) {
    cache->cols = std::move(cols);
    cache->normed = std::move(normed);
    cache->rstd = std::move(rstd);
    cache->pre_act = std::move(pre);
  }
  return out;
}

template <typename T>
typename UNet1d<T>::Mat UNet1d<T>::block_backward(const Block& blk, const BlockCache& cache,
                                                  const Mat& d_out, const Vec& emb,
                                                  Eigen::Index in_len, Vec& grad,
                                                  bool need_dx) const {
  const Eigen::Index c = d_out.rows(), len = d_out.cols();
  const Mat d_pre = (cache.pre_act.array() > T(0)).select(d_out, T(0));
  const Vec d_shift = d_pre.rowwise().sum();
  grad.segment(blk.beta, c) += d_shift;
  grad.segment(blk.emb_b, c) += d_shift;
  Eigen::Map<Mat>(grad.data() + blk.emb_w, c, spec_.embed_dim) += d_shift * emb.transpose();
  grad.segment(blk.gamma, c) += d_pre.cwiseProduct(cache.normed).rowwise().sum();

  Eigen::Map<const Vec> gamma(params_.data() + blk.gamma, c);
  const Mat d_norm = gamma.asDiagonal() * d_pre;
  const Eigen::Index per = c / blk.groups;
  const T m = static_cast<T>(per * len);
  Mat dz(c, len);
  for (int g = 0; g < blk.groups; ++g) {
    auto dn = d_norm.middleRows(g * per, per);
    auto xn = cache.normed.middleRows(g * per, per);
    const T s1 = dn.sum();
    const T s2 = dn.cwiseProduct(xn).sum();
    dz.middleRows(g * per, per) =
        (cache.rstd[static_cast<std::size_t>(g)] / m) * (m * dn.array() - s1 - xn.array() * s2);
  }

  const Conv& cv = blk.conv;
  const Eigen::Index kdim = Eigen::Index{cv.cin} * cv.kernel;
  Eigen::Map<Mat>(grad.data() + cv.w, cv.cout, kdim) += dz * cache.cols.transpose();
  grad.segment(cv.b, cv.cout) += dz.rowwise().sum();
  if (!need_dx) return Mat();

  Eigen::Map<const Mat> w(params_.data() + cv.w, cv.cout, kdim);
  const Mat d_cols = w.transpose() * dz;
  const int pad = (cv.kernel - 1) / 2;
  Mat dx = Mat::Zero(cv.cin, in_len);
  for (int ci = 0; ci < cv.cin; ++ci)
    for (int kk = 0; kk < cv.kernel; ++kk) {
      const Eigen::Index row = Eigen::Index{ci} * cv.kernel + kk;
      for (Eigen::Index lo = 0; lo < len; ++lo) {
        const Eigen::Index li = lo * cv.stride + kk - pad;
        if (li >= 0 && li < in_len) dx(ci, li) += d_cols(row, lo);
      }
    }
  return dx;
}

template <typename T>
typename UNet1d<T>::Mat UNet1d<T>::tconv_forward(const TConv& c, const Mat& x) const {
  Eigen::Map<const Mat> w(params_.data() + c.w, 2 * c.cout, c.cin);
  Eigen::Map<const Vec> b(params_.data() + c.b, c.cout);
  const Mat z = w * x;
  const Eigen::Index len = x.cols();
  Mat out(c.cout, 2 * len);
  for (Eigen::Index l = 0; l < len; ++l) {
    out.col(2 * l) = z.col(l).head(c.cout) + b;
    out.col(2 * l + 1) = z.col(l).tail(c.cout) + b;
  }
  return out;
}

template <typename T>
typename UNet1d<T>::Mat UNet1d<T>::tconv_backward(const TConv& c, const Mat& x, const Mat& d_out,
                                                  Vec& grad) const {
  const Eigen::Index len = x.cols();
  Mat dz(2 * c.cout, len);
  for (Eigen::Index l = 0; l < len; ++l) {
    dz.col(l).head(c.cout) = d_out.col(2 * l);
    dz.col(l).tail(c.cout) = d_out.col(2 * l + 1);
  }
  Eigen::Map<Mat>(grad.data() + c.w, 2 * c.cout, c.cin) += dz * x.transpose();
  grad.segment(c.b, c.cout) += d_out.rowwise().sum();
  Eigen::Map<const Mat> w(params_.data() + c.w, 2 * c.cout, c.cin);
  return w.transpose() * dz;
}

template <typename T>
typename UNet1d<T>::Mat UNet1d<T>::forward(const Mat& x, double t, Cache* cache) const {
  if (x.rows() != 2 || x.cols() != spec_.length)
    throw Error(ErrorCode::LengthMismatch, "network input must be 2 x " + std::to_string(spec_.length));
  const int levels = spec_.levels();
  const Vec emb = embed_time(t);
  std::vector<BlockCache> local;
  std::vector<BlockCache>& bc = cache ? cache->blocks : local;
  bc.assign(static_cast<std::size_t>(2 * levels + 2), BlockCache{});
  if (cache) {
    cache->embed = emb;
    cache->tconv_in.assign(static_cast<std::size_t>(levels), Mat());
  }
  const bool keep = cache != nullptr;

  std::vector<Mat> skips;
  skips.push_back(block_forward(stem_, x, emb, keep ? &bc[0] : nullptr));
  for (int k = 1; k <= levels; ++k)
    skips.push_back(block_forward(down_[k - 1], skips.back(), emb, keep ? &bc[k] : nullptr));
  Mat u = block_forward(mid_, skips.back(), emb, keep ? &bc[levels + 1] : nullptr);
  for (int s = 0; s < levels; ++s) {
    const int k = levels - s;
    const Mat up = tconv_forward(up_t_[s], u);
    Mat cat(up.rows() + skips[k - 1].rows(), up.cols());
    cat << up, skips[k - 1];
    if (keep) cache->tconv_in[s] = std::move(u);
    u = block_forward(up_[s], cat, emb, keep ? &bc[levels + 2 + s] : nullptr);
  }
  if (keep) cache->head_in = u;
  return conv_forward(head_, u, nullptr);
}

template <typename T>
void UNet1d<T>::backward(const Cache& cache, const Mat& d_out, Vec& grad) const {
  if (grad.size() != n_params_) grad = Vec::Zero(n_params_);
  const int levels = spec_.levels();
  const Vec& emb = cache.embed;
  const auto& bc = cache.blocks;

  Eigen::Map<Mat>(grad.data() + head_.w, 2, head_.cin) += d_out * cache.head_in.transpose();
  grad.segment(head_.b, 2) += d_out.rowwise().sum();
  Eigen::Map<const Mat> hw(params_.data() + head_.w, 2, head_.cin);
  Mat du = hw.transpose() * d_out;

  std::vector<Mat> d_skip(static_cast<std::size_t>(levels + 1));
  for (int s = levels - 1; s >= 0; --s) {
    const int k = levels - s;
    const Eigen::Index len = du.cols();
    const Mat d_cat = block_backward(up_[s], bc[levels + 2 + s], du, emb, len, grad, true);
    const int c_up = up_t_[s].cout;
    d_skip[k - 1] = d_cat.bottomRows(d_cat.rows() - c_up);
    du = tconv_backward(up_t_[s], cache.tconv_in[s], d_cat.topRows(c_up), grad);
  }
  Mat dh = block_backward(mid_, bc[levels + 1], du, emb, du.cols(), grad, true);
  for (int k = levels; k >= 1; --k) {
    const Eigen::Index in_len = dh.cols() * 2;
    // The deepest encoder output feeds only the bottleneck, not a skip.
    const Mat total = k == levels ? dh : Mat(dh + d_skip[k]);
    dh = block_backward(down_[k - 1], bc[k], total, emb, in_len, grad, true);
  }
  block_backward(stem_, bc[0], dh + d_skip[0], emb, dh.cols(), grad, false);
}

template class UNet1d<float>;
template class UNet1d<double>;

template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> to_channels(const CVector& x) {
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> m(2, x.size());
  m.row(0) = x.real().transpose().template cast<T>();
  m.row(1) = x.imag().transpose().template cast<T>();
  return m;
}

template <typename T>
CVector from_channels(const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& m) {
  CVector x(m.cols());
  for (Eigen::Index n = 0; n < m.cols(); ++n)
    x[n] = cplx(static_cast<double>(m(0, n)), static_cast<double>(m(1, n)));
  return x;
}

template Eigen::MatrixXf to_channels<float>(const CVector&);
template Eigen::MatrixXd to_channels<double>(const CVector&);
template CVector from_channels<float>(const Eigen::MatrixXf&);
template CVector from_channels<double>(const Eigen::MatrixXd&);

CVector centered_dft(const CVector& x) {
  thread_local Eigen::FFT<double> fft;
  const Eigen::Index n = x.size();
  CVector spec(n);
  fft.fwd(spec, x);
  CVector out(n);
  for (Eigen::Index k = 0; k < n; ++k) out[k] = spec[(k + n / 2) % n];
  return out / std::sqrt(static_cast<double>(n));
}

CVector centered_idft(const CVector& x) {
  thread_local Eigen::FFT<double> fft;
  const Eigen::Index n = x.size();
  CVector spec(n);
  for (Eigen::Index k = 0; k < n; ++k) spec[(k + n / 2) % n] = x[k];
  CVector out(n);
  fft.inv(out, spec);
  return out * std::sqrt(static_cast<double>(n));
}

ConvScoreNet::ConvScoreNet(UNetSpec spec, DiffusionSchedule schedule)
    : net_(std::move(spec)), schedule_(std::move(schedule)) {}

CVector ConvScoreNet::to_domain(const CVector& x) const {
  return spec().frequency_domain ? centered_dft(x) : x;
}

CVector ConvScoreNet::from_domain(const CVector& x) const {
  return spec().frequency_domain ? centered_idft(x) : x;
}

CVector ConvScoreNet::evaluate(const CVector& i_t, double t) const {
  if (i_t.size() != length())
    throw Error(ErrorCode::LengthMismatch, "signal length " + std::to_string(i_t.size()) +
                                               " differs from network length " +
                                               std::to_string(length()));
  const double tc = std::max(t, kMinTime);
  const Eigen::MatrixXf out = net_.forward(to_channels<float>(to_domain(i_t)), tc);
  return from_domain(from_channels<float>(out)) * (-1.0 / (2.0 * schedule_.b_at(tc)));
}

}  // namespace dmdd
