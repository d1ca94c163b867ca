#include "dmdd/jamming.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dmdd {

void CombParams::validate() const {
  if (k_range.first < 1 || k_range.second < k_range.first)
    throw Error(ErrorCode::InvalidArgument, "need 1 <= K_min <= K_max");
  if (!(freq_range.first < freq_range.second))
    throw Error(ErrorCode::InvalidArgument, "need f_min < f_max");
  if (!(spacing_range.first > 0.0) || spacing_range.second < spacing_range.first)
    throw Error(ErrorCode::InvalidArgument, "need 0 < df_min <= df_max");
  if (!(amp_range.first > 0.0) || amp_range.second < amp_range.first)
    throw Error(ErrorCode::InvalidArgument, "need 0 < A_min <= A_max");
}

std::vector<double> CombRealization::tone_freqs() const {
  std::vector<double> f(static_cast<std::size_t>(n_tones));
  for (int k = 0; k < n_tones; ++k) f[static_cast<std::size_t>(k)] = start_freq + k * spacing;
  return f;
}

CVector synthesize_comb(double start_freq, double spacing,
                        const std::vector<double>& amplitudes,
                        const std::vector<double>& phases, Eigen::Index n_samples,
                        double sample_freq) {
  if (amplitudes.size() != phases.size())
    throw Error(ErrorCode::InvalidArgument, "amplitude/phase count mismatch");
  const double ts = 1.0 / sample_freq;
  CVector s = CVector::Zero(n_samples);
  for (std::size_t k = 0; k < amplitudes.size(); ++k) {
    const double f = start_freq + static_cast<double>(k) * spacing;
    for (Eigen::Index n = 0; n < n_samples; ++n)
      s[n] += std::polar(amplitudes[k],
                         2.0 * kPi * f * static_cast<double>(n) * ts + phases[k]);
  }
  return s;
}

CombRealization draw_comb(const CombParams& params, Eigen::Index n_samples,
                          double sample_freq, Rng& rng) {
  params.validate();
  std::uniform_int_distribution<int> k_dist(params.k_range.first, params.k_range.second);
  std::uniform_real_distribution<double> df_dist(params.spacing_range.first,
                                                 params.spacing_range.second);
  const double span = params.freq_range.second - params.freq_range.first;

  CombRealization r;
  r.n_tones = k_dist(rng);
  bool feasible = false;
  for (int attempt = 0; attempt < 100 && !feasible; ++attempt) {
    r.spacing = df_dist(rng);
    feasible = (r.n_tones - 1) * r.spacing <= span;
  }
  if (!feasible)
    throw Error(ErrorCode::Infeasible, "no tone spacing fits the frequency range");

  const double f_hi = params.freq_range.second - (r.n_tones - 1) * r.spacing;
  r.start_freq = std::uniform_real_distribution<double>(params.freq_range.first, f_hi)(rng);
  std::uniform_real_distribution<double> a_dist(params.amp_range.first, params.amp_range.second);
  std::uniform_real_distribution<double> p_dist(0.0, 2.0 * kPi);
  for (int k = 0; k < r.n_tones; ++k) r.amplitudes.push_back(a_dist(rng));
  for (int k = 0; k < r.n_tones; ++k) r.phases.push_back(p_dist(rng));
  r.signal = synthesize_comb(r.start_freq, r.spacing, r.amplitudes, r.phases, n_samples,
                             sample_freq);
  return r;
}

GaussianJammingPrior GaussianJammingPrior::from_covariance(CMatrix covariance) {
  if (covariance.rows() != covariance.cols())
    throw Error(ErrorCode::InvalidArgument, "covariance must be square");
  const Eigen::Index n = covariance.rows();
  const double herm_err = (covariance - covariance.adjoint()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if (n > 0 && herm_err > 1e-12 * scale)
    throw Error(ErrorCode::InvalidArgument, "covariance is not Hermitian");

  GaussianJammingPrior prior;
  prior.covariance = std::move(covariance);
  if (n == 0) return prior;
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(prior.covariance);
  if (eig.info() != Eigen::Success)
    throw Error(ErrorCode::Factorization, "eigendecomposition of jamming covariance failed");
  const double trace = prior.covariance.diagonal().real().sum();
  const double tol = 1e-10 * std::abs(trace) / static_cast<double>(n);
  RVector ev = eig.eigenvalues();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (ev[k] < -tol)
      throw Error(ErrorCode::Factorization, "jamming covariance is not positive semidefinite");
    ev[k] = std::sqrt(std::max(ev[k], 0.0));
  }
  prior.factor = eig.eigenvectors() * ev.asDiagonal();
  return prior;
}

GaussianJammingPrior gaussian_prior_from_tones(const std::vector<Tone>& tones,
                                               Eigen::Index n_samples,
                                               double sample_freq) {
  CMatrix c = CMatrix::Zero(n_samples, n_samples);
  const double ts = 1.0 / sample_freq;
  for (const auto& tone : tones) {
    if (!(tone.power > 0.0))
      throw Error(ErrorCode::InvalidArgument, "tone powers must be positive");
    CVector a(n_samples);
    for (Eigen::Index n = 0; n < n_samples; ++n)
      a[n] = std::polar(1.0, 2.0 * kPi * tone.freq * static_cast<double>(n) * ts);
    c.noalias() += tone.power * a * a.adjoint();
  }
  // Exact Hermitian symmetry for the eigen-solver.
  CMatrix sym = 0.5 * (c + c.adjoint());
  return GaussianJammingPrior::from_covariance(std::move(sym));
}

CVector draw_gaussian_jamming(const GaussianJammingPrior& prior, Rng& rng) {
  if (prior.factor.rows() != prior.size())
    throw Error(ErrorCode::Factorization, "jamming prior has no factor");
  const CVector z = complex_normal_vector(rng, prior.factor.cols(), 1.0);
  return prior.factor * z;
}

JammingDataset::JammingDataset(Eigen::Index length, std::string generator) {
  meta_.length = length;
  meta_.generator = std::move(generator);
}

void JammingDataset::push_back(const CVector& sample) {
  if (sample.size() != meta_.length)
    throw Error(ErrorCode::LengthMismatch, "sample length differs from dataset N");
  for (Eigen::Index n = 0; n < sample.size(); ++n)
    data_.emplace_back(static_cast<float>(sample[n].real()),
                       static_cast<float>(sample[n].imag()));
  ++meta_.count;
}

CVector JammingDataset::sample(std::size_t index) const {
  if (index >= meta_.count) throw Error(ErrorCode::InvalidArgument, "sample index out of range");
  CVector v(meta_.length);
  const std::size_t base = index * static_cast<std::size_t>(meta_.length);
  for (Eigen::Index n = 0; n < meta_.length; ++n) {
    const auto& z = data_[base + static_cast<std::size_t>(n)];
    v[n] = cplx(z.real(), z.imag());
  }
  return v;
}

JammingDataset generate_comb_dataset(const CombParams& params, std::size_t count,
                                     Eigen::Index n_samples, double sample_freq,
                                     std::uint64_t seed) {
  nlohmann::json gen = {
      {"kind", "comb"},
      {"k_range", {params.k_range.first, params.k_range.second}},
      {"freq_range", {params.freq_range.first, params.freq_range.second}},
      {"spacing_range", {params.spacing_range.first, params.spacing_range.second}},
      {"amp_range", {params.amp_range.first, params.amp_range.second}},
      {"sample_freq", sample_freq},
      {"seed", seed}};
  JammingDataset ds(n_samples, gen.dump());
  for (std::size_t k = 0; k < count; ++k) {
    Rng rng(derive_seed(seed, 0, k));
    ds.push_back(draw_comb(params, n_samples, sample_freq, rng).signal);
  }
  return ds;
}

namespace {

constexpr const char* kDatasetMagic = "dmdd-jamming-dataset";

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

}  // namespace

void write_dataset(const std::string& path, const JammingDataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  nlohmann::json header = {{"format", kDatasetMagic},
                           {"version", dataset.meta_.version},
                           {"count", dataset.meta_.count},
                           {"length", dataset.meta_.length},
                           {"sample_type", "complex64-le-interleaved"},
                           {"generator", nlohmann::json::parse(dataset.meta_.generator)}};
  out << header.dump() << '\n';
  for (const auto& z : dataset.data_) {
    std::uint32_t w[2];
    const float f[2] = {z.real(), z.imag()};
    std::memcpy(w, f, sizeof(w));
    w[0] = to_le(w[0]);
    w[1] = to_le(w[1]);
    out.write(reinterpret_cast<const char*>(w), sizeof(w));
  }
  if (!out) throw Error(ErrorCode::Io, "write to " + path + " failed");
}

JammingDataset read_dataset(const std::string& path, Eigen::Index expected_length) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingPath, "cannot open dataset " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::TruncatedPayload, "dataset header missing");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Integrity, std::string("malformed dataset header: ") + e.what());
  }
  if (header.value("format", "") != kDatasetMagic)
    throw Error(ErrorCode::Integrity, "not a jamming dataset: " + path);
  const int version = header.value("version", -1);
  if (version != kDatasetFormatVersion)
    throw Error(ErrorCode::VersionMismatch,
                "dataset version " + std::to_string(version) + " is not supported");
  const auto count = header.at("count").get<std::size_t>();
  const auto length = header.at("length").get<Eigen::Index>();
  if (expected_length > 0 && length != expected_length)
    throw Error(ErrorCode::LengthMismatch, "dataset N=" + std::to_string(length) +
                                               " but expected " + std::to_string(expected_length));

  const std::streampos payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto payload_bytes = static_cast<std::size_t>(in.tellg() - payload_start);
  in.seekg(payload_start);
  const std::size_t sample_bytes = static_cast<std::size_t>(length) * 8;
  if (sample_bytes == 0 || payload_bytes % sample_bytes != 0)
    throw Error(ErrorCode::TruncatedPayload, "dataset payload is truncated");
  if (payload_bytes / sample_bytes != count)
    throw Error(ErrorCode::Integrity, "dataset header count disagrees with payload");

  JammingDataset ds(length, header.contains("generator") ? header["generator"].dump() : "{}");
  ds.meta_.count = count;
  ds.data_.resize(count * static_cast<std::size_t>(length));
  in.read(reinterpret_cast<char*>(ds.data_.data()),
          static_cast<std::streamsize>(payload_bytes));
  if (!in) throw Error(ErrorCode::TruncatedPayload, "dataset payload read failed");
  if constexpr (std::endian::native == std::endian::big) {
    auto* words = reinterpret_cast<std::uint32_t*>(ds.data_.data());
    for (std::size_t k = 0; k < 2 * ds.data_.size(); ++k) words[k] = __builtin_bswap32(words[k]);
  }
  return ds;
}

}  // namespace dmdd
