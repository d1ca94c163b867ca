#include "dmdd/signal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dmdd {

Eigen::Index ChirpParams::num_samples() const {
  return static_cast<Eigen::Index>(std::llround(pulse_duration * sample_freq));
}

Eigen::Index ChirpParams::pulse_sample_count() const {
  // Same edge tolerance as sample_baseband.
  const double x = pulse_samples();
  return static_cast<Eigen::Index>(std::ceil(x - 1e-6));
}

void ChirpParams::validate() const {
  if (!(sample_freq > bandwidth))
    throw Error(ErrorCode::InvalidArgument, "sample_freq must exceed bandwidth");
  if (!(pulse_width > 0.0) || !(pulse_width <= pulse_duration))
    throw Error(ErrorCode::InvalidArgument, "need 0 < pulse_width <= pulse_duration");
  if (num_samples() <= 0)
    throw Error(ErrorCode::InvalidArgument, "pulse window holds no samples");
}

ChirpParams desk_chirp(Eigen::Index num_samples) {
  ChirpParams p;
  p.pulse_duration = static_cast<double>(num_samples) / p.sample_freq;
  p.start_freq = -p.bandwidth / 2.0;
  return p;
}

RangeGrid RangeGrid::uniform(double start, double spacing, std::size_t count) {
  RangeGrid g;
  g.spacing = spacing;
  g.ranges.resize(count);
  for (std::size_t q = 0; q < count; ++q)
    g.ranges[q] = start + spacing * static_cast<double>(q);
  g.validate();
  return g;
}

RangeGrid RangeGrid::sample_aligned(const ChirpParams& params, std::size_t count,
                                    std::size_t first_bin) {
  const double dr = kSpeedOfLight / (2.0 * params.sample_freq);
  return uniform(dr * static_cast<double>(first_bin), dr, count);
}

std::size_t RangeGrid::nearest(double range) const {
  if (ranges.empty()) throw Error(ErrorCode::InvalidArgument, "empty grid");
  const double pos = (range - ranges.front()) / spacing;
  const long idx = std::lround(pos);
  return static_cast<std::size_t>(
      std::clamp<long>(idx, 0, static_cast<long>(ranges.size()) - 1));
}

void RangeGrid::validate() const {
  if (ranges.empty()) return;
  if (ranges.size() > 1 && !(spacing > 0.0))
    throw Error(ErrorCode::InvalidArgument, "grid spacing must be positive");
  for (std::size_t q = 1; q < ranges.size(); ++q) {
    const double d = ranges[q] - ranges[q - 1];
    if (!(d > 0.0))
      throw Error(ErrorCode::InvalidArgument, "grid ranges must be strictly increasing");
    if (std::abs(d - spacing) > 1e-9 * spacing)
      throw Error(ErrorCode::InvalidArgument, "grid spacing is not uniform");
  }
}

double delay_of_range(double range) { return 2.0 * range / kSpeedOfLight; }

CVector sample_baseband(const ChirpParams& params, double delay) {
  if (!(delay >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "delay must be nonnegative");
  if (delay >= params.pulse_duration)
    throw Error(ErrorCode::EmptySupport, "delay beyond the pulse window");
  const Eigen::Index n_samples = params.num_samples();
  const double ts = params.sample_interval();
  // Sample instants that land on the pulse edge up to roundoff count as inside.
  const double eps = 1e-6 * ts;
  CVector s = CVector::Zero(n_samples);
  for (Eigen::Index n = 0; n < n_samples; ++n) {
    const double tau = static_cast<double>(n) * ts - delay;
    if (tau < -eps || tau >= params.pulse_width - eps) continue;
    const double u = std::max(tau, 0.0);
    const double phase = 2.0 * kPi * params.start_freq * u + kPi * params.fm_slope * u * u;
    s[n] = std::polar(1.0, phase);
  }
  return s;
}

Dictionary build_dictionary(const ChirpParams& params, const RangeGrid& grid) {
  params.validate();
  grid.validate();
  Dictionary dict;
  dict.grid = grid;
  dict.atoms.resize(params.num_samples(), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t q = 0; q < grid.size(); ++q) {
    const double delay = delay_of_range(grid.ranges[q]);
    if (!(delay >= 0.0) || delay >= params.pulse_duration) {
      std::ostringstream msg;
      msg << "grid index " << q << " (range " << grid.ranges[q]
          << " m) lies outside the pulse window";
      throw Error(ErrorCode::OutOfWindow, msg.str());
    }
    dict.atoms.col(static_cast<Eigen::Index>(q)) = sample_baseband(params, delay);
  }
  return dict;
}

Scene synthesize_scene(const ChirpParams& params, const std::vector<Target>& targets,
                       const CVector& jamming, double noise_var,
                       std::uint64_t rng_seed) {
  if (!(noise_var >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "noise_var must be nonnegative");
  const Eigen::Index n = params.num_samples();
  if (jamming.size() != n)
    throw Error(ErrorCode::LengthMismatch, "jamming length differs from N");
  Scene scene;
  scene.echo = CVector::Zero(n);
  for (const auto& t : targets) {
    scene.true_ranges.push_back(t.range);
    scene.true_amplitudes.push_back(t.amplitude);
    scene.echo += t.amplitude * sample_baseband(params, delay_of_range(t.range));
  }
  Rng rng(rng_seed);
  scene.noise = complex_normal_vector(rng, n, noise_var);
  scene.noise_var = noise_var;
  scene.noise_seed = rng_seed;
  scene.jamming = jamming;
  scene.measurement = scene.echo + scene.jamming + scene.noise;
  return scene;
}

Scene with_jamming(const Scene& scene, const CVector& jamming) {
  if (jamming.size() != scene.echo.size())
    throw Error(ErrorCode::LengthMismatch, "jamming length differs from N");
  Scene out = scene;
  out.jamming = jamming;
  out.measurement = out.echo + out.jamming + out.noise;
  return out;
}

double compute_sjr(const Scene& scene) {
  const double pj = scene.jamming.squaredNorm();
  if (pj == 0.0) throw Error(ErrorCode::ZeroDenominator, "SJR undefined without jamming");
  return to_db(scene.echo.squaredNorm() / pj);
}

double compute_snr(cplx amplitude, double noise_var) {
  if (!(noise_var > 0.0)) throw Error(ErrorCode::ZeroDenominator, "SNR undefined for zero noise");
  return to_db(std::norm(amplitude) / noise_var);
}

CVector scale_jamming_to_sjr(const Scene& scene, double target_sjr_db) {
  const double pj = scene.jamming.squaredNorm();
  const double ps = scene.echo.squaredNorm();
  if (pj == 0.0) throw Error(ErrorCode::ZeroDenominator, "cannot rescale zero jamming");
  if (ps == 0.0) throw Error(ErrorCode::ZeroDenominator, "cannot set SJR without a target echo");
  const double wanted = ps / from_db(target_sjr_db);
  return scene.jamming * std::sqrt(wanted / pj);
}

}  // namespace dmdd
