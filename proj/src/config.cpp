#include "dmdd/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace dmdd {

using nlohmann::json;

namespace {

const std::set<std::string> kSections{"waveform", "jamming",  "dataset", "network",
                                      "schedule", "training", "dmdd",    "baselines",
                                      "scene",    "experiment", "sample_prior"};

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw Error(ErrorCode::InvalidArgument, "unknown key '" + key + "' in " + where);
}

const json& section(const json& doc, const std::string& name) {
  static const json empty = json::object();
  const auto it = doc.find(name);
  return it == doc.end() ? empty : *it;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad value for '") + key + "': " + e.what());
  }
}

template <typename T>
void read_pair(const json& j, const char* key, std::pair<T, T>& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array() || it->size() != 2)
    throw Error(ErrorCode::InvalidArgument, std::string("'") + key + "' must be a two-element array");
  out = {(*it)[0].get<T>(), (*it)[1].get<T>()};
}

}  // namespace

json parse_json_or_file(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return json::parse(text);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, std::string("inline JSON: ") + e.what());
    }
  }
  if (!std::filesystem::exists(text)) throw Error(ErrorCode::MissingPath, "file not found: " + text);
  std::ifstream f(text);
  if (!f) throw Error(ErrorCode::Io, "cannot open " + text);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, text + ": " + e.what());
  }
}

json load_config(const std::string& path) {
  json doc = parse_json_or_file(path);
  check_keys(doc, "config", kSections);
  return doc;
}

ChirpParams parse_waveform(const json& doc) {
  const json& j = section(doc, "waveform");
  check_keys(j, "waveform", {"num_samples", "carrier_freq", "fm_slope", "pulse_width",
                             "bandwidth", "sample_freq", "start_freq"});
  long long n = 512;
  read(j, "num_samples", n);
  ChirpParams p = desk_chirp(n);
  read(j, "carrier_freq", p.carrier_freq);
  read(j, "fm_slope", p.fm_slope);
  read(j, "pulse_width", p.pulse_width);
  read(j, "bandwidth", p.bandwidth);
  read(j, "sample_freq", p.sample_freq);
  p.start_freq = -p.bandwidth / 2.0;
  read(j, "start_freq", p.start_freq);
  p.pulse_duration = static_cast<double>(n) / p.sample_freq;
  p.validate();
  return p;
}

namespace {
const std::set<std::string> kJammingKeys{"kind", "k_range", "freq_range", "spacing_range",
                                         "amp_range", "tones"};
}

CombParams parse_comb(const json& doc) {
  const json& j = section(doc, "jamming");
  check_keys(j, "jamming", kJammingKeys);
  CombParams c;
  read_pair(j, "k_range", c.k_range);
  read_pair(j, "freq_range", c.freq_range);
  read_pair(j, "spacing_range", c.spacing_range);
  read_pair(j, "amp_range", c.amp_range);
  c.validate();
  return c;
}

std::vector<Tone> parse_tones(const json& doc) {
  const json& j = section(doc, "jamming");
  check_keys(j, "jamming", kJammingKeys);
  std::vector<Tone> tones;
  const auto it = j.find("tones");
  if (it == j.end()) return tones;
  for (const auto& t : *it) {
    check_keys(t, "jamming.tones[]", {"freq", "power"});
    tones.push_back({t.at("freq").get<double>(), t.at("power").get<double>()});
  }
  return tones;
}

std::string parse_jamming_kind(const json& doc) {
  const json& j = section(doc, "jamming");
  check_keys(j, "jamming", kJammingKeys);
  std::string kind = "comb";
  read(j, "kind", kind);
  if (kind != "comb" && kind != "gaussian" && kind != "none")
    throw Error(ErrorCode::InvalidArgument, "jamming.kind must be comb, gaussian or none");
  return kind;
}

DiffusionSchedule parse_schedule(const json& doc) {
  const json& j = section(doc, "schedule");
  check_keys(j, "schedule", {"n_steps", "rate_min", "rate_max"});
  int steps = 200;
  double lo = 0.1, hi = 20.0;
  read(j, "n_steps", steps);
  read(j, "rate_min", lo);
  read(j, "rate_max", hi);
  return make_vp_schedule(steps, lo, hi);
}

UNetSpec parse_network(const json& doc, Eigen::Index length) {
  const json& j = section(doc, "network");
  check_keys(j, "network", {"channels", "groups", "embed_dim", "domain"});
  json full = j;
  full["length"] = length;
  UNetSpec s = UNetSpec::from_json(full);
  s.validate();
  return s;
}

TrainConfig parse_training(const json& doc) {
  const json& j = section(doc, "training");
  check_keys(j, "training", {"batch_size", "learning_rate", "n_epochs", "adam_beta1", "adam_beta2",
                             "adam_eps", "weighting", "t_min", "samples_per_epoch",
                             "checkpoint_every", "seed"});
  TrainConfig c;
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "n_epochs", c.n_epochs);
  read(j, "adam_beta1", c.adam_beta1);
  read(j, "adam_beta2", c.adam_beta2);
  read(j, "adam_eps", c.adam_eps);
  read(j, "weighting", c.weighting);
  read(j, "t_min", c.t_min);
  read(j, "samples_per_epoch", c.samples_per_epoch);
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

DmddConfig parse_dmdd(const json& doc) {
  const json& j = section(doc, "dmdd");
  check_keys(j, "dmdd", {"n_chains", "bank_size", "n_steps", "rate_min", "rate_max", "zeta_scale",
                         "threshold_db", "coherent_samples", "corrector_scale", "bank_source",
                         "weighting", "init_sigma_sq", "init_noise_var", "freeze_sigma_sq",
                         "freeze_noise_var", "seed"});
  DmddConfig c;
  const json& sched = section(doc, "schedule");
  read(sched, "n_steps", c.n_steps);
  read(sched, "rate_min", c.rate_min);
  read(sched, "rate_max", c.rate_max);
  read(j, "n_chains", c.n_chains);
  read(j, "bank_size", c.bank_size);
  read(j, "n_steps", c.n_steps);
  read(j, "rate_min", c.rate_min);
  read(j, "rate_max", c.rate_max);
  read(j, "zeta_scale", c.zeta_scale);
  read(j, "threshold_db", c.threshold_db);
  read(j, "coherent_samples", c.coherent_samples);
  read(j, "corrector_scale", c.corrector_scale);
  read(j, "bank_source", c.bank_source);
  read(j, "weighting", c.weighting);
  read(j, "init_sigma_sq", c.init_sigma_sq);
  read(j, "init_noise_var", c.init_noise_var);
  read(j, "freeze_sigma_sq", c.freeze_sigma_sq);
  read(j, "freeze_noise_var", c.freeze_noise_var);
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

namespace {
const std::set<std::string> kBaselineKeys{"cfar", "admm", "sbl"};
}

CfarConfig parse_cfar(const json& doc) {
  const json& b = section(doc, "baselines");
  check_keys(b, "baselines", kBaselineKeys);
  const json& j = section(b, "cfar");
  check_keys(j, "baselines.cfar", {"n_train", "n_guard", "target_pfa"});
  CfarConfig c;
  read(j, "n_train", c.n_train);
  read(j, "n_guard", c.n_guard);
  read(j, "target_pfa", c.target_pfa);
  c.validate();
  return c;
}

AdmmConfig parse_admm(const json& doc) {
  const json& b = section(doc, "baselines");
  check_keys(b, "baselines", kBaselineKeys);
  const json& j = section(b, "admm");
  check_keys(j, "baselines.admm", {"lambda", "lambda_scale", "rho", "max_iter", "tol",
                                   "freq_grid_size", "f_min", "f_max"});
  AdmmConfig c;
  read(j, "lambda", c.lambda);
  read(j, "rho", c.rho);
  read(j, "max_iter", c.max_iter);
  read(j, "tol", c.tol);
  read(j, "freq_grid_size", c.freq_grid_size);
  read(j, "f_min", c.f_min);
  read(j, "f_max", c.f_max);
  c.validate();
  return c;
}

DatasetSpec parse_dataset(const json& doc) {
  const json& j = section(doc, "dataset");
  check_keys(j, "dataset", {"count", "seed"});
  DatasetSpec d;
  read(j, "count", d.count);
  read(j, "seed", d.seed);
  return d;
}

ExperimentConfig parse_experiment(const json& doc) {
  const json& j = section(doc, "experiment");
  check_keys(j, "experiment",
             {"methods", "sweep_db", "n_trials", "seed", "radius_bins", "threshold_db", "threads",
              "n_targets", "min_separation_bins", "off_grid", "sjr_db", "reference_amplitude",
              "grid_size", "first_bin", "checkpoint", "dataset", "som_samples"});
  ExperimentConfig c;
  c.scene.chirp = parse_waveform(doc);
  c.scene.comb = parse_comb(doc);
  c.scene.tones = parse_tones(doc);
  c.scene.jamming = parse_jamming_kind(doc);
  read(j, "methods", c.methods);
  read(j, "sweep_db", c.sweep_db);
  read(j, "n_trials", c.n_trials);
  read(j, "seed", c.seed);
  read(j, "radius_bins", c.radius_bins);
  read(j, "threshold_db", c.threshold_db);
  read(j, "threads", c.threads);
  read(j, "n_targets", c.scene.n_targets);
  read(j, "min_separation_bins", c.scene.min_separation_bins);
  read(j, "off_grid", c.scene.off_grid);
  read(j, "sjr_db", c.scene.sjr_db);
  read(j, "reference_amplitude", c.scene.reference_amplitude);
  read(j, "grid_size", c.scene.grid_size);
  read(j, "first_bin", c.scene.first_bin);
  read(j, "checkpoint", c.checkpoint_path);
  read(j, "dataset", c.dataset_path);
  read(j, "som_samples", c.som_samples);

  c.dmdd = parse_dmdd(doc);
  c.cfar = parse_cfar(doc);
  c.admm = parse_admm(doc);
  const json& admm = section(section(doc, "baselines"), "admm");
  read(admm, "lambda_scale", c.admm_lambda_scale);
  const json& sbl = section(section(doc, "baselines"), "sbl");
  check_keys(sbl, "baselines.sbl", {"max_iter", "tol"});
  read(sbl, "max_iter", c.sbl_max_iter);
  read(sbl, "tol", c.sbl_tol);
  c.validate();
  return c;
}

SceneSpec parse_scene(const json& j) {
  check_keys(j, "scene", {"targets", "grid_size", "first_bin", "jamming", "sjr_db", "noise_var",
                          "snr_db", "seed"});
  SceneSpec s;
  read(j, "grid_size", s.grid_size);
  read(j, "first_bin", s.first_bin);
  read(j, "jamming", s.jamming);
  if (s.jamming != "comb" && s.jamming != "gaussian" && s.jamming != "none")
    throw Error(ErrorCode::InvalidArgument, "scene.jamming must be comb, gaussian or none");
  if (j.contains("sjr_db")) s.sjr_db = j["sjr_db"].get<double>();
  if (j.contains("noise_var")) s.noise_var = j["noise_var"].get<double>();
  if (j.contains("snr_db")) s.snr_db = j["snr_db"].get<double>();
  if (s.noise_var && s.snr_db)
    throw Error(ErrorCode::InvalidArgument, "scene: give noise_var or snr_db, not both");
  read(j, "seed", s.seed);
  const auto it = j.find("targets");
  if (it == j.end() || !it->is_array() || it->empty())
    throw Error(ErrorCode::EmptySupport, "scene needs at least one target");
  for (const auto& t : *it) {
    check_keys(t, "scene.targets[]", {"bin", "range", "amplitude", "amp_db", "phase"});
    SceneSpec::Entry e;
    if (t.contains("bin")) e.bin = t["bin"].get<double>();
    if (t.contains("range")) e.range = t["range"].get<double>();
    if (e.bin.has_value() == e.range.has_value())
      throw Error(ErrorCode::InvalidArgument, "each target needs exactly one of bin or range");
    if (t.contains("amplitude")) {
      const auto& a = t["amplitude"];
      e.amplitude = a.is_array() ? cplx(a.at(0).get<double>(), a.at(1).get<double>())
                                 : cplx(a.get<double>(), 0.0);
    } else {
      const double mag = std::sqrt(from_db(t.value("amp_db", 0.0)));
      e.amplitude = std::polar(mag, t.value("phase", 0.0));
    }
    s.targets.push_back(e);
  }
  return s;
}

BuiltScene build_scene(const SceneSpec& spec, const ChirpParams& chirp, const CombParams& comb,
                       const std::vector<Tone>& tones) {
  BuiltScene out;
  const RangeGrid grid = RangeGrid::sample_aligned(chirp, spec.grid_size, spec.first_bin);
  out.dict = build_dictionary(chirp, grid);
  std::vector<Target> targets;
  for (const auto& e : spec.targets) {
    Target t;
    t.range = e.range ? *e.range : grid.ranges.front() + *e.bin * grid.spacing;
    t.amplitude = e.amplitude;
    targets.push_back(t);
  }
  const Eigen::Index n = chirp.num_samples();
  Rng rng(derive_seed(spec.seed, 30, 0));
  CVector jamming = CVector::Zero(n);
  if (spec.jamming == "comb") {
    jamming = draw_comb(comb, n, chirp.sample_freq, rng).signal;
  } else if (spec.jamming == "gaussian") {
    if (tones.empty()) throw Error(ErrorCode::InvalidArgument, "gaussian jamming needs tones");
    jamming = draw_gaussian_jamming(gaussian_prior_from_tones(tones, n, chirp.sample_freq), rng);
  }
  double noise_var = 0.0;
  if (spec.noise_var) noise_var = *spec.noise_var;
  if (spec.snr_db) noise_var = std::norm(targets.front().amplitude) / from_db(*spec.snr_db);
  const std::uint64_t noise_seed = derive_seed(spec.seed, 31, 0);
  out.scene = synthesize_scene(chirp, targets, jamming, noise_var, noise_seed);
  if (spec.sjr_db && spec.jamming != "none")
    out.scene = with_jamming(out.scene, scale_jamming_to_sjr(out.scene, *spec.sjr_db));
  return out;
}

}  // namespace dmdd
