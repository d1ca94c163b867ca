#include "dmdd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "dmdd/checkpoint.hpp"

namespace dmdd {

namespace fs = std::filesystem;

TrialScore score_trial(const std::vector<double>& true_ranges, const RangeGrid& grid,
                       const std::vector<std::size_t>& detected_bins, int radius_bins) {
  if (radius_bins < 0) throw Error(ErrorCode::InvalidArgument, "radius must be >= 0");
  TrialScore out;
  out.hits.assign(true_ranges.size(), false);
  std::vector<bool> used(detected_bins.size(), false);
  for (std::size_t k = 0; k < true_ranges.size(); ++k) {
    const auto bin = static_cast<long>(grid.nearest(true_ranges[k]));
    long best = -1;
    long best_dist = radius_bins + 1L;
    for (std::size_t d = 0; d < detected_bins.size(); ++d) {
      if (used[d]) continue;
      const long dist = std::labs(static_cast<long>(detected_bins[d]) - bin);
      if (dist < best_dist) {
        best_dist = dist;
        best = static_cast<long>(d);
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      out.hits[k] = true;
    }
  }
  out.false_alarms = static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
  return out;
}

WilsonInterval wilson_interval(double successes, double trials, double z) {
  if (!(trials > 0.0)) return {0.0, 1.0};
  const double p = successes / trials;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / trials;
  const double centre = (p + z2 / (2.0 * trials)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials)) / denom;
  // The bounds are exactly 0 and 1 at the extremes; the closed form leaves
  // rounding residue there.
  return {successes <= 0.0 ? 0.0 : std::max(0.0, centre - half),
          successes >= trials ? 1.0 : std::min(1.0, centre + half)};
}

namespace {

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"pc", "sbl", "sbl-som", "admm", "dmdd"};
  return m;
}

std::uint64_t method_id(const std::string& method) {
  const auto& m = known_methods();
  const auto it = std::find(m.begin(), m.end(), method);
  if (it == m.end()) throw Error(ErrorCode::InvalidArgument, "unknown method: " + method);
  return static_cast<std::uint64_t>(it - m.begin());
}

bool uses(const ExperimentConfig& c, const std::string& method) {
  return std::find(c.methods.begin(), c.methods.end(), method) != c.methods.end();
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw Error(ErrorCode::MissingPath, what + " path not configured");
  if (!fs::exists(path)) throw Error(ErrorCode::MissingPath, what + " not found: " + path);
}

CVector draw_jamming(const SceneConfig& sc, const ExperimentContext& ctx, Rng& rng) {
  const Eigen::Index n = sc.chirp.num_samples();
  if (sc.jamming == "comb") return draw_comb(sc.comb, n, sc.chirp.sample_freq, rng).signal;
  if (sc.jamming == "gaussian") return draw_gaussian_jamming(*ctx.gaussian_prior, rng);
  return CVector::Zero(n);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n_trials < 1) throw Error(ErrorCode::InvalidArgument, "n_trials must be >= 1");
  if (sweep_db.empty()) throw Error(ErrorCode::InvalidArgument, "sweep must be nonempty");
  if (methods.empty()) throw Error(ErrorCode::InvalidArgument, "method list is empty");
  for (const auto& m : methods) method_id(m);
  if (radius_bins < 0) throw Error(ErrorCode::InvalidArgument, "radius must be >= 0");
  if (threads < 1) throw Error(ErrorCode::InvalidArgument, "threads must be >= 1");
  if (scene.n_targets < 1) throw Error(ErrorCode::InvalidArgument, "need at least one target");
  if (scene.jamming != "comb" && scene.jamming != "gaussian" && scene.jamming != "none")
    throw Error(ErrorCode::InvalidArgument, "jamming must be comb, gaussian or none");
  if (scene.jamming == "gaussian" && scene.tones.empty())
    throw Error(ErrorCode::InvalidArgument, "gaussian jamming needs tones");
  const auto q = static_cast<long>(scene.grid_size);
  const long excluded = scene.n_targets * (2L * radius_bins + 1);
  if (q - excluded < 1)
    throw Error(ErrorCode::InvalidArgument, "grid too small for the targets and exclusion radius");
  scene.chirp.validate();
  scene.comb.validate();
  dmdd.validate();
  cfar.validate();
  admm.validate();
}

ExperimentContext ExperimentContext::prepare(const ExperimentConfig& config) {
  config.validate();
  const SceneConfig& sc = config.scene;
  const Eigen::Index n = sc.chirp.num_samples();
  ExperimentContext ctx;
  ctx.dict = build_dictionary(sc.chirp, sc.grid());

  if (sc.jamming == "gaussian")
    ctx.gaussian_prior = std::make_shared<GaussianJammingPrior>(
        gaussian_prior_from_tones(sc.tones, n, sc.chirp.sample_freq));

  const bool need_dataset =
      uses(config, "dmdd") && config.dmdd.bank_source == "prior";
  if (!config.dataset_path.empty() || need_dataset) {
    require_file(config.dataset_path, "jamming dataset");
    ctx.dataset = std::make_shared<JammingDataset>(read_dataset(config.dataset_path, n));
  }

  if (!config.checkpoint_path.empty()) require_file(config.checkpoint_path, "checkpoint");
  if (uses(config, "dmdd")) {
    if (!config.checkpoint_path.empty()) {
      ctx.score = std::make_shared<ConvScoreNet>(load_checkpoint(config.checkpoint_path, n));
    } else if (ctx.gaussian_prior) {
      ctx.score = std::make_shared<AnalyticGaussianScore>(ctx.gaussian_prior->covariance,
                                                          config.dmdd.schedule());
    } else {
      throw Error(ErrorCode::MissingPath, "checkpoint path not configured");
    }
  }

  if (uses(config, "sbl-som")) {
    if (ctx.dataset) {
      ctx.moments = std::make_shared<JammingMoments>(
          JammingMoments::from_dataset(*ctx.dataset, config.som_samples));
    } else {
      const std::size_t count = std::max<std::size_t>(config.som_samples, 2 * static_cast<std::size_t>(n));
      std::vector<CVector> draws;
      draws.reserve(count);
      for (std::size_t m = 0; m < count; ++m) {
        Rng rng(derive_seed(config.seed, 20, m));
        draws.push_back(draw_jamming(sc, ctx, rng));
      }
      ctx.moments = std::make_shared<JammingMoments>(JammingMoments::from_samples(draws));
    }
  }

  if (uses(config, "admm")) {
    const int m = config.admm.freq_grid_size > 0 ? config.admm.freq_grid_size : 4 * static_cast<int>(n);
    ctx.fourier = fourier_dictionary(n, sc.chirp.sample_freq, m, config.admm.f_min, config.admm.f_max);
  }
  return ctx;
}

Scenario make_scenario(const ExperimentConfig& config, const ExperimentContext& ctx,
                       double integrated_snr_db, std::uint64_t seed) {
  const SceneConfig& sc = config.scene;
  const RangeGrid& grid = ctx.dict.grid;
  Rng rng(seed);

  // Bins 1..Q-2 so a midway target still has both neighbours on the grid.
  const auto q = static_cast<long>(grid.size());
  if (q < 3) throw Error(ErrorCode::InvalidArgument, "grid too small");
  std::uniform_int_distribution<long> pick(1, q - 2);
  std::vector<long> bins;
  for (int attempt = 0; attempt < 10000 && static_cast<int>(bins.size()) < sc.n_targets; ++attempt) {
    const long b = pick(rng);
    const bool clear = std::all_of(bins.begin(), bins.end(), [&](long o) {
      return std::labs(o - b) >= sc.min_separation_bins;
    });
    if (clear) bins.push_back(b);
  }
  if (static_cast<int>(bins.size()) < sc.n_targets)
    throw Error(ErrorCode::Infeasible, "cannot place targets with the requested separation");

  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  std::vector<Target> targets;
  for (long b : bins) {
    Target t;
    t.range = grid.ranges[static_cast<std::size_t>(b)] + (sc.off_grid ? 0.5 * grid.spacing : 0.0);
    t.amplitude = std::polar(1.0, phase(rng));
    targets.push_back(t);
  }
  const CVector jamming = draw_jamming(sc, ctx, rng);
  const std::uint64_t noise_seed = rng();

  // Unit-amplitude echo first, then scale the targets for the SJR.
  const Scene unit = synthesize_scene(sc.chirp, targets, CVector::Zero(jamming.size()), 0.0, noise_seed);
  double amp = sc.reference_amplitude;
  const double pj = jamming.squaredNorm();
  if (pj > 0.0) amp = std::sqrt(pj * from_db(sc.sjr_db) / unit.echo.squaredNorm());
  for (auto& t : targets) t.amplitude *= amp;

  const double noise_var = amp * amp * sc.coherent_samples() / from_db(integrated_snr_db);
  Scenario out;
  out.scene = synthesize_scene(sc.chirp, targets, jamming, noise_var, noise_seed);
  out.noise_var = noise_var;
  for (const auto& t : targets) out.true_bins.push_back(grid.nearest(t.range));
  return out;
}

std::vector<std::size_t> run_method(const std::string& method, const Scenario& scenario,
                                    const ExperimentConfig& config, const ExperimentContext& ctx,
                                    std::uint64_t seed) {
  const CVector& y = scenario.scene.measurement;
  const CMatrix& A = ctx.dict.atoms;
  const double n_p = config.scene.coherent_samples();
  std::vector<Detection> dets;

  if (method == "pc") {
    const RVector profile = pulse_compress(y, config.scene.chirp);
    const auto first = static_cast<long>(config.scene.first_bin);
    std::vector<std::size_t> bins;
    for (const auto& d : cfar_detect(profile, config.cfar)) {
      const long b = static_cast<long>(d.index) - first;
      if (b >= 0 && b < static_cast<long>(ctx.dict.grid.size())) bins.push_back(static_cast<std::size_t>(b));
    }
    return bins;
  }
  if (method == "sbl") {
    const SblResult r = sbl_solve(y, A, config.sbl_max_iter, config.sbl_tol);
    dets = threshold_detect(r.mu, r.noise_var, config.threshold_db, n_p);
  } else if (method == "sbl-som") {
    if (!ctx.moments) throw Error(ErrorCode::InvalidArgument, "sbl-som needs jamming moments");
    const SblResult r = sbl_som_solve(y, A, *ctx.moments, config.sbl_max_iter, config.sbl_tol);
    dets = threshold_detect(r.mu, r.noise_var, config.threshold_db, n_p);
  } else if (method == "admm") {
    AdmmConfig ac = config.admm;
    const double col_norm = A.colwise().norm().maxCoeff();
    const double atoms = static_cast<double>(A.cols() + ctx.fourier.cols());
    ac.lambda = config.admm_lambda_scale * std::sqrt(scenario.noise_var) * col_norm *
                std::sqrt(2.0 * std::log(atoms));
    const AdmmResult r = admm_solve(y, A, ctx.fourier, ac);
    dets = threshold_detect(r.x, scenario.noise_var, config.threshold_db, n_p);
  } else if (method == "dmdd") {
    if (!ctx.score) throw Error(ErrorCode::InvalidArgument, "dmdd needs a score model");
    DmddConfig dc = config.dmdd;
    dc.seed = seed;
    dc.threshold_db = config.threshold_db;
    dc.coherent_samples = n_p;
    PriorSampleBank bank;
    const PriorSampleBank* bank_ptr = nullptr;
    if (dc.bank_source == "prior") {
      Rng rng(derive_seed(seed, 6, 0));
      bank = build_prior_bank(*ctx.dataset, dc.schedule(), static_cast<std::size_t>(dc.bank_size), rng);
      bank_ptr = &bank;
    }
    dets = run_dmdd(y, ctx.dict, *ctx.score, bank_ptr, dc).detections;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown method: " + method);
  }
  std::vector<std::size_t> bins;
  for (const auto& d : dets) bins.push_back(d.index);
  return bins;
}

MonteCarloResult run_monte_carlo(const ExperimentConfig& config, const ExperimentContext& ctx,
                                 const TrialCallback& on_trial) {
  config.validate();
  const std::size_t n_points = config.sweep_db.size();
  const auto n_trials = static_cast<std::size_t>(config.n_trials);
  const std::size_t n_methods = config.methods.size();
  std::vector<TrialRecord> records(n_points * n_trials * n_methods);

  auto run_job = [&](std::size_t job) {
    const std::size_t p = job / n_trials;
    const std::size_t trial = job % n_trials;
    const double snr = config.sweep_db[p];
    const std::uint64_t scene_seed = derive_seed(config.seed, 100 + p, trial);
    Scenario sc;
    std::string scene_error;
    try {
      sc = make_scenario(config, ctx, snr, scene_seed);
    } catch (const std::exception& e) {
      scene_error = e.what();
    }
    for (std::size_t m = 0; m < n_methods; ++m) {
      TrialRecord& rec = records[job * n_methods + m];
      rec.trial = static_cast<int>(trial);
      rec.sweep_db = snr;
      rec.method = config.methods[m];
      if (!scene_error.empty()) {
        rec.failed = true;
        rec.error = scene_error;
        rec.hits.assign(static_cast<std::size_t>(config.scene.n_targets), false);
        continue;
      }
      rec.true_bins = sc.true_bins;
      const auto start = std::chrono::steady_clock::now();
      try {
        rec.detected_bins =
            run_method(rec.method, sc, config, ctx, derive_seed(scene_seed, 7, method_id(rec.method)));
        const TrialScore s =
            score_trial(sc.scene.true_ranges, ctx.dict.grid, rec.detected_bins, config.radius_bins);
        rec.hits = s.hits;
        rec.false_alarms = s.false_alarms;
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
        rec.hits.assign(sc.true_bins.size(), false);
      }
      rec.runtime_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };

  const std::size_t n_jobs = n_points * n_trials;
  std::mutex cb_mutex;
  auto report = [&](std::size_t job) {
    if (!on_trial) return;
    std::lock_guard<std::mutex> lock(cb_mutex);
    for (std::size_t m = 0; m < n_methods; ++m) on_trial(records[job * n_methods + m]);
  };
  if (config.threads <= 1) {
    for (std::size_t job = 0; job < n_jobs; ++job) {
      run_job(job);
      report(job);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < config.threads; ++w)
      pool.emplace_back([&] {
        for (std::size_t job = next++; job < n_jobs; job = next++) {
          run_job(job);
          report(job);
        }
      });
    for (auto& t : pool) t.join();
  }

  MonteCarloResult out;
  out.curves = aggregate_curves(records, config);
  out.records = std::move(records);
  return out;
}

std::vector<PerformanceCurve> aggregate_curves(const std::vector<TrialRecord>& records,
                                               const ExperimentConfig& config) {
  const double k = config.scene.n_targets;
  const double cells =
      static_cast<double>(config.scene.grid_size) - k * (2.0 * config.radius_bins + 1.0);
  std::vector<PerformanceCurve> curves;
  for (const auto& method : config.methods) {
    PerformanceCurve c;
    c.method = method;
    for (double snr : config.sweep_db) {
      CurvePoint pt;
      pt.sweep_db = snr;
      double hits = 0.0, fa = 0.0;
      for (const auto& r : records) {
        if (r.method != method || r.sweep_db != snr) continue;
        if (r.failed) {
          ++pt.failures;
          continue;
        }
        ++pt.n;
        hits += static_cast<double>(std::count(r.hits.begin(), r.hits.end(), true));
        fa += static_cast<double>(r.false_alarms);
      }
      const double n = static_cast<double>(pt.n);
      if (pt.n > 0) {
        pt.pd = hits / (n * k);
        pt.pfa = std::min(1.0, fa / (n * cells));
      }
      const WilsonInterval ci = wilson_interval(hits, n * k);
      pt.ci_lo = ci.lo;
      pt.ci_hi = ci.hi;
      c.points.push_back(pt);
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

template <typename Seq, typename F>
std::string join(const Seq& seq, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ';';
    out += f(seq[i]);
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

constexpr const char* kCurvesHeader = "method,sweep_db,pd,pfa,n,ci_lo,ci_hi,failures";

}  // namespace

void emit_results(const std::vector<PerformanceCurve>& curves, const std::vector<TrialRecord>& records,
                  const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + out_dir + ": " + ec.message());

  std::ostringstream c;
  c << kCurvesHeader << '\n';
  for (const auto& curve : curves)
    for (const auto& p : curve.points)
      c << csv_field(curve.method) << ',' << fmt(p.sweep_db) << ',' << fmt(p.pd) << ',' << fmt(p.pfa)
        << ',' << p.n << ',' << fmt(p.ci_lo) << ',' << fmt(p.ci_hi) << ',' << p.failures << '\n';
  write_text(fs::path(out_dir) / "curves.csv", c.str());

  auto num = [](std::size_t v) { return std::to_string(v); };
  std::ostringstream t, tm;
  t << "trial,sweep_db,method,true_bins,detected_bins,hits,false_alarms,failed,error\n";
  tm << "trial,sweep_db,method,runtime_s\n";
  for (const auto& r : records) {
    t << r.trial << ',' << fmt(r.sweep_db) << ',' << csv_field(r.method) << ','
      << join(r.true_bins, num) << ',' << join(r.detected_bins, num) << ','
      << join(r.hits, [](bool h) { return std::string(h ? "1" : "0"); }) << ',' << r.false_alarms
      << ',' << (r.failed ? 1 : 0) << ',' << csv_field(r.error) << '\n';
    tm << r.trial << ',' << fmt(r.sweep_db) << ',' << csv_field(r.method) << ',' << fmt(r.runtime_s)
       << '\n';
  }
  write_text(fs::path(out_dir) / "trials.csv", t.str());
  write_text(fs::path(out_dir) / "timing.csv", tm.str());
  write_text(fs::path(out_dir) / "curves.svg", render_curves_svg(curves));
}

std::vector<PerformanceCurve> read_curves_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::MissingPath, "curves file not found: " + path);
  std::string line;
  if (!std::getline(f, line)) throw Error(ErrorCode::Integrity, "empty curves file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("method,sweep_db,pd,pfa,n,ci_lo,ci_hi", 0) != 0)
    throw Error(ErrorCode::Integrity, "unexpected curves header in " + path);
  std::vector<PerformanceCurve> curves;
  while (std::getline(f, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cols = split_csv_line(line);
    if (cols.size() < 7) throw Error(ErrorCode::Integrity, "short curves row: " + line);
    CurvePoint p;
    try {
      p.sweep_db = std::stod(cols[1]);
      p.pd = std::stod(cols[2]);
      p.pfa = std::stod(cols[3]);
      p.n = std::stoull(cols[4]);
      p.ci_lo = std::stod(cols[5]);
      p.ci_hi = std::stod(cols[6]);
      if (cols.size() > 7) p.failures = std::stoull(cols[7]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Integrity, "malformed curves row: " + line);
    }
    auto it = std::find_if(curves.begin(), curves.end(),
                           [&](const PerformanceCurve& c) { return c.method == cols[0]; });
    if (it == curves.end()) it = curves.insert(curves.end(), PerformanceCurve{cols[0], {}});
    it->points.push_back(p);
  }
  return curves;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

}  // namespace

std::string render_curves_svg(const std::vector<PerformanceCurve>& curves) {
  constexpr double kW = 960, kH = 420, kPanelW = 380, kPanelH = 300, kTop = 50;
  constexpr double kLeft[2] = {70, 550};
  constexpr double kLogFloor = -6.0;

  double xmin = 0.0, xmax = 1.0;
  bool any = false;
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      if (!any) xmin = xmax = p.sweep_db;
      xmin = std::min(xmin, p.sweep_db);
      xmax = std::max(xmax, p.sweep_db);
      any = true;
    }
  if (xmax <= xmin) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  auto px = [&](int panel, double x) { return kLeft[panel] + (x - xmin) / (xmax - xmin) * kPanelW; };
  auto py_pd = [&](double pd) { return kTop + (1.0 - pd) * kPanelH; };
  auto py_pfa = [&](double pfa) {
    const double l = std::clamp(pfa > 0.0 ? std::log10(pfa) : kLogFloor, kLogFloor, 0.0);
    return kTop + (-l / -kLogFloor) * kPanelH;
  };

  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kW << "\" height=\"" << kH
    << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<g font-family=\"sans-serif\" font-size=\"12\">\n";

  const char* titles[2] = {"Detection probability", "False-alarm probability"};
  for (int panel = 0; panel < 2; ++panel) {
    const double l = kLeft[panel];
    s << "<rect x=\"" << l << "\" y=\"" << kTop << "\" width=\"" << kPanelW << "\" height=\"" << kPanelH
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    s << "<text x=\"" << l + kPanelW / 2 << "\" y=\"" << kTop - 12 << "\" text-anchor=\"middle\">"
      << titles[panel] << "</text>\n";
    s << "<text x=\"" << l + kPanelW / 2 << "\" y=\"" << kTop + kPanelH + 36
      << "\" text-anchor=\"middle\">sweep (dB)</text>\n";
    for (int i = 0; i <= 4; ++i) {
      const double x = xmin + (xmax - xmin) * i / 4.0;
      s << "<text x=\"" << px(panel, x) << "\" y=\"" << kTop + kPanelH + 16
        << "\" text-anchor=\"middle\">" << fmt(std::round(x * 10.0) / 10.0) << "</text>\n";
    }
    if (panel == 0) {
      for (int i = 0; i <= 5; ++i) {
        const double v = i / 5.0;
        s << "<line x1=\"" << l << "\" x2=\"" << l + kPanelW << "\" y1=\"" << py_pd(v) << "\" y2=\""
          << py_pd(v) << "\" stroke=\"#ddd\"/>\n"
          << "<text x=\"" << l - 6 << "\" y=\"" << py_pd(v) + 4 << "\" text-anchor=\"end\">" << fmt(v)
          << "</text>\n";
      }
    } else {
      for (int e = 0; e >= static_cast<int>(kLogFloor); --e) {
        const double v = std::pow(10.0, e);
        s << "<line x1=\"" << l << "\" x2=\"" << l + kPanelW << "\" y1=\"" << py_pfa(v) << "\" y2=\""
          << py_pfa(v) << "\" stroke=\"#ddd\"/>\n"
          << "<text x=\"" << l - 6 << "\" y=\"" << py_pfa(v) + 4 << "\" text-anchor=\"end\">1e" << e
          << "</text>\n";
      }
    }
  }

  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kPalette[c % (sizeof kPalette / sizeof *kPalette)];
    const std::string name = xml_escape(curves[c].method);
    for (int panel = 0; panel < 2; ++panel) {
      s << "<polyline class=\"curve\" data-method=\"" << name << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < curves[c].points.size(); ++i) {
        const auto& p = curves[c].points[i];
        const double y = panel == 0 ? py_pd(p.pd) : py_pfa(p.pfa);
        s << (i ? " " : "") << fmt(px(panel, p.sweep_db)) << ',' << fmt(y);
      }
      s << "\"/>\n";
    }
    const double ly = kTop + kPanelH + 60;
    const double lx = 70 + 130.0 * static_cast<double>(c);
    s << "<line x1=\"" << lx << "\" x2=\"" << lx + 24 << "\" y1=\"" << ly << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << lx + 30 << "\" y=\"" << ly + 4 << "\">" << name << "</text>\n";
  }
  s << "</g>\n</svg>\n";
  return s.str();
}

}  // namespace dmdd
