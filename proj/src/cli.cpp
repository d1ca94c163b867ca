#include "dmdd/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "dmdd/baselines.hpp"
#include "dmdd/checkpoint.hpp"
#include "dmdd/config.hpp"
#include "dmdd/engine.hpp"
#include "dmdd/harness.hpp"
#include "dmdd/training.hpp"

namespace dmdd {

using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool verbose = false;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& text) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path);
  f << text;
  if (!f) throw Error(ErrorCode::Io, "write failed: " + path);
}

json load_doc(const Globals& g) { return g.config.empty() ? json::object() : load_config(g.config); }

std::string require_out(const Globals& g, const std::string& what) {
  if (g.out.empty()) throw CLI::ValidationError("--out", "an output " + what + " is required");
  return g.out;
}

/// One row per grid bin: the run-dmdd / run-baseline output schema.
std::string amplitude_csv(const CVector& amp, const RangeGrid& grid, double noise_var,
                          const std::vector<Detection>& dets, double threshold_db, double n_p) {
  std::vector<const Detection*> by_bin(static_cast<std::size_t>(amp.size()), nullptr);
  for (const auto& d : dets)
    if (d.index < by_bin.size()) by_bin[d.index] = &d;
  const double floor_db = threshold_db - integration_gain_db(n_p);
  std::ostringstream s;
  s << "grid_index,range_m,amp_re,amp_im,power_db,detected,margin_db\n";
  for (Eigen::Index q = 0; q < amp.size(); ++q) {
    const double p_db = 10.0 * std::log10(std::norm(amp[q]) / noise_var);
    s << q << ',' << fmt(grid.ranges[static_cast<std::size_t>(q)]) << ',' << fmt(amp[q].real()) << ','
      << fmt(amp[q].imag()) << ',' << fmt(p_db) << ',' << (by_bin[static_cast<std::size_t>(q)] ? 1 : 0)
      << ',' << fmt(p_db - floor_db) << '\n';
  }
  return s.str();
}

BuiltScene scene_from(const json& doc, const std::string& scene_arg, const ChirpParams& chirp) {
  json sj;
  if (!scene_arg.empty()) {
    sj = parse_json_or_file(scene_arg);
    if (sj.contains("scene")) sj = sj["scene"];
  } else if (doc.contains("scene")) {
    sj = doc["scene"];
  } else {
    throw CLI::ValidationError("--scene", "no scene given on the command line or in the config");
  }
  return build_scene(parse_scene(sj), chirp, parse_comb(doc), parse_tones(doc));
}

std::unique_ptr<ScoreModel> oracle_score(const std::string& path, Eigen::Index n, double fs,
                                         const DiffusionSchedule& sched) {
  const json j = parse_json_or_file(path);
  if (j.contains("tones")) {
    std::vector<Tone> tones;
    for (const auto& t : j["tones"]) tones.push_back({t.at("freq").get<double>(), t.at("power").get<double>()});
    return std::make_unique<AnalyticGaussianScore>(gaussian_prior_from_tones(tones, n, fs).covariance,
                                                   sched);
  }
  if (j.contains("re")) {
    const auto re = j["re"].get<std::vector<std::vector<double>>>();
    const auto im = j.value("im", std::vector<std::vector<double>>{});
    if (static_cast<Eigen::Index>(re.size()) != n)
      throw Error(ErrorCode::LengthMismatch, "oracle covariance is not N x N");
    CMatrix c(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index k = 0; k < n; ++k)
        c(r, k) = cplx(re.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(k)),
                       im.empty() ? 0.0 : im.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(k)));
    return std::make_unique<AnalyticGaussianScore>(c, sched);
  }
  throw Error(ErrorCode::InvalidArgument, "oracle covariance file needs 'tones' or 're'/'im'");
}

int cmd_generate(const Globals& g, std::optional<std::size_t> count, std::ostream& log) {
  const json doc = load_doc(g);
  const ChirpParams chirp = parse_waveform(doc);
  DatasetSpec spec = parse_dataset(doc);
  if (count) spec.count = *count;
  if (g.seed) spec.seed = *g.seed;
  const std::string out = require_out(g, "dataset path");
  const std::string kind = parse_jamming_kind(doc);
  const Eigen::Index n = chirp.num_samples();
  JammingDataset ds;
  if (kind == "comb") {
    ds = generate_comb_dataset(parse_comb(doc), spec.count, n, chirp.sample_freq, spec.seed);
  } else if (kind == "gaussian") {
    const auto tones = parse_tones(doc);
    const auto prior = gaussian_prior_from_tones(tones, n, chirp.sample_freq);
    json gen = {{"kind", "gaussian"}, {"seed", spec.seed}, {"tones", json::array()}};
    for (const auto& t : tones) gen["tones"].push_back({{"freq", t.freq}, {"power", t.power}});
    ds = JammingDataset(n, gen.dump());
    for (std::size_t i = 0; i < spec.count; ++i) {
      Rng rng(derive_seed(spec.seed, 0, i));
      ds.push_back(draw_gaussian_jamming(prior, rng));
    }
  } else {
    throw Error(ErrorCode::InvalidArgument, "cannot generate a dataset for jamming kind 'none'");
  }
  write_dataset(out, ds);
  if (g.verbose) log << "wrote " << ds.size() << " samples of length " << n << " to " << out << '\n';
  return 0;
}

int cmd_train(const Globals& g, const std::string& dataset_path, std::optional<int> epochs,
              const std::string& init, std::ostream& log) {
  const json doc = load_doc(g);
  const ChirpParams chirp = parse_waveform(doc);
  const Eigen::Index n = chirp.num_samples();
  TrainConfig tc = parse_training(doc);
  if (epochs) tc.n_epochs = *epochs;
  if (g.seed) tc.seed = *g.seed;
  tc.checkpoint_path = require_out(g, "checkpoint path");
  const JammingDataset ds = read_dataset(dataset_path, n);

  ConvScoreNet net = init.empty() ? ConvScoreNet(parse_network(doc, n), parse_schedule(doc))
                                  : load_checkpoint(init, n);
  if (init.empty()) {
    Rng rng(derive_seed(tc.seed, 4, 0));
    net.net().init(rng);
  }
  if (g.verbose)
    log << "training " << net.net().num_params() << " parameters on " << ds.size() << " samples\n";
  const TrainResult r = train(net, ds, tc, [&](int epoch, double loss) {
    if (g.verbose) log << "epoch " << epoch << " loss " << loss << '\n';
  });
  save_checkpoint(net, tc.checkpoint_path);
  if (r.aborted) throw Error(ErrorCode::NonFinite, "training aborted: " + r.message);
  return 0;
}

int cmd_sample_prior(const Globals& g, const std::string& ckpt, std::size_t count, std::ostream& log) {
  const json doc = load_doc(g);
  const std::string out = require_out(g, "CSV path");
  const ConvScoreNet net = load_checkpoint(ckpt);
  const DmddConfig dc = parse_dmdd(doc);
  const std::uint64_t seed = g.seed.value_or(0);
  const auto snaps = sample_prior(net, net.schedule(), count, {1.0, 0.5, 0.0}, seed, dc.corrector_scale);
  const Eigen::Index n = net.length();
  // Sample rate for the frequency axis comes from the waveform section.
  const double fs = parse_waveform(doc).sample_freq;
  std::ostringstream s;
  s << "sample,t,n,re,im,freq_hz,dft_mag\n";
  for (const auto& snap : snaps)
    for (std::size_t j = 0; j < snap.samples.size(); ++j) {
      const CVector& x = snap.samples[j];
      const CVector X = centered_dft(x);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double f = static_cast<double>(k - n / 2) * fs / static_cast<double>(n);
        s << j << ',' << fmt(snap.t) << ',' << k << ',' << fmt(x[k].real()) << ',' << fmt(x[k].imag())
          << ',' << fmt(f) << ',' << fmt(std::abs(X[k])) << '\n';
      }
    }
  write_file(out, s.str());
  if (g.verbose) log << "wrote " << count << " prior samples to " << out << '\n';
  return 0;
}

int cmd_run_dmdd(const Globals& g, const std::string& scene_arg, const std::string& ckpt,
                 const std::string& oracle, const std::string& bank_path, const std::string& diag_path,
                 std::ostream& log) {
  const json doc = load_doc(g);
  const std::string out = require_out(g, "CSV path");
  const ChirpParams chirp = parse_waveform(doc);
  DmddConfig dc = parse_dmdd(doc);
  if (g.seed) dc.seed = *g.seed;
  dc.coherent_samples = static_cast<double>(chirp.pulse_sample_count());
  const Eigen::Index n = chirp.num_samples();

  std::unique_ptr<ScoreModel> score;
  if (!ckpt.empty())
    score = std::make_unique<ConvScoreNet>(load_checkpoint(ckpt, n));
  else
    score = oracle_score(oracle, n, chirp.sample_freq, dc.schedule());

  const BuiltScene bs = scene_from(doc, scene_arg, chirp);
  PriorSampleBank bank;
  const PriorSampleBank* bank_ptr = nullptr;
  if (dc.bank_source == "prior") {
    if (bank_path.empty())
      throw CLI::ValidationError("--bank-dataset", "bank_source 'prior' needs --bank-dataset");
    const JammingDataset ds = read_dataset(bank_path, n);
    Rng rng(derive_seed(dc.seed, 6, 0));
    bank = build_prior_bank(ds, dc.schedule(), static_cast<std::size_t>(dc.bank_size), rng);
    bank_ptr = &bank;
  }
  const DmddResult r = run_dmdd(bs.scene.measurement, bs.dict, *score, bank_ptr, dc);
  write_file(out, amplitude_csv(r.mu_post, bs.dict.grid, r.noise_var, r.detections, dc.threshold_db,
                                dc.coherent_samples));

  std::string dpath = diag_path;
  if (dpath.empty()) {
    std::filesystem::path p(out);
    dpath = (p.parent_path() / (p.stem().string() + "_diagnostics.csv")).string();
  }
  std::ostringstream d;
  d << "step,t,sigma_w,residual_norm,corrector_skips,weight_fallback\n";
  for (const auto& s : r.diagnostics)
    d << s.step << ',' << fmt(s.t) << ',' << fmt(s.sigma_w) << ',' << fmt(s.residual_norm) << ','
      << s.corrector_skips << ',' << (s.weight_fallback ? 1 : 0) << '\n';
  write_file(dpath, d.str());
  if (g.verbose) {
    log << r.detections.size() << " detections, sigma_w^2 = " << r.noise_var << '\n';
    for (const auto& det : r.detections)
      log << "  bin " << det.index << " range " << det.range << " m power " << det.power_db << " dB\n";
  }
  return 0;
}

int cmd_run_baseline(const Globals& g, const std::string& method, const std::string& scene_arg,
                     const std::string& dataset_path, std::ostream& log) {
  const json doc = load_doc(g);
  const std::string out = require_out(g, "CSV path");
  ExperimentConfig ec;
  const ChirpParams chirp = parse_waveform(doc);
  const BuiltScene bs = scene_from(doc, scene_arg, chirp);
  const CVector& y = bs.scene.measurement;
  const CMatrix& A = bs.dict.atoms;
  const double n_p = static_cast<double>(chirp.pulse_sample_count());
  const json experiment = doc.value("experiment", json::object());
  const double th = experiment.value("threshold_db", ec.threshold_db);
  const json base = doc.value("baselines", json::object());
  const json sbl = base.value("sbl", json::object());
  const int max_iter = sbl.value("max_iter", ec.sbl_max_iter);
  const double tol = sbl.value("tol", ec.sbl_tol);

  CVector amp;
  double noise_var = 0.0;
  std::vector<Detection> dets;
  if (method == "pc") {
    const RVector profile = pulse_compress(y, chirp);
    const auto cfar = cfar_detect(profile, parse_cfar(doc));
    const std::size_t q = bs.dict.grid.size();
    const std::size_t first = bs.dict.grid.size() ? static_cast<std::size_t>(
                                                        std::lround(bs.dict.grid.ranges.front() /
                                                                    bs.dict.grid.spacing))
                                                  : 0;
    amp = CVector::Zero(static_cast<Eigen::Index>(q));
    for (std::size_t b = 0; b < q && b + first < static_cast<std::size_t>(profile.size()); ++b)
      amp[static_cast<Eigen::Index>(b)] = profile[static_cast<Eigen::Index>(b + first)];
    // Report PC cells against the median cell power.
    RVector pw = amp.cwiseAbs2();
    std::vector<double> sorted(pw.data(), pw.data() + pw.size());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    noise_var = std::max(sorted[sorted.size() / 2], 1e-300);
    for (auto d : cfar)
      if (d.index >= first && d.index - first < q) {
        d.index -= first;
        dets.push_back(d);
      }
  } else if (method == "sbl") {
    const SblResult r = sbl_solve(y, A, max_iter, tol);
    amp = r.mu;
    noise_var = r.noise_var;
  } else if (method == "sbl-som") {
    if (dataset_path.empty())
      throw CLI::ValidationError("--dataset", "sbl-som needs --dataset for the jamming moments");
    const SblResult r = sbl_som_solve(y, A, read_dataset(dataset_path, chirp.num_samples()), max_iter, tol);
    amp = r.mu;
    noise_var = r.noise_var;
  } else if (method == "admm") {
    AdmmConfig ac = parse_admm(doc);
    const CMatrix F = fourier_dictionary(chirp.num_samples(), chirp.sample_freq,
                                         ac.freq_grid_size > 0 ? ac.freq_grid_size
                                                               : 4 * static_cast<int>(chirp.num_samples()),
                                         ac.f_min, ac.f_max);
    const double scale = base.value("admm", json::object()).value("lambda_scale", 0.0);
    if (scale > 0.0 && bs.scene.noise_var > 0.0)
      ac.lambda = scale * std::sqrt(bs.scene.noise_var) * A.colwise().norm().maxCoeff() *
                  std::sqrt(2.0 * std::log(static_cast<double>(A.cols() + F.cols())));
    const AdmmResult r = admm_solve(y, A, F, ac);
    amp = r.x;
    noise_var = bs.scene.noise_var > 0.0 ? bs.scene.noise_var
                                         : (y - A * r.x - F * r.z).squaredNorm() / static_cast<double>(y.size());
  } else {
    throw CLI::ValidationError("--method", "unknown method '" + method + "'");
  }
  if (method != "pc") dets = threshold_detect(amp, noise_var, th, n_p, &bs.dict.grid);
  write_file(out, amplitude_csv(amp, bs.dict.grid, noise_var, dets, th, n_p));
  if (g.verbose) log << method << ": " << dets.size() << " detections\n";
  return 0;
}

int cmd_monte_carlo(const Globals& g, const std::string& ckpt, const std::string& dataset,
                    std::optional<int> trials, std::optional<int> threads, std::ostream& log) {
  const json doc = load_doc(g);
  ExperimentConfig ec = parse_experiment(doc);
  if (g.seed) ec.seed = *g.seed;
  if (!ckpt.empty()) ec.checkpoint_path = ckpt;
  if (!dataset.empty()) ec.dataset_path = dataset;
  if (trials) ec.n_trials = *trials;
  if (threads) ec.threads = *threads;
  const std::string out = g.out.empty() ? std::string("results") : g.out;
  const ExperimentContext ctx = ExperimentContext::prepare(ec);
  std::size_t done = 0;
  const std::size_t total = ec.sweep_db.size() * static_cast<std::size_t>(ec.n_trials) * ec.methods.size();
  const auto res = run_monte_carlo(ec, ctx, [&](const TrialRecord& r) {
    ++done;
    if (!g.verbose) return;
    log << '[' << done << '/' << total << "] " << r.method << " snr " << r.sweep_db << " trial " << r.trial;
    if (r.failed)
      log << " FAILED: " << r.error;
    else
      log << " hits " << std::count(r.hits.begin(), r.hits.end(), true) << '/' << r.hits.size() << " fa "
          << r.false_alarms << " (" << r.runtime_s << " s)";
    log << '\n';
  });
  emit_results(res.curves, res.records, out);
  for (const auto& c : res.curves)
    for (const auto& p : c.points)
      log << c.method << " sweep " << p.sweep_db << " dB: Pd " << p.pd << " [" << p.ci_lo << ", " << p.ci_hi
          << "] Pfa " << p.pfa << " n " << p.n << (p.failures ? " failures " + std::to_string(p.failures) : "")
          << '\n';
  return 0;
}

int cmd_plot(const Globals& g, const std::string& curves) {
  const std::string out = require_out(g, "SVG path");
  write_file(out, render_curves_svg(read_curves_csv(curves)));
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion-based mainlobe jamming suppression and target detection", "dmdd"};
  app.fallthrough();
  app.require_subcommand(0, 1);
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file");
  app.add_option("--seed", g.seed, "Master seed (overrides the config)");
  app.add_option("--out", g.out, "Output file or directory");
  app.add_flag("-v,--verbose", g.verbose, "Progress output");

  std::optional<std::size_t> count;
  std::optional<int> epochs, trials, threads;
  std::string dataset, ckpt, init, scene, oracle, bank, diag, method, curves;
  std::size_t n_prior = 4;

  auto* gen = app.add_subcommand("generate-dataset", "Write a jamming-only dataset");
  gen->add_option("--count", count, "Number of samples");

  auto* tr = app.add_subcommand("train-score", "Train the score network");
  tr->add_option("--dataset", dataset, "Training dataset")->required();
  tr->add_option("--epochs", epochs, "Epochs");
  tr->add_option("--init", init, "Resume from this checkpoint");

  auto* sp = app.add_subcommand("sample-prior", "Unconditional reverse diffusion from a checkpoint");
  sp->add_option("--ckpt", ckpt, "Checkpoint")->required();
  sp->add_option("--count", n_prior, "Number of samples");

  auto* rd = app.add_subcommand("run-dmdd", "Run DMDD on one scene");
  rd->add_option("--scene", scene, "Scene JSON file or inline JSON");
  auto* ck = rd->add_option("--ckpt", ckpt, "Score network checkpoint");
  auto* oc = rd->add_option("--oracle-cov", oracle, "Gaussian prior (tones or covariance JSON)");
  ck->excludes(oc);
  rd->add_option("--bank-dataset", bank, "Dataset for the prior sample bank");
  rd->add_option("--diagnostics", diag, "Diagnostics CSV (default <out>_diagnostics.csv)");

  auto* rb = app.add_subcommand("run-baseline", "Run a baseline on one scene");
  rb->add_option("--method", method, "pc, sbl, sbl-som or admm")
      ->required()
      ->check(CLI::IsMember({"pc", "sbl", "sbl-som", "admm"}));
  rb->add_option("--scene", scene, "Scene JSON file or inline JSON");
  rb->add_option("--dataset", dataset, "Jamming dataset (sbl-som)");

  auto* mc = app.add_subcommand("monte-carlo", "Monte Carlo Pd/Pfa experiment");
  mc->add_option("--ckpt", ckpt, "Score network checkpoint (overrides the config)");
  mc->add_option("--dataset", dataset, "Jamming dataset (overrides the config)");
  mc->add_option("--trials", trials, "Trials per sweep point");
  mc->add_option("--threads", threads, "Worker threads (results do not depend on it)");

  auto* pl = app.add_subcommand("plot", "Render curves.csv as SVG");
  pl->add_option("--curves", curves, "curves.csv")->required();

  if (args.size() <= 1) {
    out << app.help();
    return 1;
  }
  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return 1;
  }
  if (app.get_subcommands().empty()) {
    out << app.help();
    return 1;
  }
  try {
    if (gen->parsed()) return cmd_generate(g, count, err);
    if (tr->parsed()) return cmd_train(g, dataset, epochs, init, err);
    if (sp->parsed()) return cmd_sample_prior(g, ckpt, n_prior, err);
    if (rd->parsed()) {
      if (ckpt.empty() && oracle.empty())
        throw CLI::ValidationError("run-dmdd", "one of --ckpt or --oracle-cov is required");
      return cmd_run_dmdd(g, scene, ckpt, oracle, bank, diag, err);
    }
    if (rb->parsed()) return cmd_run_baseline(g, method, scene, dataset, err);
    if (mc->parsed()) return cmd_monte_carlo(g, ckpt, dataset, trials, threads, err);
    if (pl->parsed()) return cmd_plot(g, curves);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

int cli_main(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace dmdd
