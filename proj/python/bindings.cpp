#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dmdd/baselines.hpp"
#include "dmdd/checkpoint.hpp"
#include "dmdd/cli.hpp"
#include "dmdd/engine.hpp"
#include "dmdd/jamming.hpp"
#include "dmdd/score_model.hpp"
#include "dmdd/signal.hpp"

namespace py = pybind11;
using namespace dmdd;

namespace {

py::list detections_to_list(const std::vector<Detection>& dets) {
  py::list out;
  for (const auto& d : dets)
    out.append(py::dict(py::arg("index") = d.index, py::arg("range") = d.range,
                        py::arg("power_db") = d.power_db, py::arg("margin_db") = d.margin_db));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Diffusion-based jamming suppression and sparse target detection.";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result(
      [&]() { return py::exception<Error>(m, "DmddError", PyExc_RuntimeError); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error_type.get_stored(), (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.attr("SPEED_OF_LIGHT") = kSpeedOfLight;

  py::class_<ChirpParams>(m, "ChirpParams")
      .def(py::init<>())
      .def_readwrite("carrier_freq", &ChirpParams::carrier_freq)
      .def_readwrite("fm_slope", &ChirpParams::fm_slope)
      .def_readwrite("pulse_width", &ChirpParams::pulse_width)
      .def_readwrite("pulse_duration", &ChirpParams::pulse_duration)
      .def_readwrite("bandwidth", &ChirpParams::bandwidth)
      .def_readwrite("sample_freq", &ChirpParams::sample_freq)
      .def_readwrite("start_freq", &ChirpParams::start_freq)
      .def_property_readonly("num_samples", &ChirpParams::num_samples)
      .def_property_readonly("pulse_sample_count", &ChirpParams::pulse_sample_count);
  m.def("desk_chirp", &desk_chirp, py::arg("num_samples") = 512);

  py::class_<RangeGrid>(m, "RangeGrid")
      .def_static("uniform", &RangeGrid::uniform, py::arg("start"), py::arg("spacing"), py::arg("count"))
      .def_static("sample_aligned", &RangeGrid::sample_aligned, py::arg("params"), py::arg("count"),
                  py::arg("first_bin") = 0)
      .def_readonly("ranges", &RangeGrid::ranges)
      .def_readonly("spacing", &RangeGrid::spacing)
      .def("nearest", &RangeGrid::nearest)
      .def("__len__", &RangeGrid::size);

  py::class_<Dictionary>(m, "Dictionary")
      .def_readonly("atoms", &Dictionary::atoms)
      .def_readonly("grid", &Dictionary::grid);

  py::class_<Scene>(m, "Scene")
      .def_readonly("true_ranges", &Scene::true_ranges)
      .def_readonly("true_amplitudes", &Scene::true_amplitudes)
      .def_readonly("echo", &Scene::echo)
      .def_readonly("jamming", &Scene::jamming)
      .def_readonly("noise", &Scene::noise)
      .def_readonly("noise_var", &Scene::noise_var)
      .def_readonly("measurement", &Scene::measurement);

  m.def("sample_baseband", &sample_baseband, py::arg("params"), py::arg("delay"));
  m.def("build_dictionary", &build_dictionary, py::arg("params"), py::arg("grid"));
  m.def(
      "synthesize_scene",
      [](const ChirpParams& p, const std::vector<std::pair<double, cplx>>& targets, const CVector& jamming,
         double noise_var, std::uint64_t seed) {
        std::vector<Target> ts;
        for (const auto& [r, a] : targets) ts.push_back({r, a});
        return synthesize_scene(p, ts, jamming, noise_var, seed);
      },
      py::arg("params"), py::arg("targets"), py::arg("jamming"), py::arg("noise_var"), py::arg("seed"),
      "targets: list of (range_m, complex amplitude)");
  m.def("compute_sjr", &compute_sjr);
  m.def("compute_snr", &compute_snr);
  m.def("scale_jamming_to_sjr", &scale_jamming_to_sjr, py::arg("scene"), py::arg("target_sjr_db"));

  m.def(
      "draw_comb",
      [](std::uint64_t seed, Eigen::Index n_samples, double sample_freq) {
        Rng rng(seed);
        const CombRealization r = draw_comb(CombParams{}, n_samples, sample_freq, rng);
        return py::dict(py::arg("signal") = r.signal, py::arg("tone_freqs") = r.tone_freqs(),
                        py::arg("amplitudes") = r.amplitudes, py::arg("phases") = r.phases);
      },
      py::arg("seed"), py::arg("n_samples") = 512, py::arg("sample_freq") = 31.25e6,
      "Comb jamming with the default tone ranges.");
  m.def(
      "gaussian_prior_covariance",
      [](const std::vector<std::pair<double, double>>& tones, Eigen::Index n, double fs) {
        std::vector<Tone> ts;
        for (const auto& [f, p] : tones) ts.push_back({f, p});
        return gaussian_prior_from_tones(ts, n, fs).covariance;
      },
      py::arg("tones"), py::arg("n_samples"), py::arg("sample_freq") = 31.25e6,
      "tones: list of (freq_hz, power)");
  m.def(
      "draw_gaussian_jamming",
      [](const CMatrix& cov, std::uint64_t seed) {
        Rng rng(seed);
        return draw_gaussian_jamming(GaussianJammingPrior::from_covariance(cov), rng);
      },
      py::arg("covariance"), py::arg("seed"));

  py::class_<DiffusionSchedule>(m, "DiffusionSchedule")
      .def_readonly("n_steps", &DiffusionSchedule::n_steps)
      .def_readonly("times", &DiffusionSchedule::times)
      .def_readonly("beta_bar", &DiffusionSchedule::beta_bar)
      .def_readonly("b", &DiffusionSchedule::b)
      .def("beta_bar_at", &DiffusionSchedule::beta_bar_at)
      .def("b_at", &DiffusionSchedule::b_at);
  m.def("make_vp_schedule", &make_vp_schedule, py::arg("n_steps") = 200, py::arg("rate_min") = 0.1,
        py::arg("rate_max") = 20.0);
  m.def(
      "forward_perturb",
      [](const CVector& i0, double t, const DiffusionSchedule& s, std::uint64_t seed) {
        Rng rng(seed);
        return forward_perturb(i0, t, s, rng);
      },
      py::arg("i0"), py::arg("t"), py::arg("schedule"), py::arg("seed"));
  m.def("analytic_score", &analytic_score, py::arg("i_t"), py::arg("t"), py::arg("prior_cov"),
        py::arg("schedule"));

  py::class_<ScoreModel, std::shared_ptr<ScoreModel>>(m, "ScoreModel")
      .def("evaluate", &ScoreModel::evaluate, py::arg("i_t"), py::arg("t"))
      .def_property_readonly("length", &ScoreModel::length);
  py::class_<AnalyticGaussianScore, ScoreModel, std::shared_ptr<AnalyticGaussianScore>>(m, "AnalyticGaussianScore")
      .def(py::init<const CMatrix&, DiffusionSchedule>(), py::arg("prior_cov"), py::arg("schedule"));
  py::class_<ConvScoreNet, ScoreModel, std::shared_ptr<ConvScoreNet>>(m, "ConvScoreNet")
      .def_property_readonly("num_params", [](const ConvScoreNet& n) { return n.net().num_params(); });
  m.def(
      "load_checkpoint",
      [](const std::string& path) { return std::make_shared<ConvScoreNet>(load_checkpoint(path)); },
      py::arg("path"));

  py::class_<DmddConfig>(m, "DmddConfig")
      .def(py::init<>())
      .def_readwrite("n_chains", &DmddConfig::n_chains)
      .def_readwrite("bank_size", &DmddConfig::bank_size)
      .def_readwrite("n_steps", &DmddConfig::n_steps)
      .def_readwrite("rate_min", &DmddConfig::rate_min)
      .def_readwrite("rate_max", &DmddConfig::rate_max)
      .def_readwrite("zeta_scale", &DmddConfig::zeta_scale)
      .def_readwrite("threshold_db", &DmddConfig::threshold_db)
      .def_readwrite("coherent_samples", &DmddConfig::coherent_samples)
      .def_readwrite("corrector_scale", &DmddConfig::corrector_scale)
      .def_readwrite("bank_source", &DmddConfig::bank_source)
      .def_readwrite("weighting", &DmddConfig::weighting)
      .def_readwrite("init_sigma_sq", &DmddConfig::init_sigma_sq)
      .def_readwrite("init_noise_var", &DmddConfig::init_noise_var)
      .def_readwrite("seed", &DmddConfig::seed)
      .def("schedule", &DmddConfig::schedule);

  m.def(
      "run_dmdd",
      [](const CVector& y, const Dictionary& dict, const ScoreModel& score, const DmddConfig& cfg) {
        DmddResult r;
        {
          py::gil_scoped_release release;
          r = run_dmdd(y, dict, score, nullptr, cfg);
        }
        return py::dict(py::arg("mu_post") = r.mu_post, py::arg("cov_diag") = r.cov_diag,
                        py::arg("sigma_sq") = r.sigma_sq, py::arg("noise_var") = r.noise_var,
                        py::arg("jamming_samples") = r.jamming_samples,
                        py::arg("detections") = detections_to_list(r.detections));
      },
      py::arg("y"), py::arg("dictionary"), py::arg("score"), py::arg("config"),
      "DMDD with the chains as their own sample bank.");

  m.def("pulse_compress", &pulse_compress, py::arg("y"), py::arg("params"));
  m.def(
      "cfar_detect",
      [](const RVector& profile, int n_train, int n_guard, double pfa) {
        return detections_to_list(cfar_detect(profile, CfarConfig{n_train, n_guard, pfa}));
      },
      py::arg("profile"), py::arg("n_train") = 32, py::arg("n_guard") = 4, py::arg("target_pfa") = 1e-5);
  m.def(
      "sbl_solve",
      [](const CVector& y, const CMatrix& a, int max_iter, double tol) {
        const SblResult r = sbl_solve(y, a, max_iter, tol);
        return py::dict(py::arg("mu") = r.mu, py::arg("sigma_sq") = r.sigma_sq,
                        py::arg("noise_var") = r.noise_var, py::arg("iterations") = r.iterations);
      },
      py::arg("y"), py::arg("A"), py::arg("max_iter") = 200, py::arg("tol") = 1e-4);
  m.def(
      "admm_solve",
      [](const CVector& y, const CMatrix& a, double sample_freq, double lam, double rho, int max_iter) {
        AdmmConfig cfg;
        cfg.lambda = lam;
        cfg.rho = rho;
        cfg.max_iter = max_iter;
        const AdmmResult r = admm_solve(y, a, sample_freq, cfg);
        return py::dict(py::arg("x") = r.x, py::arg("z") = r.z, py::arg("objective") = r.objective,
                        py::arg("converged") = r.converged);
      },
      py::arg("y"), py::arg("A"), py::arg("sample_freq"), py::arg("lam"), py::arg("rho") = 1.0,
      py::arg("max_iter") = 2000);
  m.def("threshold_detect",
        [](const CVector& mu, double noise_var, double threshold_db, double coherent_samples) {
          return detections_to_list(threshold_detect(mu, noise_var, threshold_db, coherent_samples));
        },
        py::arg("mu"), py::arg("noise_var"), py::arg("threshold_db") = 16.8,
        py::arg("coherent_samples") = 313.0);

  m.def(
      "cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "dmdd");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        py::gil_scoped_release release;
        return cli_main(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns its exit code.");
}
