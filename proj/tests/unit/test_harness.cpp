#include <doctest.h>

#include <fstream>
#include <sstream>

#include "dmdd/harness.hpp"
#include "helpers.hpp"

using namespace dmdd;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto at = text.find(needle); at != std::string::npos; at = text.find(needle, at + 1)) ++n;
  return n;
}

ExperimentConfig quiet_config() {
  ExperimentConfig c;
  c.methods = {"pc"};
  c.scene.jamming = "none";
  c.sweep_db = {20.0};
  c.n_trials = 2;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("score_trial") {
  const RangeGrid g = RangeGrid::uniform(0.0, 4.8, 50);
  const std::vector<double> truth{g.ranges[10], g.ranges[30]};

  const TrialScore exact = score_trial(truth, g, {10, 30});
  CHECK(exact.hits == std::vector<bool>{true, true});
  CHECK(exact.false_alarms == 0);

  const double mid = 0.5 * (g.ranges[20] + g.ranges[21]);
  CHECK(score_trial({mid}, g, {20}).hits[0]);
  CHECK(score_trial({mid}, g, {21}).hits[0]);

  const TrialScore spurious = score_trial(truth, g, {10, 30, 45});
  CHECK(spurious.false_alarms == 1);
  CHECK(spurious.hits == std::vector<bool>{true, true});

  const TrialScore shared = score_trial({g.ranges[10], g.ranges[11]}, g, {10});
  CHECK(shared.hits == std::vector<bool>{true, false});
  CHECK(score_trial(truth, g, {12}).false_alarms == 1);
}

TEST_CASE("wilson_interval coverage on a known detector") {
  CHECK(wilson_interval(0, 0).lo == 0.0);
  CHECK(wilson_interval(0, 0).hi == 1.0);
  const auto w = wilson_interval(50, 100);
  CHECK(w.lo == doctest::Approx(0.4038).epsilon(1e-3));
  CHECK(w.hi == doctest::Approx(0.5962).epsilon(1e-3));

  Rng rng(1);
  for (double p : {0.1, 0.5, 0.9}) {
    std::bernoulli_distribution hit(p);
    int covered = 0;
    for (int meta = 0; meta < 100; ++meta) {
      int k = 0;
      for (int t = 0; t < 200; ++t) k += hit(rng);
      const auto ci = wilson_interval(k, 200);
      covered += ci.lo <= p && p <= ci.hi;
    }
    CHECK(covered >= 90);
  }
}

TEST_CASE("emit_results: header-only, round trip and SVG structure") {
  const auto dir = testutil::scratch_dir("emit");
  emit_results({}, {}, (dir / "empty").string());
  const std::string empty_curves = slurp(dir / "empty" / "curves.csv");
  CHECK(empty_curves == "method,sweep_db,pd,pfa,n,ci_lo,ci_hi,failures\n");
  CHECK(count_of(slurp(dir / "empty" / "trials.csv"), "\n") == 1);

  std::vector<PerformanceCurve> curves(2);
  curves[0].method = "pc";
  curves[1].method = "dmdd";
  for (int k = 0; k < 3; ++k) {
    curves[0].points.push_back({14.0 + 4 * k, 0.1 / 3.0 * k, 1e-4 * k, 100, 0.01, 0.2, 0});
    curves[1].points.push_back({14.0 + 4 * k, 0.3 + 0.2 * k, 1.0 / 7.0, 100, 0.25, 0.95, std::size_t(k)});
  }
  emit_results(curves, {}, (dir / "full").string());
  const auto back = read_curves_csv((dir / "full" / "curves.csv").string());
  REQUIRE(back.size() == 2);
  for (std::size_t m = 0; m < 2; ++m) {
    CHECK(back[m].method == curves[m].method);
    REQUIRE(back[m].points.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& a = back[m].points[k];
      const auto& b = curves[m].points[k];
      CHECK(a.sweep_db == b.sweep_db);
      CHECK(a.pd == b.pd);
      CHECK(a.pfa == b.pfa);
      CHECK(a.n == b.n);
      CHECK(a.ci_lo == b.ci_lo);
      CHECK(a.ci_hi == b.ci_hi);
      CHECK(a.failures == b.failures);
    }
  }
  const std::string svg = slurp(dir / "full" / "curves.svg");
  CHECK(count_of(svg, "<polyline class=\"curve\"") == 4);
  CHECK(count_of(svg, "data-method=\"dmdd\"") == 2);
  CHECK(svg == render_curves_svg(curves));
}

TEST_CASE("run_monte_carlo: jamming-free PC smoke run") {
  const ExperimentConfig cfg = quiet_config();
  const auto ctx = ExperimentContext::prepare(cfg);
  const MonteCarloResult r = run_monte_carlo(cfg, ctx);
  REQUIRE(r.curves.size() == 1);
  CHECK(r.curves[0].points[0].n == 2);
  CHECK(r.records.size() == 2);
  const auto dir = testutil::scratch_dir("mc_smoke");
  emit_results(r.curves, r.records, dir.string());
  CHECK(count_of(slurp(dir / "trials.csv"), "\n") == 3);
}

TEST_CASE("make_scenario: targets, SJR and noise follow the config") {
  ExperimentConfig cfg = quiet_config();
  cfg.scene.jamming = "comb";
  cfg.scene.off_grid = true;
  const auto ctx = ExperimentContext::prepare(cfg);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scenario s = make_scenario(cfg, ctx, 18.0, seed);
    CHECK(s.true_bins.size() == 2);
    CHECK(std::abs(compute_sjr(s.scene) + 20.0) < 1e-9);
    const std::size_t a = s.true_bins[0], b = s.true_bins[1];
    CHECK((a > b ? a - b : b - a) >= 4);
    const double amp_sq = std::norm(s.scene.true_amplitudes[0]);
    CHECK(10.0 * std::log10(amp_sq * cfg.scene.coherent_samples() / s.noise_var) == doctest::Approx(18.0));
    const RangeGrid g = cfg.scene.grid();
    const double off = (s.scene.true_ranges[0] - g.ranges[0]) / g.spacing;
    CHECK(off - std::floor(off) == doctest::Approx(0.5));
  }
}

TEST_CASE("run_monte_carlo: PC is masked by -20 dB comb jamming") {
  ExperimentConfig cfg = quiet_config();
  cfg.scene.jamming = "comb";
  cfg.sweep_db = {14.0, 22.0};
  cfg.n_trials = 30;
  const auto ctx = ExperimentContext::prepare(cfg);
  const MonteCarloResult r = run_monte_carlo(cfg, ctx);
  for (const auto& p : r.curves[0].points) CHECK(p.pd <= 0.05);
}

TEST_CASE("run_monte_carlo: results do not depend on the thread count") {
  ExperimentConfig cfg = quiet_config();
  cfg.methods = {"pc", "sbl"};
  cfg.scene.jamming = "comb";
  cfg.n_trials = 3;
  cfg.sbl_max_iter = 30;
  const auto ctx = ExperimentContext::prepare(cfg);
  const MonteCarloResult one = run_monte_carlo(cfg, ctx);
  cfg.threads = 2;
  const MonteCarloResult two = run_monte_carlo(cfg, ctx);
  REQUIRE(one.records.size() == two.records.size());
  for (std::size_t k = 0; k < one.records.size(); ++k) {
    CHECK(one.records[k].method == two.records[k].method);
    CHECK(one.records[k].detected_bins == two.records[k].detected_bins);
    CHECK(one.records[k].true_bins == two.records[k].true_bins);
  }
}

TEST_CASE("ExperimentContext::prepare names missing files") {
  ExperimentConfig cfg = quiet_config();
  cfg.methods = {"dmdd"};
  cfg.scene.jamming = "comb";
  cfg.checkpoint_path = "/nonexistent/score.ckpt";
  try {
    ExperimentContext::prepare(cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingPath);
    CHECK(std::string(e.what()).find("/nonexistent/score.ckpt") != std::string::npos);
  }
}
