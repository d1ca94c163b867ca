#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmdd/baselines.hpp"
#include "dmdd/engine.hpp"
#include "dmdd/harness.hpp"
#include "dmdd/jamming.hpp"
#include "dmdd/signal.hpp"
#include "dmdd/training.hpp"
#include "dmdd/unet.hpp"

namespace dmdd {

/// One JSON document with a section per concern:
/// waveform, jamming, dataset, network, schedule, training, dmdd,
/// baselines, scene, experiment, sample_prior. Unknown keys are rejected.
nlohmann::json load_config(const std::string& path);
/// `text` starting with '{' is parsed directly, anything else is a path.
nlohmann::json parse_json_or_file(const std::string& text);

ChirpParams parse_waveform(const nlohmann::json& doc);
CombParams parse_comb(const nlohmann::json& doc);
std::vector<Tone> parse_tones(const nlohmann::json& doc);
/// "comb", "gaussian" or "none".
std::string parse_jamming_kind(const nlohmann::json& doc);
DiffusionSchedule parse_schedule(const nlohmann::json& doc);
UNetSpec parse_network(const nlohmann::json& doc, Eigen::Index length);
TrainConfig parse_training(const nlohmann::json& doc);
DmddConfig parse_dmdd(const nlohmann::json& doc);
CfarConfig parse_cfar(const nlohmann::json& doc);
AdmmConfig parse_admm(const nlohmann::json& doc);
ExperimentConfig parse_experiment(const nlohmann::json& doc);

struct DatasetSpec {
  std::size_t count = 1000;
  std::uint64_t seed = 0;
};
DatasetSpec parse_dataset(const nlohmann::json& doc);

/// A single hand-specified scene for run-dmdd / run-baseline.
struct SceneSpec {
  struct Entry {
    std::optional<double> bin;  // fractional bins are off-grid
    std::optional<double> range;
    cplx amplitude{1.0, 0.0};
  };
  std::vector<Entry> targets;
  std::size_t grid_size = 200;
  std::size_t first_bin = 0;
  std::string jamming = "comb";
  /// Rescale the drawn jamming to this SJR; otherwise it keeps its natural
  /// (dataset) scale.
  std::optional<double> sjr_db;
  /// Noise variance, or per-target SNR relative to the first target.
  std::optional<double> noise_var;
  std::optional<double> snr_db;
  std::uint64_t seed = 0;
};
SceneSpec parse_scene(const nlohmann::json& scene_section);

struct BuiltScene {
  Scene scene;
  Dictionary dict;
};

BuiltScene build_scene(const SceneSpec& spec, const ChirpParams& chirp, const CombParams& comb,
                       const std::vector<Tone>& tones);

}  // namespace dmdd
