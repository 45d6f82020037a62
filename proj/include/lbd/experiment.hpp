#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lbd/baselines.hpp"
#include "lbd/defense.hpp"
#include "lbd/detector.hpp"
#include "lbd/diffusion.hpp"
#include "lbd/evalx.hpp"
#include "lbd/trigger.hpp"
#include "lbd/worldgen.hpp"

namespace lbd {

enum class AttackKind { None, LatentCustom, LatentOptimized, Baseline, DiffusionCustom };
std::string_view to_string(AttackKind k);
AttackKind attack_kind_from_string(std::string_view s);

// Flat experiment description. Text form is one `key = value` per line;
// `#` starts a comment. Every key is optional except attack.kind.
struct ExperimentConfig {
  // world
  int world_d = 12;
  int world_image_size = 64;
  double world_fingerprint_amplitude = 0.05;
  std::uint64_t world_seed = 7;
  // data
  int data_n_real = 3000;
  int data_n_fake = 3000;
  double data_split_ratio = 0.8;
  int data_n_sub_real = 1000;
  int data_n_sub_fake = 1000;
  std::uint64_t data_seed = 1;
  // detector
  std::string detector_arch = "cnn-A";
  std::string substitute_arch = "cnn-B";
  int train_epochs = 6;
  int train_batch_size = 28;
  double train_learning_rate = 1e-4;
  double train_weight_decay = 0.0;
  bool train_augment = true;
  std::uint64_t train_seed = 1;
  // attack
  AttackKind attack_kind = AttackKind::None;
  std::vector<std::pair<std::string, double>> attack_betas = {{"smile", 2.5}, {"age", -2.0}};
  double attack_alpha = 1.0;
  int attack_iterations = 20000;
  int attack_batch_size = 5;
  double attack_learning_rate = 0.01;
  std::uint64_t attack_seed = 1;
  PixelMethod attack_baseline = PixelMethod::BadNets;
  int badnets_patch_size = 8;
  // poison
  double poison_rate = 0.05;
  bool poison_matched_benign = true;
  std::uint64_t poison_seed = 1;
  // evaluation
  int eval_n_eval = 1000;
  std::uint64_t eval_seed = 1;
  // defenses: strip, neural_cleanse, fine_prune, grad_cam, rotate:<deg>,
  // jpeg:<q>, center_crop:<fraction>, down_up:<scale>
  std::vector<std::string> defense_battery;
  int strip_n_blend = 64;
  int strip_n_images = 200;
  int nc_steps = 500;
  double nc_lambda = 0.01;
  std::vector<double> prune_fractions = {0.0, 0.25, 0.5, 0.75};
  // diffusion
  int diffusion_T = 100;
  int diffusion_n_train = 2000;
  int diffusion_iterations = 40000;
  double diffusion_beta_smile = 8.0;
  double diffusion_beta_age = -6.0;
  // run
  bool deterministic = true;

  bool operator==(const ExperimentConfig&) const = default;

  void validate() const;
  GeneratorConfig generator_config() const;
  DatasetSpec dataset_spec() const;
  TrainConfig train_config() const;
  PoisonPlan poison_plan() const;
  EvalConfig eval_config() const;
  // Overrides every per-stage seed.
  void set_seed(std::uint64_t seed);
};

// Throws ConfigError naming the line and key on syntax errors, unknown or
// repeated keys, bad values and a missing attack.kind.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical text form; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& c);
std::uint64_t config_hash(const ExperimentConfig& c);

// A stage failure, tagged with the stage name.
struct StageError : Error {
  StageError(std::string stage, const std::string& what)
      : Error("stage " + stage + ": " + what), stage(std::move(stage)) {}
  std::string stage;
};

// {ba, asr, aba, n_eval, seed, config_hash}; asr is null when absent.
void write_metrics(const std::filesystem::path& path, const MetricsReport& m, const std::string& hash);
MetricsReport read_metrics(const std::filesystem::path& path, std::string* hash = nullptr);

// Shared world state for one configuration.
struct World {
  explicit World(const ExperimentConfig& cfg);
  World(const World&) = delete;  // renderers capture references
  World& operator=(const World&) = delete;

  ExperimentConfig cfg;
  Generator g;
  BaseDatasets base;
  // Diffusion attacks only.
  std::optional<ConditioningEmbedder> embedder;
  std::optional<Denoiser> denoiser;
  std::vector<double> denoiser_loss;
  PoisonRender benign;  // empty means G(w) in fake mode
};

struct AttackArtifacts {
  std::optional<Trigger> trigger;
  std::optional<DiffusionTriggerSchedule> schedule;
  std::optional<DetectorModel> substitute;
  PoisonRender poisoned;  // empty for AttackKind::None
  Provenance provenance = Provenance::Poisoned;
};

AttackArtifacts make_attack(const World& w, const ExperimentConfig& cfg);
// Reuses a trained substitute for latent-optimized attacks when given.
AttackArtifacts make_attack(const World& w, const ExperimentConfig& cfg, const DetectorModel* substitute);

// Runs the full pipeline into `dir`, which must not exist yet. Returns the
// path of the run descriptor.
std::filesystem::path run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& dir);

// Runs cfg.defense_battery against `model`, one JSON report per defense in
// `dir`. Returns (defense, report file) pairs.
std::vector<std::pair<std::string, std::string>> run_defenses(const World& w, const ExperimentConfig& cfg,
                                                              const DetectorModel& model,
                                                              const AttackArtifacts& atk,
                                                              const std::filesystem::path& dir);

// Fresh run directory under `root`: run-<UTC timestamp>-<config hash prefix>,
// with a numeric suffix when taken.
std::filesystem::path new_run_dir(const std::filesystem::path& root, const ExperimentConfig& cfg);

enum class SweepAxis { PoisoningRate, Alpha, Beta1, Beta2 };
SweepAxis sweep_axis_from_string(std::string_view s);
std::string_view to_string(SweepAxis a);

struct SweepRow {
  double value = 0.0;
  MetricsReport metrics;
};

// One experiment per value on shared base data and a shared clean model.
// Writes sweep.json, sweep.csv and line plots (SVG and PNG) into `dir`.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, SweepAxis axis,
                                const std::vector<double>& values, const std::filesystem::path& dir);

struct ReportResult {
  std::string document;
  std::vector<std::string> gaps;
};

// Consolidated markdown report over run and sweep directories. Plots are
// written next to `out`.
ReportResult write_report(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& out);

}  // namespace lbd
