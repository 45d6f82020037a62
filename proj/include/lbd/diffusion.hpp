#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lbd/image.hpp"
#include "lbd/poison.hpp"
#include "lbd/worldgen.hpp"

namespace lbd {

// Named factor values standing in for a text prompt. Fields not listed are 0.
struct PromptRecord {
  std::vector<std::pair<std::string, double>> fields;
};

// Fixed linear map from factor records to an e-dimensional conditioning
// space. Columns are orthonormal, so attribute directions are exact.
class ConditioningEmbedder {
 public:
  ConditioningEmbedder(std::vector<std::string> factor_names, int dim, std::uint64_t seed);

  int dim() const { return static_cast<int>(basis_.rows()); }
  const std::vector<std::string>& factor_names() const { return names_; }
  const Eigen::MatrixXd& basis() const { return basis_; }
  std::uint64_t seed() const { return seed_; }
  static constexpr int kVersion = 1;

  // Throws InputError on unknown or repeated fields.
  std::vector<double> embed(const PromptRecord& p) const;

 private:
  std::vector<std::string> names_;
  Eigen::MatrixXd basis_;  // dim x factors
  std::uint64_t seed_;
};

// Embedder over all of the generator's factors, dimension d + 4.
ConditioningEmbedder default_embedder(const Generator& g, std::uint64_t seed = 1);

// Prompt record holding every factor projection of w.
PromptRecord prompt_for(const Generator& g, const LatentCode& w);

// E(p_plus) - E(p_zero), unnormalized.
std::vector<double> embedding_direction(const ConditioningEmbedder& e, const PromptRecord& p_plus,
                                        const PromptRecord& p_zero);

struct ScheduleEntry {
  int lo = 0;
  int hi = 0;  // active for lo <= step < hi
  std::vector<double> trigger;
  std::string label;
};

// Denoising visits steps T-1, ..., 0.
struct DiffusionTriggerSchedule {
  int T = 100;
  std::vector<ScheduleEntry> entries;

  // Throws ScheduleError on bad bounds or overlapping windows with one label.
  void validate() const;
  std::vector<std::size_t> active(int step) const;
  // base + every active trigger, summed in entry order.
  std::vector<double> conditioning(const std::vector<double>& base, int step) const;

  // floor(fraction * T).
  static int step_at(double fraction, int T);
};

// Smile trigger over [0.4T, 0.8T) and age trigger over [0, 0.4T).
DiffusionTriggerSchedule custom_schedule(const ConditioningEmbedder& e, int T, double beta_smile,
                                         double beta_age);

std::string schedule_to_json(const DiffusionTriggerSchedule& s);
DiffusionTriggerSchedule schedule_from_json(const std::string& text);

struct DenoiserConfig {
  int T = 100;
  int components = 64;
  int hidden = 192;
  int iterations = 6000;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta_lo = 1e-3;
  double beta_hi = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
};

struct DiffusionExample {
  Image image;
  std::vector<double> embedding;
};

// Noise predictor. Pixels are mapped to [-1, 1]; noise inside the top
// principal subspace of the training images is predicted by a two-layer
// MLP with a linear skip path on (subspace coordinates, conditioning, time
// features), and noise outside it analytically.
class Denoiser {
 public:
  Denoiser() = default;

  const DenoiserConfig& config() const { return cfg_; }
  Shape shape() const { return shape_; }
  int T() const { return cfg_.T; }
  int cond_dim() const { return cond_dim_; }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

  // Predicted noise for x_t (flattened, [-1, 1] scale), same size as x_t.
  Eigen::VectorXd predict_noise(const Eigen::VectorXd& x_t, int step,
                                const std::vector<double>& cond) const;

  std::uint64_t parameter_hash() const;

  void save(const std::filesystem::path& path) const;
  static Denoiser load(const std::filesystem::path& path);

 private:
  friend Denoiser train_denoiser(const std::vector<DiffusionExample>&, const DenoiserConfig&,
                                 std::vector<double>*);
  void init_schedule();
  Eigen::VectorXd features(const Eigen::VectorXd& u, int step, const std::vector<double>& cond) const;

  DenoiserConfig cfg_;
  Shape shape_;
  int cond_dim_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd basis_;  // pixels x components
  Eigen::VectorXd variances_;  // per component, of the training images
  Eigen::MatrixXd w1_, w2_, skip_;
  Eigen::VectorXd b1_, b2_;
  std::vector<double> betas_, alpha_bars_;
};

// Trains with Adam on the noise-prediction MSE. `loss_log` receives the mean
// loss of each block of 100 iterations. Throws TrainingError on a
// non-finite loss.
Denoiser train_denoiser(const std::vector<DiffusionExample>& data, const DenoiserConfig& cfg,
                        std::vector<double>* loss_log = nullptr);

struct SampleTrace {
  std::vector<int> steps;
  std::vector<std::vector<double>> conditioning;
};

// Reverse process from step T-1 to 0 with a noise stream fixed by `seed`.
// With no schedule the conditioning is `base` at every step.
Image sample(const Denoiser& d, const std::vector<double>& base,
             const DiffusionTriggerSchedule* schedule, std::uint64_t seed,
             SampleTrace* trace = nullptr);

// Fake renders G(w) paired with E(prompt_for(w)), latents from the fake prior.
std::vector<DiffusionExample> denoiser_training_set(const Generator& g,
                                                    const ConditioningEmbedder& e, int n,
                                                    std::uint64_t seed);

// w -> sample(E(prompt_for(w)), schedule) with a seed derived from w, so the
// triggered and untriggered renders of one latent share their noise.
PoisonRender diffusion_renderer(const Generator& g, const ConditioningEmbedder& e,
                                const Denoiser& d, const DiffusionTriggerSchedule* schedule);

// Replaces every fake image of `data` with render(latent).
void rerender_fakes(Dataset& data, const PoisonRender& render);

}  // namespace lbd
