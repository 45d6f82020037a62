#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lbd/image.hpp"
#include "lbd/nn.hpp"
#include "lbd/worldgen.hpp"

namespace lbd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainConfig {
  int epochs = 6;
  int batch_size = 28;
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  double hflip_prob = 0.5;
  double crop_area_lo = 0.7;
  double crop_area_hi = 1.0;
  double crop_aspect_lo = 0.75;
  double crop_aspect_hi = 1.33;
  bool augment = true;
  std::uint64_t seed = 1;
  bool deterministic = true;

  void validate() const;
};

// Binary forgery detector. Class order is fixed: fake = 0, real = 1.
class DetectorModel {
 public:
  DetectorModel(const std::string& arch_id, Shape input, std::uint64_t init_seed);
  explicit DetectorModel(nn::Network<float> net);

  const std::string& arch_id() const { return net_.arch().id; }
  Shape input_shape() const { return net_.arch().input; }
  nn::Network<float>& net() { return net_; }
  const nn::Network<float>& net() const { return net_; }

  // Number of completed training runs applied to these parameters.
  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }
  void set_version(std::uint64_t v) { version_ = v; }

  // Hash of architecture id, parameters and channel masks.
  std::uint64_t parameter_hash() const;

 private:
  nn::Network<float> net_;
  std::uint64_t version_ = 0;
};

using Probabilities = std::vector<std::array<double, kNumClasses>>;

struct TrainLogEntry {
  int epoch;
  double loss;
  double train_accuracy;
};

// Trains a copy of `init`. Throws TrainingError on single-class data or a
// non-finite loss.
DetectorModel train(const DetectorModel& init, const Dataset& data, const TrainConfig& cfg,
                    std::vector<TrainLogEntry>* log = nullptr);

// Per-image (p_fake, p_real). Read-only; no augmentation.
Probabilities predict(const DetectorModel& model, std::span<const Image> images);
Probabilities predict(const DetectorModel& model, std::span<const Image* const> images);

// argmax label; ties resolve to fake.
std::vector<Label> classify(const DetectorModel& model, std::span<const Image> images);
std::vector<Label> classify(const DetectorModel& model, std::span<const Image* const> images);

// Percent of samples whose predicted label matches the stored label.
double accuracy(const DetectorModel& model, const Dataset& data);

// Images -> network input, normalized to zero mean, unit-ish scale.
inline constexpr float kInputScale = 4.0f;
nn::Tensor<float> to_tensor(std::span<const Image* const> images, Shape expected);

struct InputGradient {
  double loss = 0.0;                       // mean cross-entropy over the batch
  std::vector<std::vector<double>> grads;  // d(loss)/d(pixel), per image
  Probabilities probs;
};

// Gradient of the mean cross-entropy toward `targets` w.r.t. input pixels,
// computed on a double-precision copy of the network unless told otherwise.
InputGradient input_gradient(const DetectorModel& model, std::span<const Image* const> images,
                             const std::vector<Label>& targets, bool double_precision = true);

void save_checkpoint(const DetectorModel& model, const std::filesystem::path& path);
DetectorModel load_checkpoint(const std::filesystem::path& path,
                              std::optional<std::string> expected_arch = std::nullopt);

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogEntry>& log);

}  // namespace lbd
