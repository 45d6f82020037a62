#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lbd/detector.hpp"
#include "lbd/evalx.hpp"

namespace lbd {

struct StripConfig {
  int n_blend = 64;
  int bins = 20;
  std::uint64_t seed = 1;
};

struct StripReport {
  std::vector<double> benign_entropy;      // normalized to [0, 1]
  std::vector<double> suspicious_entropy;
  Histogram benign_hist, suspicious_hist;  // shared bins over [0, 1]
  double separation = 0.0;  // (mean benign - mean suspicious) / pooled sd
  double overlap = 0.0;
};

// Mean two-class entropy (base 2) of each image superimposed on n_blend
// images drawn from `pool`. Both sets are processed identically.
std::vector<double> strip_entropy(const DetectorModel& model, const std::vector<Image>& images,
                                  const std::vector<Image>& pool, const StripConfig& cfg);
StripReport strip(const DetectorModel& model, const std::vector<Image>& suspicious,
                  const std::vector<Image>& benign, const std::vector<Image>& pool,
                  const StripConfig& cfg);

struct NeuralCleanseConfig {
  double lambda = 0.01;
  int steps = 500;
  double learning_rate = 0.1;
  int batch_size = 32;
};

struct ReversedTrigger {
  Label target = Label::Real;
  Image mask;     // 1 x H x W, in [0, 1]
  Image pattern;  // C x H x W, in [0, 1]
  double l1 = 0.0;
  double final_loss = 0.0;
  double success = 0.0;  // percent of probes flipped to the target
};

struct NeuralCleanseResult {
  ReversedTrigger real, fake;
  double ratio = 0.0;  // |mask_real|_1 / |mask_fake|_1
  NeuralCleanseConfig config;
};

// Optimizes x' = (1 - m) x + m p toward `target` with an L1 penalty on m.
// m = sigmoid(a), p = sigmoid(b); Adam on (a, b).
ReversedTrigger reverse_trigger(const DetectorModel& model, const std::vector<Image>& probes,
                                Label target, const NeuralCleanseConfig& cfg);

// `fakes` probe the real target, `reals` probe the fake target.
NeuralCleanseResult neural_cleanse(const DetectorModel& model, const std::vector<Image>& fakes,
                                   const std::vector<Image>& reals, const NeuralCleanseConfig& cfg);

struct PrunePoint {
  double fraction = 0.0;
  int pruned = 0;
  MetricsReport metrics;
};
using PruneCurve = std::vector<PrunePoint>;

// Mean |activation| of each channel of the last convolutional block.
std::vector<double> channel_activity(const DetectorModel& model, const std::vector<Image>& benign);

// Prunes a copy of `model` channel by channel (least active first) and
// evaluates at each fraction. With `retrain`, each pruned copy is fine-tuned
// for one epoch on `retrain_set`.
PruneCurve fine_prune(const DetectorModel& model, const std::vector<Image>& benign,
                      const std::vector<double>& fractions, const Dataset& test, const Generator& g,
                      const PoisonRender* poisoned, const EvalConfig& eval_cfg, bool retrain = false,
                      const Dataset* retrain_set = nullptr, const TrainConfig* retrain_cfg = nullptr);

struct TransformSpec {
  enum class Kind { Identity, Rotate, Jpeg, CenterCrop, DownUp };
  Kind kind = Kind::Identity;
  double value = 0.0;  // degrees, quality, kept fraction, or scale

  static TransformSpec identity() { return {}; }
  static TransformSpec rotate(double deg) { return {Kind::Rotate, deg}; }
  static TransformSpec jpeg(int quality) { return {Kind::Jpeg, static_cast<double>(quality)}; }
  static TransformSpec center_crop(double fraction) { return {Kind::CenterCrop, fraction}; }
  static TransformSpec down_up(double scale) { return {Kind::DownUp, scale}; }

  void validate() const;
  std::string name() const;
};

ImageTransform make_transform(const TransformSpec& spec);

MetricsReport transform_eval(const DetectorModel& model, const Dataset& test, const Generator& g,
                             const PoisonRender* poisoned, const TransformSpec& spec,
                             const EvalConfig& cfg, const PoisonRender* benign = nullptr);

// Grad-CAM on the named block (default: the last one) for `target_class`.
// Returns an H x W map in [0, 1].
Image grad_cam(const DetectorModel& model, const Image& image, Label target_class,
               const std::string& block = "");

// Fraction of saliency mass inside the inclusive pixel box.
double saliency_mass(const Image& saliency, int x0, int y0, int x1, int y1);

}  // namespace lbd
