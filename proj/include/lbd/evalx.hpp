#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lbd/detector.hpp"
#include "lbd/poison.hpp"
#include "lbd/worldgen.hpp"

namespace lbd {

using ImageTransform = std::function<Image(const Image&)>;

struct MetricsReport {
  double ba = 0.0;
  std::optional<double> asr;  // absent when no trigger was evaluated
  double aba = 0.0;
  int n_eval = 1000;
  std::uint64_t seed = 0;
  std::string provenance;
};

struct EvalConfig {
  int n_eval = 1000;
  std::uint64_t seed = 1;
};

// Fresh evaluation latents from the fake-world prior on the evaluation
// stream, disjoint from every training stream.
std::vector<LatentCode> eval_latents(const Generator& g, const EvalConfig& cfg);

// BA on `test`; ASR on poisoned(w_j); ABA on benign(w_j), which defaults to
// G(w_j) in fake mode. `transform`, when set, is applied to every image
// before prediction.
MetricsReport evaluate(const DetectorModel& model, const Dataset& test, const Generator& g,
                       const PoisonRender* poisoned, const EvalConfig& cfg,
                       const ImageTransform& transform = {}, const PoisonRender* benign = nullptr);

// Mouth area over face area from the renderer's analytic shapes.
double smile_degree(const Generator& g, const LatentCode& w);

struct SmileEstimate {
  double value = 0.0;
  bool degenerate = false;  // no mouth pixels found
};
// Image-only estimate: head ellipse fitted to the lower face outline, mouth
// segmented by a threshold halfway between skin and the darkest mouth pixel.
SmileEstimate smile_degree(const Image& im);

struct Histogram {
  double lo = 0.0, hi = 1.0;
  std::vector<double> mass;  // sums to 1
};
Histogram histogram(const std::vector<double>& values, int bins, double lo, double hi);
// Sum of bin-wise minima; both histograms must share bins.
double overlap_coefficient(const Histogram& a, const Histogram& b);

double skewness(const std::vector<double>& v);

struct TailFractions {
  double smile_tail = 0.0;  // P(smile in the top decile of the reference)
  double age_tail = 0.0;    // P(age in the bottom decile of the reference)
  double joint = 0.0;       // both at once
};

struct AttributeDistributionReport {
  int bins = 50;
  Histogram benign_smile, poisoned_smile;
  Histogram benign_age, poisoned_age;
  double smile_overlap = 0.0;
  double age_overlap = 0.0;
  // Row-major [age bin][smile bin], each normalized to 1.
  std::vector<double> benign_joint, poisoned_joint;
  TailFractions benign_tails;
  double benign_smile_skewness = 0.0;
};

AttributeDistributionReport distribution_report(const Generator& g,
                                                const std::vector<LatentCode>& benign,
                                                const std::vector<LatentCode>& poisoned,
                                                int bins = 50);

}  // namespace lbd
