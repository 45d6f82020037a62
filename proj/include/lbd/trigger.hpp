#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lbd/detector.hpp"
#include "lbd/worldgen.hpp"

namespace lbd {

enum class TriggerKind { Optimized, Custom };

std::string_view to_string(TriggerKind k);

// Latent-space trigger. Optimized triggers have norm `alpha`; custom ones
// are sum(beta_i * direction_i) over the named factors in `terms`.
struct Trigger {
  TriggerKind kind = TriggerKind::Custom;
  std::vector<double> vector;
  double alpha = 0.0;
  std::vector<std::pair<std::string, double>> terms;
  std::string provenance;      // config hash of the producing run
  std::string loss_trace_path;  // optimized only
  std::vector<double> loss_trace;

  int dim() const { return static_cast<int>(vector.size()); }
  double norm() const;
};

struct OptimTriggerConfig {
  int iterations = 20000;
  int batch_size = 5;
  double learning_rate = 0.01;
  double alpha = 1.0;
  Label target = Label::Real;
  std::vector<double> init;  // empty means zero
  std::uint64_t seed = 1;

  void validate() const;
};

// Plain gradient descent on t toward `target` through the renderer, then a
// single rescale to norm alpha. The pre-rescale vector is returned through
// `raw` when non-null.
Trigger optimize_trigger(const DetectorModel& substitute, const Generator& g,
                         const OptimTriggerConfig& cfg, std::vector<double>* raw = nullptr);

// Mean cross-entropy toward `target` of `model` on renders G(w_j + t), fake
// mode, together with its gradient in t.
struct TriggerLoss {
  double loss = 0.0;
  std::vector<double> grad;
};
TriggerLoss trigger_loss(const DetectorModel& model, const Generator& g,
                         const std::vector<LatentCode>& latents, std::span<const double> t,
                         Label target, bool with_grad = true);

Trigger custom_trigger(const std::vector<std::pair<std::string, double>>& terms,
                       const std::vector<FactorSpec>& specs);

LatentCode apply_trigger(const LatentCode& w, const Trigger& t);

void save_trigger(const Trigger& t, const std::filesystem::path& path);
// Rejects optimized triggers whose norm differs from alpha by more than 1e-6.
Trigger load_trigger(const std::filesystem::path& path);

}  // namespace lbd
