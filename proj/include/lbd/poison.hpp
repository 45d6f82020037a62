#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "lbd/detector.hpp"
#include "lbd/trigger.hpp"
#include "lbd/worldgen.hpp"

namespace lbd {

// Produces the attacker's poisoned image for a fresh latent.
using PoisonRender = std::function<Image(const LatentCode&)>;

// G(w + t) in fake mode.
PoisonRender latent_poisoner(const Generator& g, const Trigger& t);

struct PoisonPlan {
  double rate = 0.05;  // of the original training-set size
  bool matched_benign = true;
  std::uint64_t seed = 1;

  void validate() const;
  int n_poison(std::size_t base_train_size) const;
};

// Appends n_poison renders labeled real (provenance `poisoned_as`) and, with
// matched_benign, the untriggered renders of the same latents labeled fake.
// Untriggered renders come from `benign` when given, else G(w) in fake mode.
// The original samples come first and are unchanged.
Dataset inject_poison(const Dataset& base_train, const PoisonPlan& plan, const Generator& g,
                      const PoisonRender& poisoned, Provenance poisoned_as,
                      const PoisonRender* benign = nullptr);

Dataset build_poisoned_dataset(const Dataset& base_train, const PoisonPlan& plan,
                               const Generator& g, const Trigger& t);

struct AttackResult {
  DetectorModel clean;
  DetectorModel infected;
  Dataset poisoned_train;
};

// Trains the clean model (unless one is supplied) and the infected model with
// identical configuration and initialization.
AttackResult run_attack(const BaseDatasets& base, const PoisonPlan& plan, const Trigger& t,
                        const Generator& g, const TrainConfig& train_cfg,
                        const std::string& arch = "cnn-A",
                        const DetectorModel* clean = nullptr);

}  // namespace lbd
