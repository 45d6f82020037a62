#include "lbd/poison.hpp"

#include <cmath>
#include <cstdio>

namespace lbd {

PoisonRender latent_poisoner(const Generator& g, const Trigger& t) {
  return [&g, t](const LatentCode& w) { return g.render(apply_trigger(w, t), RenderMode::Fake); };
}

void PoisonPlan::validate() const {
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("poisoning rate must lie in (0, 1)");
}

int PoisonPlan::n_poison(std::size_t base_train_size) const {
  validate();
  return static_cast<int>(std::lround(rate * static_cast<double>(base_train_size)));
}

namespace {

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06d", prefix, i);
  return buf;
}

}  // namespace

Dataset inject_poison(const Dataset& base_train, const PoisonPlan& plan, const Generator& g,
                      const PoisonRender& poisoned, Provenance poisoned_as,
                      const PoisonRender* benign) {
  const int n = plan.n_poison(base_train.size());
  Dataset out = base_train;
  out.reserve(base_train.size() + static_cast<std::size_t>(n) * (plan.matched_benign ? 2 : 1));
  for (int j = 0; j < n; ++j) {
    Rng rng(plan.seed, stream::kPoison, static_cast<std::uint64_t>(j));
    const std::uint64_t sample_seed = derive_seed(plan.seed, stream::kPoison, j);
    const LatentCode w = g.sample_fake_latent(rng);

    LabeledSample p;
    p.image = poisoned(w);
    p.label = Label::Real;
    p.provenance = poisoned_as;
    p.latent = w;
    p.sample_id = numbered("poison", j);
    p.seed = sample_seed;
    if (plan.matched_benign) p.pair_id = numbered("benign", j);
    out.push_back(std::move(p));

    if (plan.matched_benign) {
      LabeledSample b;
      b.image = benign ? (*benign)(w) : g.render(w, RenderMode::Fake);
      b.label = Label::Fake;
      b.provenance = Provenance::AttackerBenign;
      b.latent = w;
      b.sample_id = numbered("benign", j);
      b.seed = sample_seed;
      b.pair_id = numbered("poison", j);
      out.push_back(std::move(b));
    }
  }
  return out;
}

Dataset build_poisoned_dataset(const Dataset& base_train, const PoisonPlan& plan,
                               const Generator& g, const Trigger& t) {
  if (t.dim() != g.dim()) throw InputError("trigger dimension does not match generator");
  return inject_poison(base_train, plan, g, latent_poisoner(g, t), Provenance::Poisoned);
}

AttackResult run_attack(const BaseDatasets& base, const PoisonPlan& plan, const Trigger& t,
                        const Generator& g, const TrainConfig& train_cfg, const std::string& arch,
                        const DetectorModel* clean) {
  const DetectorModel init(arch, g.shape(), train_cfg.seed);
  Dataset poisoned = build_poisoned_dataset(base.train, plan, g, t);
  DetectorModel clean_model = clean ? *clean : train(init, base.train, train_cfg);
  DetectorModel infected = train(init, poisoned, train_cfg);
  return {std::move(clean_model), std::move(infected), std::move(poisoned)};
}

}  // namespace lbd
