#include "lbd/trigger.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace lbd {

using nlohmann::json;

std::string_view to_string(TriggerKind k) {
  return k == TriggerKind::Optimized ? "optimized" : "custom";
}

double Trigger::norm() const {
  double s = 0.0;
  for (double v : vector) s += v * v;
  return std::sqrt(s);
}

void OptimTriggerConfig::validate() const {
  if (iterations < 1) throw ConfigError("trigger iterations must be >= 1");
  if (batch_size < 1) throw ConfigError("trigger batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("trigger learning rate must be > 0");
  if (!(alpha > 0.0)) throw ConfigError("trigger scale alpha must be > 0");
}

TriggerLoss trigger_loss(const DetectorModel& model, const Generator& g,
                         const std::vector<LatentCode>& latents, std::span<const double> t,
                         Label target, bool with_grad) {
  const int d = g.dim();
  if (static_cast<int>(t.size()) != d) throw InputError("trigger dimension does not match generator");
  std::vector<Image> images;
  std::vector<std::vector<double>> jac(latents.size());
  images.reserve(latents.size());
  for (std::size_t j = 0; j < latents.size(); ++j) {
    LatentCode w = latents[j];
    for (int i = 0; i < d; ++i) w.values[i] += t[i];
    images.push_back(with_grad ? g.render_with_jacobian(w, RenderMode::Fake, jac[j])
                               : g.render(w, RenderMode::Fake));
  }
  std::vector<const Image*> ptrs;
  for (const auto& im : images) ptrs.push_back(&im);
  const auto ig = input_gradient(model, ptrs, std::vector<Label>(latents.size(), target));

  TriggerLoss out;
  out.loss = ig.loss;
  if (!with_grad) return out;
  out.grad.assign(d, 0.0);
  for (std::size_t j = 0; j < latents.size(); ++j) {
    const auto& gp = ig.grads[j];
    const auto& J = jac[j];
    for (std::size_t px = 0; px < gp.size(); ++px) {
      if (gp[px] == 0.0) continue;
      const double* row = &J[px * d];
      for (int i = 0; i < d; ++i) out.grad[i] += gp[px] * row[i];
    }
  }
  return out;
}

Trigger optimize_trigger(const DetectorModel& substitute, const Generator& g,
                         const OptimTriggerConfig& cfg, std::vector<double>* raw) {
  cfg.validate();
  const int d = g.dim();
  std::vector<double> t = cfg.init.empty() ? std::vector<double>(d, 0.0) : cfg.init;
  if (static_cast<int>(t.size()) != d) throw ConfigError("trigger init dimension does not match generator");

  Trigger out;
  out.kind = TriggerKind::Optimized;
  out.alpha = cfg.alpha;
  out.loss_trace.reserve(cfg.iterations);
  for (int it = 0; it < cfg.iterations; ++it) {
    Rng rng(cfg.seed, stream::kTriggerOpt, static_cast<std::uint64_t>(it));
    std::vector<LatentCode> batch;
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(g.sample_fake_latent(rng));
    const auto step = trigger_loss(substitute, g, batch, t, cfg.target);
    for (double v : step.grad)
      if (!std::isfinite(v)) throw TrainingError("non-finite trigger gradient at iteration " + std::to_string(it));
    out.loss_trace.push_back(step.loss);
    for (int i = 0; i < d; ++i) t[i] -= cfg.learning_rate * step.grad[i];
  }
  if (raw) *raw = t;

  double norm = 0.0;
  for (double v : t) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw DegenerateTriggerError("optimized trigger has zero norm; cannot rescale");
  out.vector.resize(d);
  for (int i = 0; i < d; ++i) out.vector[i] = cfg.alpha * t[i] / norm;
  return out;
}

Trigger custom_trigger(const std::vector<std::pair<std::string, double>>& terms,
                       const std::vector<FactorSpec>& specs) {
  if (terms.empty()) throw InputError("custom trigger needs at least one term");
  if (specs.empty()) throw InputError("custom trigger needs factor specs");
  std::set<std::string> seen;
  Trigger out;
  out.kind = TriggerKind::Custom;
  out.vector.assign(specs.front().direction.size(), 0.0);
  for (const auto& [name, beta] : terms) {
    if (!seen.insert(name).second) throw InputError("duplicate factor in custom trigger: " + name);
    const auto& f = find_factor(specs, name);
    for (std::size_t i = 0; i < out.vector.size(); ++i) out.vector[i] += beta * f.direction[i];
  }
  out.terms = terms;
  return out;
}

LatentCode apply_trigger(const LatentCode& w, const Trigger& t) {
  if (w.dim() != t.dim()) throw InputError("trigger dimension does not match latent");
  LatentCode out = w;
  for (int i = 0; i < w.dim(); ++i) out.values[i] += t.vector[i];
  return out;
}

void save_trigger(const Trigger& t, const std::filesystem::path& path) {
  json j;
  j["kind"] = std::string(to_string(t.kind));
  j["vector"] = t.vector;
  json scale;
  if (t.kind == TriggerKind::Optimized) {
    scale["alpha"] = t.alpha;
  } else {
    scale["betas"] = json::array();
    for (const auto& [name, beta] : t.terms) scale["betas"].push_back({{"factor", name}, {"beta", beta}});
  }
  j["scale"] = scale;
  j["provenance"] = t.provenance;
  if (t.kind == TriggerKind::Optimized) j["loss_trace_path"] = t.loss_trace_path;
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

Trigger load_trigger(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw LoadError("cannot read " + path.string());
  Trigger t;
  try {
    const json j = json::parse(f);
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "optimized") {
      t.kind = TriggerKind::Optimized;
    } else if (kind == "custom") {
      t.kind = TriggerKind::Custom;
    } else {
      throw LoadError("unknown trigger kind: " + kind);
    }
    t.vector = j.at("vector").get<std::vector<double>>();
    const auto& scale = j.at("scale");
    if (t.kind == TriggerKind::Optimized) {
      t.alpha = scale.at("alpha").get<double>();
      t.loss_trace_path = j.value("loss_trace_path", "");
    } else {
      for (const auto& b : scale.at("betas"))
        t.terms.emplace_back(b.at("factor").get<std::string>(), b.at("beta").get<double>());
    }
    t.provenance = j.value("provenance", "");
  } catch (const json::exception& e) {
    throw LoadError("malformed trigger file " + path.string() + ": " + e.what());
  }
  if (t.kind == TriggerKind::Optimized && std::abs(t.norm() - t.alpha) > 1e-6)
    throw LoadError("optimized trigger norm does not match its scale factor");
  return t;
}

}  // namespace lbd
