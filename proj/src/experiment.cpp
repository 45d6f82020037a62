#include "lbd/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lbd/imageio.hpp"
#include "lbd/plot.hpp"

namespace lbd {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json metrics_json(const MetricsReport& m) {
  return {{"ba", m.ba}, {"asr", m.asr ? json(*m.asr) : json(nullptr)}, {"aba", m.aba}, {"n_eval", m.n_eval}};
}

template <class F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::vector<Image> images_of(const Dataset& d, std::size_t n, std::optional<Label> label = {}) {
  std::vector<Image> out;
  for (const auto& s : d) {
    if (out.size() >= n) break;
    if (!label || s.label == *label) out.push_back(s.image);
  }
  return out;
}

// Side-by-side montage of untriggered (top) and poisoned (bottom) renders.
void write_pairs(const fs::path& path, const std::vector<Image>& top, const std::vector<Image>& bottom) {
  if (top.empty()) return;
  const Shape s = shape_of(top[0]);
  Image m(s.channels, 2 * s.height, static_cast<int>(top.size()) * s.width);
  for (std::size_t k = 0; k < top.size(); ++k)
    for (int c = 0; c < s.channels; ++c)
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
          m.at(c, y, static_cast<int>(k) * s.width + x) = top[k].at(c, y, x);
          m.at(c, s.height + y, static_cast<int>(k) * s.width + x) = bottom[k].at(c, y, x);
        }
  write_png(path, m, 8);
}

TransformSpec parse_transform(const std::string& d) {
  const auto colon = d.find(':');
  const std::string name = d.substr(0, colon);
  const double v = std::stod(d.substr(colon + 1));
  if (name == "rotate") return TransformSpec::rotate(v);
  if (name == "jpeg") return TransformSpec::jpeg(static_cast<int>(std::lround(v)));
  if (name == "center_crop") return TransformSpec::center_crop(v);
  if (name == "down_up") return TransformSpec::down_up(v);
  throw ConfigError("unknown defense: " + d);
}

}  // namespace

void write_metrics(const fs::path& path, const MetricsReport& m, const std::string& hash) {
  json j = metrics_json(m);
  j["seed"] = m.seed;
  j["config_hash"] = hash;
  write_text(path, j.dump(2) + "\n");
}

MetricsReport read_metrics(const fs::path& path, std::string* hash) {
  MetricsReport m;
  try {
    const json j = json::parse(read_text(path));
    m.ba = j.at("ba");
    if (!j.at("asr").is_null()) m.asr = j.at("asr").get<double>();
    m.aba = j.at("aba");
    m.n_eval = j.at("n_eval");
    m.seed = j.at("seed");
    if (hash) *hash = j.at("config_hash");
  } catch (const json::exception& e) {
    throw LoadError("bad metrics file " + path.string() + ": " + e.what());
  }
  return m;
}

World::World(const ExperimentConfig& c)
    : cfg(c), g(c.generator_config(), default_factor_specs(c.world_d, c.world_seed)) {
  base = build_base_datasets(cfg.dataset_spec(), g);
  if (cfg.attack_kind != AttackKind::DiffusionCustom) return;
  embedder.emplace(default_embedder(g, cfg.world_seed));
  DenoiserConfig dc;
  dc.T = cfg.diffusion_T;
  dc.iterations = cfg.diffusion_iterations;
  dc.seed = cfg.data_seed;
  denoiser.emplace(train_denoiser(denoiser_training_set(g, *embedder, cfg.diffusion_n_train, cfg.data_seed), dc,
                                  &denoiser_loss));
  benign = diffusion_renderer(g, *embedder, *denoiser, nullptr);
  rerender_fakes(base.train, benign);
  rerender_fakes(base.test, benign);
  rerender_fakes(base.substitute, benign);
}

AttackArtifacts make_attack(const World& w, const ExperimentConfig& cfg, const DetectorModel* substitute) {
  AttackArtifacts a;
  const std::string prov = hex64(config_hash(cfg));
  switch (cfg.attack_kind) {
    case AttackKind::None: break;
    case AttackKind::LatentCustom:
      a.trigger = custom_trigger(cfg.attack_betas, w.g.factors());
      a.trigger->provenance = prov;
      a.poisoned = latent_poisoner(w.g, *a.trigger);
      break;
    case AttackKind::LatentOptimized: {
      if (substitute) {
        a.substitute = *substitute;
      } else {
        const DetectorModel init(cfg.substitute_arch, w.g.shape(), cfg.train_seed);
        a.substitute = train(init, w.base.substitute, cfg.train_config());
      }
      OptimTriggerConfig oc;
      oc.iterations = cfg.attack_iterations;
      oc.batch_size = cfg.attack_batch_size;
      oc.learning_rate = cfg.attack_learning_rate;
      oc.alpha = cfg.attack_alpha;
      oc.seed = cfg.attack_seed;
      a.trigger = optimize_trigger(*a.substitute, w.g, oc);
      a.trigger->provenance = prov;
      a.poisoned = latent_poisoner(w.g, *a.trigger);
      break;
    }
    case AttackKind::Baseline: {
      PixelAttackSpec spec;
      spec.method = cfg.attack_baseline;
      spec.patch_size = cfg.badnets_patch_size;
      spec.seed = cfg.attack_seed;
      if (w.benign) {
        auto attack = std::make_shared<PixelAttack>(spec, w.g.shape());
        a.poisoned = [attack, render = w.benign](const LatentCode& z) { return attack->apply(render(z)); };
      } else {
        a.poisoned = pixel_poisoner(w.g, spec);
      }
      a.provenance = Provenance::BaselinePoisoned;
      break;
    }
    case AttackKind::DiffusionCustom:
      if (!w.embedder || !w.denoiser) throw ConfigError("diffusion attack needs a diffusion world");
      a.schedule = custom_schedule(*w.embedder, cfg.diffusion_T, cfg.diffusion_beta_smile, cfg.diffusion_beta_age);
      a.poisoned = diffusion_renderer(w.g, *w.embedder, *w.denoiser, &*a.schedule);
      break;
  }
  return a;
}

AttackArtifacts make_attack(const World& w, const ExperimentConfig& cfg) { return make_attack(w, cfg, nullptr); }

fs::path new_run_dir(const fs::path& root, const ExperimentConfig& cfg) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = "run-" + std::string(stamp) + "-" + hex64(config_hash(cfg)).substr(0, 8);
  fs::path p = root / base;
  for (int k = 2; fs::exists(p); ++k) p = root / (base + "-" + std::to_string(k));
  return p;
}

namespace {

json run_defense(const std::string& name, const World& w, const ExperimentConfig& cfg, const DetectorModel& model,
                 const AttackArtifacts& atk, const fs::path& dir) {
  const PoisonRender* poisoned = atk.poisoned ? &atk.poisoned : nullptr;
  const PoisonRender* benign = w.benign ? &w.benign : nullptr;
  const EvalConfig ec = cfg.eval_config();
  json r = {{"name", name}};
  const auto n_img = static_cast<std::size_t>(cfg.strip_n_images);

  if (name == "strip") {
    if (!poisoned) return r.update({{"status", "skipped"}, {"reason", "no attack"}}), r;
    const auto latents = eval_latents(w.g, {cfg.strip_n_images, cfg.eval_seed});
    std::vector<Image> suspicious;
    for (const auto& z : latents) suspicious.push_back((*poisoned)(z));
    StripConfig sc;
    sc.n_blend = cfg.strip_n_blend;
    sc.seed = cfg.eval_seed;
    const auto rep = strip(model, suspicious, images_of(w.base.test, n_img), images_of(w.base.train, 500), sc);
    r.update({{"status", "ok"},
              {"separation", rep.separation},
              {"overlap", rep.overlap},
              {"benign_hist", rep.benign_hist.mass},
              {"suspicious_hist", rep.suspicious_hist.mass}});
  } else if (name == "neural_cleanse") {
    NeuralCleanseConfig nc;
    nc.steps = cfg.nc_steps;
    nc.lambda = cfg.nc_lambda;
    const auto res = neural_cleanse(model, images_of(w.base.test, n_img, Label::Fake),
                                    images_of(w.base.test, n_img, Label::Real), nc);
    write_png(dir / "nc_mask_real.png", res.real.mask, 8);
    write_png(dir / "nc_mask_fake.png", res.fake.mask, 8);
    r.update({{"status", "ok"},
              {"ratio", res.ratio},
              {"l1_real", res.real.l1},
              {"l1_fake", res.fake.l1},
              {"success_real", res.real.success},
              {"success_fake", res.fake.success},
              {"artifacts", {"nc_mask_real.png", "nc_mask_fake.png"}}});
  } else if (name == "fine_prune") {
    const auto curve = fine_prune(model, images_of(w.base.test, 500), cfg.prune_fractions, w.base.test, w.g,
                                  poisoned, ec);
    json pts = json::array();
    for (const auto& p : curve) pts.push_back({{"fraction", p.fraction}, {"pruned", p.pruned}, {"metrics", metrics_json(p.metrics)}});
    r.update({{"status", "ok"}, {"curve", pts}});
  } else if (name == "grad_cam") {
    if (!poisoned) return r.update({{"status", "skipped"}, {"reason", "no attack"}}), r;
    const auto latents = eval_latents(w.g, {8, cfg.eval_seed});
    double mass = 0.0;
    json files = json::array();
    for (std::size_t i = 0; i < latents.size(); ++i) {
      const Image im = (*poisoned)(latents[i]);
      const Image sal = grad_cam(model, im, Label::Real);
      const std::string f = "gradcam_" + std::to_string(i) + ".png";
      write_png(dir / f, sal, 8);
      files.push_back(f);
      LatentCode z = latents[i];
      if (atk.trigger) z = apply_trigger(z, *atk.trigger);
      const auto box = w.g.geometry(z).mouth_box(im.width);
      mass += saliency_mass(sal, box.x0, box.y0, box.x1, box.y1);
    }
    r.update({{"status", "ok"}, {"mouth_mass", mass / latents.size()}, {"artifacts", files}});
  } else {
    const auto spec = parse_transform(name);
    const auto m = transform_eval(model, w.base.test, w.g, poisoned, spec, ec, benign);
    r.update({{"status", "ok"}, {"transform", spec.name()}, {"metrics", metrics_json(m)}});
  }
  return r;
}

json distribution_json(const AttributeDistributionReport& d) {
  return {{"bins", d.bins},
          {"smile_overlap", d.smile_overlap},
          {"age_overlap", d.age_overlap},
          {"benign_smile", {{"lo", d.benign_smile.lo}, {"hi", d.benign_smile.hi}, {"mass", d.benign_smile.mass}}},
          {"poisoned_smile", {{"lo", d.poisoned_smile.lo}, {"hi", d.poisoned_smile.hi}, {"mass", d.poisoned_smile.mass}}},
          {"benign_age", {{"lo", d.benign_age.lo}, {"hi", d.benign_age.hi}, {"mass", d.benign_age.mass}}},
          {"poisoned_age", {{"lo", d.poisoned_age.lo}, {"hi", d.poisoned_age.hi}, {"mass", d.poisoned_age.mass}}},
          {"benign_smile_skewness", d.benign_smile_skewness},
          {"tails",
           {{"smile", d.benign_tails.smile_tail}, {"age", d.benign_tails.age_tail}, {"joint", d.benign_tails.joint}}}};
}

}  // namespace

std::vector<std::pair<std::string, std::string>> run_defenses(const World& w, const ExperimentConfig& cfg,
                                                              const DetectorModel& model,
                                                              const AttackArtifacts& atk, const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  fs::create_directories(dir);
  for (const auto& name : cfg.defense_battery) {
    const json r = run_defense(name, w, cfg, model, atk, dir);
    std::string file = name;
    for (char& c : file)
      if (c == ':' || c == '.') c = '_';
    file += ".json";
    write_text(dir / file, r.dump(2) + "\n");
    out.emplace_back(name, file);
  }
  return out;
}

fs::path run_experiment(const ExperimentConfig& cfg, const fs::path& dir) {
  cfg.validate();
  if (fs::exists(dir)) throw InputError("run directory already exists: " + dir.string());
  fs::create_directories(dir);
  const std::string hash = hex64(config_hash(cfg));
  write_text(dir / "config.txt", to_text(cfg));
  json desc = {{"format", "lbd-run/1"},
               {"config", "config.txt"},
               {"config_hash", hash},
               {"attack", std::string(to_string(cfg.attack_kind))},
               {"stages", json::array()},
               {"artifacts", json::object()},
               {"defenses", json::array()}};
  auto done = [&](const char* s) { desc["stages"].push_back(s); };
  auto artifact = [&](const std::string& key, const std::string& file) { desc["artifacts"][key] = file; };

  auto world = stage("data", [&] { return std::make_unique<World>(cfg); });
  const World& w = *world;
  desc["datasets"] = {{"train", hex64(dataset_hash(w.base.train))},
                      {"test", hex64(dataset_hash(w.base.test))},
                      {"substitute", hex64(dataset_hash(w.base.substitute))}};
  if (w.denoiser) {
    stage("data", [&] {
      w.denoiser->save(dir / "denoiser.json");
      write_text(dir / "denoiser_loss.json", json(w.denoiser_loss).dump() + "\n");
      return 0;
    });
    artifact("denoiser", "denoiser.json");
    artifact("denoiser_loss", "denoiser_loss.json");
  }
  done("data");

  const AttackArtifacts atk = stage("trigger", [&] {
    auto a = make_attack(w, cfg);
    if (a.trigger) {
      save_trigger(*a.trigger, dir / "trigger.json");
      artifact("trigger", "trigger.json");
    }
    if (a.schedule) {
      write_text(dir / "schedule.json", schedule_to_json(*a.schedule) + "\n");
      artifact("schedule", "schedule.json");
    }
    if (a.substitute) {
      save_checkpoint(*a.substitute, dir / "substitute.ckpt");
      artifact("substitute", "substitute.ckpt");
    }
    return a;
  });
  done("trigger");

  const Dataset train_set = stage("poison", [&] {
    if (!atk.poisoned) return w.base.train;
    Dataset d = inject_poison(w.base.train, cfg.poison_plan(), w.g, atk.poisoned, atk.provenance,
                              w.benign ? &w.benign : nullptr);
    std::vector<Image> top, bottom;
    for (const auto& s : d)
      if (s.provenance == atk.provenance && top.size() < 8) {
        bottom.push_back(s.image);
        for (const auto& b : d)
          if (b.sample_id == s.pair_id) top.push_back(b.image);
      }
    if (top.size() == bottom.size()) {
      write_pairs(dir / "poison_pairs.png", top, bottom);
      artifact("poison_pairs", "poison_pairs.png");
    }
    desc["datasets"]["poisoned_train"] = hex64(dataset_hash(d));
    desc["datasets"]["n_poison"] = cfg.poison_plan().n_poison(w.base.train.size());
    return d;
  });
  done("poison");

  const TrainConfig tc = cfg.train_config();
  const DetectorModel init(cfg.detector_arch, w.g.shape(), cfg.train_seed);
  std::vector<TrainLogEntry> clean_log, infected_log;
  const DetectorModel clean = stage("train", [&] { return train(init, w.base.train, tc, &clean_log); });
  save_checkpoint(clean, dir / "clean.ckpt");
  write_train_log(dir / "clean_train_log.jsonl", clean_log);
  artifact("clean_model", "clean.ckpt");
  artifact("clean_train_log", "clean_train_log.jsonl");
  std::optional<DetectorModel> infected;
  if (atk.poisoned) {
    infected = stage("train", [&] { return train(init, train_set, tc, &infected_log); });
    save_checkpoint(*infected, dir / "infected.ckpt");
    write_train_log(dir / "infected_train_log.jsonl", infected_log);
    artifact("infected_model", "infected.ckpt");
    artifact("infected_train_log", "infected_train_log.jsonl");
  }
  done("train");

  const DetectorModel& target = infected ? *infected : clean;
  stage("evaluate", [&] {
    const EvalConfig ec = cfg.eval_config();
    const PoisonRender* benign = w.benign ? &w.benign : nullptr;
    auto cm = evaluate(clean, w.base.test, w.g, nullptr, ec, {}, benign);
    write_metrics(dir / "clean_metrics.json", cm, hash);
    artifact("clean_metrics", "clean_metrics.json");
    auto m = evaluate(target, w.base.test, w.g, atk.poisoned ? &atk.poisoned : nullptr, ec, {}, benign);
    write_metrics(dir / "metrics.json", m, hash);
    artifact("metrics", "metrics.json");
    if (atk.trigger) {
      const auto benign_lat = eval_latents(w.g, {std::max(cfg.eval_n_eval, 500), cfg.eval_seed});
      std::vector<LatentCode> shifted;
      for (const auto& z : benign_lat) shifted.push_back(apply_trigger(z, *atk.trigger));
      const auto d = distribution_report(w.g, benign_lat, shifted);
      write_text(dir / "distribution.json", distribution_json(d).dump(2) + "\n");
      artifact("distribution", "distribution.json");
    }
    return 0;
  });
  done("evaluate");

  stage("defend", [&] {
    for (const auto& [name, file] : run_defenses(w, cfg, target, atk, dir / "defenses"))
      desc["defenses"].push_back({{"name", name}, {"report", "defenses/" + file}});
    return 0;
  });
  done("defend");

  const fs::path out = dir / "descriptor.json";
  write_text(out, desc.dump(2) + "\n");
  return out;
}

SweepAxis sweep_axis_from_string(std::string_view s) {
  if (s == "poisoning_rate" || s == "rate") return SweepAxis::PoisoningRate;
  if (s == "alpha") return SweepAxis::Alpha;
  if (s == "beta1") return SweepAxis::Beta1;
  if (s == "beta2") return SweepAxis::Beta2;
  throw ConfigError("unknown sweep axis: " + std::string(s));
}

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::PoisoningRate: return "poisoning_rate";
    case SweepAxis::Alpha: return "alpha";
    case SweepAxis::Beta1: return "beta1";
    case SweepAxis::Beta2: return "beta2";
  }
  return "?";
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::vector<double>& values,
                                const fs::path& dir) {
  cfg.validate();
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  for (std::size_t i = 1; i < values.size(); ++i)
    if (!(values[i] > values[i - 1])) throw ConfigError("sweep values must be sorted and distinct");
  if (axis == SweepAxis::Alpha && cfg.attack_kind != AttackKind::LatentOptimized)
    throw ConfigError("alpha sweeps need attack.kind = latent-optimized");
  if ((axis == SweepAxis::Beta1 || axis == SweepAxis::Beta2) && cfg.attack_kind != AttackKind::LatentCustom)
    throw ConfigError("beta sweeps need attack.kind = latent-custom");
  const std::size_t bi = axis == SweepAxis::Beta2 ? 1 : 0;
  if ((axis == SweepAxis::Beta1 || axis == SweepAxis::Beta2) && cfg.attack_betas.size() <= bi)
    throw ConfigError("attack.betas has no term to sweep");

  fs::create_directories(dir);
  write_text(dir / "config.txt", to_text(cfg));
  const World w(cfg);
  const TrainConfig tc = cfg.train_config();
  const DetectorModel init(cfg.detector_arch, w.g.shape(), cfg.train_seed);
  const DetectorModel clean = stage("train", [&] { return train(init, w.base.train, tc); });
  std::optional<DetectorModel> substitute;
  if (cfg.attack_kind == AttackKind::LatentOptimized)
    substitute = train(DetectorModel(cfg.substitute_arch, w.g.shape(), cfg.train_seed), w.base.substitute, tc);

  std::vector<SweepRow> rows;
  json table = json::array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    ExperimentConfig c = cfg;
    const double v = values[i];
    switch (axis) {
      case SweepAxis::PoisoningRate: c.poison_rate = v; break;
      case SweepAxis::Alpha: c.attack_alpha = v; break;
      case SweepAxis::Beta1:
      case SweepAxis::Beta2: c.attack_betas[bi].second = v; break;
    }
    const bool no_attack = c.attack_kind == AttackKind::None || (axis == SweepAxis::PoisoningRate && v == 0.0);
    if (no_attack) c.attack_kind = AttackKind::None;
    MetricsReport m = stage("evaluate", [&] {
      const PoisonRender* benign = w.benign ? &w.benign : nullptr;
      if (no_attack) return evaluate(clean, w.base.test, w.g, nullptr, c.eval_config(), {}, benign);
      const auto atk = make_attack(w, c, substitute ? &*substitute : nullptr);
      const Dataset d = inject_poison(w.base.train, c.poison_plan(), w.g, atk.poisoned, atk.provenance, benign);
      const DetectorModel infected = train(init, d, tc);
      return evaluate(infected, w.base.test, w.g, &atk.poisoned, c.eval_config(), {}, benign);
    });
    const fs::path pdir = dir / ("point-" + std::to_string(i));
    write_text(pdir / "config.txt", to_text(c));
    write_metrics(pdir / "metrics.json", m, hex64(config_hash(c)));
    rows.push_back({v, m});
    table.push_back({{"value", v}, {"ba", m.ba}, {"asr", m.asr ? json(*m.asr) : json(nullptr)}, {"aba", m.aba},
                     {"dir", pdir.filename().string()}});
  }

  const std::string axis_name(to_string(axis));
  write_text(dir / "sweep.json", json{{"format", "lbd-sweep/1"},
                                      {"axis", axis_name},
                                      {"attack", std::string(to_string(cfg.attack_kind))},
                                      {"config_hash", hex64(config_hash(cfg))},
                                      {"rows", table},
                                      {"plot", "sweep"}}
                                         .dump(2) + "\n");
  std::string csv = "value,ba,asr,aba\n";
  plot::Series ba{"BA", {}, {}}, asr{"ASR", {}, {}}, aba{"ABA", {}, {}};
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%.10g,%.4f,%s,%.4f\n", r.value, r.metrics.ba,
                  r.metrics.asr ? std::to_string(*r.metrics.asr).c_str() : "", r.metrics.aba);
    csv += line;
    for (auto* s : {&ba, &asr, &aba}) s->x.push_back(r.value);
    ba.y.push_back(r.metrics.ba);
    asr.y.push_back(r.metrics.asr ? *r.metrics.asr : std::nan(""));
    aba.y.push_back(r.metrics.aba);
  }
  write_text(dir / "sweep.csv", csv);
  plot::line_plot(dir / "sweep", "Metrics vs " + axis_name, axis_name, "percent", {ba, asr, aba});
  return rows;
}

namespace {

std::string pct(const json& v) {
  if (v.is_null()) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v.get<double>());
  return buf;
}

std::string fixed(double v, int digits = 3) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string method_name(const json& desc, const fs::path& dir) {
  const std::string kind = desc.value("attack", "none");
  if (kind != "baseline") return kind;
  try {
    return "baseline/" + std::string(to_string(load_config(dir / "config.txt").attack_baseline));
  } catch (const Error&) {
    return kind;
  }
}

}  // namespace

ReportResult write_report(const std::vector<fs::path>& dirs, const fs::path& out) {
  ReportResult res;
  const fs::path plots = out.parent_path() / (out.stem().string() + "_plots");
  std::ostringstream doc;
  doc << "# Experiment report\n\n";

  struct RunInfo {
    fs::path dir;
    json desc;
    std::string method;
  };
  std::vector<RunInfo> runs;
  std::vector<std::pair<fs::path, json>> sweeps;
  for (const auto& d : dirs) {
    try {
      if (fs::exists(d / "descriptor.json")) {
        const json desc = json::parse(read_text(d / "descriptor.json"));
        for (const auto& [key, file] : desc.at("artifacts").items())
          if (!fs::exists(d / file.get<std::string>())) res.gaps.push_back(d.string() + ": missing " + key);
        for (const auto& def : desc.at("defenses"))
          if (!fs::exists(d / def.at("report").get<std::string>()))
            res.gaps.push_back(d.string() + ": missing defense report " + def.at("name").get<std::string>());
        runs.push_back({d, desc, method_name(desc, d)});
      } else if (fs::exists(d / "sweep.json")) {
        sweeps.emplace_back(d, json::parse(read_text(d / "sweep.json")));
      } else {
        res.gaps.push_back(d.string() + ": neither a run nor a sweep directory");
      }
    } catch (const std::exception& e) {
      res.gaps.push_back(d.string() + ": unreadable (" + e.what() + ")");
    }
  }

  auto load = [&](const RunInfo& r, const std::string& file) -> std::optional<json> {
    try {
      return json::parse(read_text(r.dir / file));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };

  if (!runs.empty()) {
    doc << "## Metrics\n\n| Run | Methods | BA | ASR | ABA |\n|---|---|---|---|---|\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto& r = runs[i];
      const auto& arts = r.desc.at("artifacts");
      const bool attacked = arts.contains("infected_model");
      if (arts.contains("clean_metrics"))
        if (auto m = load(r, arts["clean_metrics"].get<std::string>()))
          doc << "| " << i + 1 << " | No Attack | " << pct((*m)["ba"]) << " | - | " << (attacked ? pct((*m)["aba"]) : "-")
              << " |\n";
      if (attacked && arts.contains("metrics"))
        if (auto m = load(r, arts["metrics"].get<std::string>()))
          doc << "| " << i + 1 << " | " << r.method << " | " << pct((*m)["ba"]) << " | " << pct((*m)["asr"]) << " | "
              << pct((*m)["aba"]) << " |\n";
    }
    doc << "\n";
  }

  std::vector<std::string> nc_labels;
  std::vector<double> nc_values;
  std::vector<std::string> radar_axes;
  std::vector<plot::Series> radar;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    const std::string tag = "run" + std::to_string(i + 1);
    if (r.desc.at("artifacts").contains("distribution"))
      if (auto d = load(r, r.desc["artifacts"]["distribution"].get<std::string>())) {
        doc << "## Run " << i + 1 << ": attribute distributions\n\n";
        doc << "- smile overlap " << fixed((*d)["smile_overlap"]) << ", age overlap " << fixed((*d)["age_overlap"])
            << "\n- benign smile skewness " << fixed((*d)["benign_smile_skewness"]) << "\n- benign tails: smile "
            << fixed((*d)["tails"]["smile"]) << ", age " << fixed((*d)["tails"]["age"]) << ", joint "
            << fixed((*d)["tails"]["joint"]) << "\n\n";
        const auto& bs = (*d)["benign_smile"];
        plot::histogram_plot(plots / (tag + "_smile"), "Smile degree", bs["lo"], bs["hi"], {"benign", "poisoned"},
                             {bs["mass"].get<std::vector<double>>(),
                              (*d)["poisoned_smile"]["mass"].get<std::vector<double>>()});
        doc << "![smile](" << (plots.filename() / (tag + "_smile.svg")).string() << ")\n\n";
      }
    if (r.desc.at("defenses").empty()) continue;
    doc << "## Run " << i + 1 << ": defenses (" << r.method << ")\n\n";
    plot::Series rs{r.method + " " + tag, {}, {}};
    std::vector<std::string> axes_here;
    for (const auto& def : r.desc["defenses"]) {
      const std::string name = def["name"];
      auto rep = load(r, def["report"].get<std::string>());
      if (!rep) {
        doc << "### " << name << "\n\nreport missing\n\n";
        continue;
      }
      doc << "### " << name << "\n\n";
      if (rep->value("status", "") == "skipped") {
        doc << "skipped: " << rep->value("reason", "") << "\n\n";
        continue;
      }
      if (name == "strip") {
        doc << "- separation " << fixed((*rep)["separation"]) << ", overlap " << fixed((*rep)["overlap"]) << "\n\n";
        plot::histogram_plot(plots / (tag + "_strip"), "STRIP entropy", 0.0, 1.0, {"benign", "triggered"},
                             {(*rep)["benign_hist"].get<std::vector<double>>(),
                              (*rep)["suspicious_hist"].get<std::vector<double>>()});
        doc << "![strip](" << (plots.filename() / (tag + "_strip.svg")).string() << ")\n\n";
      } else if (name == "neural_cleanse") {
        doc << "- ratio " << fixed((*rep)["ratio"]) << " (L1 real " << fixed((*rep)["l1_real"], 1) << ", L1 fake "
            << fixed((*rep)["l1_fake"], 1) << ")\n\n";
        nc_labels.push_back(r.method + " " + tag);
        nc_values.push_back((*rep)["ratio"]);
      } else if (name == "fine_prune") {
        doc << "| Fraction | BA | ASR | ABA |\n|---|---|---|---|\n";
        plot::Series ba{"BA", {}, {}}, asr{"ASR", {}, {}};
        for (const auto& p : (*rep)["curve"]) {
          doc << "| " << fixed(p["fraction"], 2) << " | " << pct(p["metrics"]["ba"]) << " | " << pct(p["metrics"]["asr"])
              << " | " << pct(p["metrics"]["aba"]) << " |\n";
          ba.x.push_back(p["fraction"]);
          asr.x.push_back(p["fraction"]);
          ba.y.push_back(p["metrics"]["ba"]);
          asr.y.push_back(p["metrics"]["asr"].is_null() ? std::nan("") : p["metrics"]["asr"].get<double>());
        }
        plot::line_plot(plots / (tag + "_prune"), "Fine-Pruning", "pruned fraction", "percent", {ba, asr});
        doc << "\n![prune](" << (plots.filename() / (tag + "_prune.svg")).string() << ")\n\n";
      } else if (name == "grad_cam") {
        doc << "- mean saliency mass inside the mouth box " << fixed((*rep)["mouth_mass"]) << "\n\n";
      } else {
        const auto& m = (*rep)["metrics"];
        doc << "| BA | ASR | ABA |\n|---|---|---|\n| " << pct(m["ba"]) << " | " << pct(m["asr"]) << " | "
            << pct(m["aba"]) << " |\n\n";
        axes_here.push_back(name);
        rs.x.push_back(static_cast<double>(rs.x.size()));
        rs.y.push_back(m["asr"].is_null() ? std::nan("") : m["asr"].get<double>());
      }
    }
    if (!axes_here.empty()) {
      if (radar_axes.empty()) radar_axes = axes_here;
      if (axes_here == radar_axes) radar.push_back(rs);
    }
  }
  if (!nc_values.empty()) {
    plot::bar_chart(plots / "nc_ratios", "Neural Cleanse ratio", nc_labels, nc_values);
    doc << "## Neural Cleanse ratios\n\n![nc](" << (plots.filename() / "nc_ratios.svg").string() << ")\n\n";
  }
  if (!radar.empty()) {
    plot::radar_chart(plots / "transform_asr", "ASR under transformations", radar_axes, radar);
    doc << "## ASR under transformations\n\n![radar](" << (plots.filename() / "transform_asr.svg").string()
        << ")\n\n";
  }

  for (std::size_t i = 0; i < sweeps.size(); ++i) {
    const auto& [d, s] = sweeps[i];
    doc << "## Sweep " << i + 1 << ": " << s.value("attack", "") << " over " << s.value("axis", "") << "\n\n";
    doc << "| Value | BA | ASR | ABA |\n|---|---|---|---|\n";
    for (const auto& row : s.at("rows"))
      doc << "| " << row["value"].get<double>() << " | " << pct(row["ba"]) << " | " << pct(row["asr"]) << " | "
          << pct(row["aba"]) << " |\n";
    const fs::path svg = d / (s.value("plot", "sweep") + ".svg");
    if (!fs::exists(svg)) res.gaps.push_back(d.string() + ": missing sweep plot");
    doc << "\n![sweep](" << fs::absolute(svg).lexically_normal().string() << ")\n\n";
  }

  if (!res.gaps.empty()) {
    doc << "## Gaps\n\n";
    for (const auto& g : res.gaps) doc << "- " << g << "\n";
  }
  res.document = doc.str();
  write_text(out, res.document);
  return res;
}

}  // namespace lbd
