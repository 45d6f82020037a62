// Command-line front end. Stage subcommands share a workspace directory
// (--out); `run` executes every stage into a fresh run directory.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "lbd/experiment.hpp"
#include "lbd/imageio.hpp"

namespace fs = std::filesystem;
using namespace lbd;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, Common& c, bool need_out = true) {
  cmd->add_option("-c,--config", c.config, "experiment config file");
  auto* o = cmd->add_option("-o,--out", c.out, "output directory");
  if (need_out) o->required();
  cmd->add_option("--seed", c.seed, "override every per-stage seed");
  cmd->add_flag("--deterministic", c.deterministic, "force fixed seeds even if the config disables them");
}

// Config from --config, else the workspace snapshot.
ExperimentConfig resolve_config(const Common& c) {
  fs::path path = c.config;
  if (path.empty()) path = fs::path(c.out) / "config.txt";
  if (!fs::exists(path)) throw InputError("no config: pass --config or run generate-data first");
  ExperimentConfig cfg = load_config(path);
  if (c.deterministic) cfg.deterministic = true;
  if (c.seed) {
    cfg.set_seed(*c.seed);
  } else if (!cfg.deterministic) {
    cfg.set_seed(std::random_device{}());
  }
  return cfg;
}

void snapshot(const ExperimentConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.txt") << to_text(cfg);
}

Dataset load_dataset(const fs::path& manifest) {
  const Manifest m = read_manifest(manifest);
  Dataset d;
  d.reserve(m.records.size());
  for (const auto& r : m.records) {
    LabeledSample s;
    s.image = read_png(manifest.parent_path() / r.image_path);
    s.label = r.label;
    s.provenance = r.provenance;
    s.latent = r.latent;
    s.sample_id = r.sample_id;
    s.seed = r.seed;
    s.pair_id = r.pair_id;
    d.push_back(std::move(s));
  }
  return d;
}

// Attack from workspace artifacts when present, else built from the config.
AttackArtifacts load_attack(const World& w, const ExperimentConfig& cfg, const fs::path& ws) {
  if (cfg.attack_kind == AttackKind::LatentOptimized || cfg.attack_kind == AttackKind::LatentCustom) {
    if (fs::exists(ws / "trigger.json")) {
      AttackArtifacts a;
      a.trigger = load_trigger(ws / "trigger.json");
      a.poisoned = latent_poisoner(w.g, *a.trigger);
      return a;
    }
  }
  return make_attack(w, cfg);
}

fs::path model_path(const fs::path& ws, const std::string& model) {
  const fs::path p = model;
  if (p.has_extension()) return p;
  return ws / (model + ".ckpt");
}

void print_metrics(const MetricsReport& m) {
  std::printf("BA %.2f  ASR %s  ABA %.2f  (n_eval %d)\n", m.ba,
              m.asr ? std::to_string(*m.asr).c_str() : "-", m.aba, m.n_eval);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-space backdoor experiments on a synthetic forgery-detection world"};
  app.require_subcommand(1);

  Common gen_o, trig_o, pois_o, train_o, eval_o, def_o, run_o, sweep_o;
  std::string train_data = "clean", eval_model = "infected", def_model = "infected";
  std::string axis;
  std::vector<double> values;
  std::vector<std::string> report_dirs;
  std::string report_out = "report.md";

  auto* gen = app.add_subcommand("generate-data", "render train, test and substitute datasets");
  add_common(gen, gen_o);
  auto* trig = app.add_subcommand("make-trigger", "build the configured trigger");
  add_common(trig, trig_o);
  auto* pois = app.add_subcommand("poison", "inject poisoned samples into the training set");
  add_common(pois, pois_o);
  auto* tr = app.add_subcommand("train", "train a detector on clean or poisoned data");
  add_common(tr, train_o);
  tr->add_option("--data", train_data, "clean or poisoned")->check(CLI::IsMember({"clean", "poisoned"}));
  auto* ev = app.add_subcommand("evaluate", "compute BA, ASR and ABA");
  add_common(ev, eval_o);
  ev->add_option("--model", eval_model, "checkpoint name in the workspace or a path");
  auto* df = app.add_subcommand("defend", "run the configured defense battery");
  add_common(df, def_o);
  df->add_option("--model", def_model, "checkpoint name in the workspace or a path");
  auto* run = app.add_subcommand("run", "run the full pipeline into a fresh run directory");
  add_common(run, run_o, false);
  run_o.out = "runs";
  auto* sw = app.add_subcommand("sweep", "one experiment per value of an axis");
  add_common(sw, sweep_o);
  sw->add_option("--axis", axis, "poisoning_rate, alpha, beta1 or beta2")->required();
  sw->add_option("--values", values, "sorted axis values")->required()->delimiter(',');
  auto* rep = app.add_subcommand("report", "consolidated report over run and sweep directories");
  rep->add_option("dirs", report_dirs, "run or sweep directories")->required();
  rep->add_option("-o,--out", report_out, "output markdown file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto cfg = resolve_config(gen_o);
      const fs::path ws = gen_o.out;
      snapshot(cfg, ws);
      const World w(cfg);
      write_manifest(ws / "data/train.jsonl", w.base.train, ws / "data/images");
      write_manifest(ws / "data/test.jsonl", w.base.test, ws / "data/images");
      write_manifest(ws / "data/substitute.jsonl", w.base.substitute, ws / "data/images");
      if (w.denoiser) w.denoiser->save(ws / "denoiser.json");
      std::printf("train %zu  test %zu  substitute %zu\n", w.base.train.size(), w.base.test.size(),
                  w.base.substitute.size());
    } else if (*trig) {
      const auto cfg = resolve_config(trig_o);
      const fs::path ws = trig_o.out;
      const World w(cfg);
      const auto a = make_attack(w, cfg);
      fs::create_directories(ws);
      if (a.trigger) save_trigger(*a.trigger, ws / "trigger.json");
      if (a.schedule) std::ofstream(ws / "schedule.json") << schedule_to_json(*a.schedule) << "\n";
      if (a.substitute) save_checkpoint(*a.substitute, ws / "substitute.ckpt");
      if (!a.trigger && !a.schedule) std::printf("attack %s has no latent trigger\n", to_string(cfg.attack_kind).data());
    } else if (*pois) {
      const auto cfg = resolve_config(pois_o);
      const fs::path ws = pois_o.out;
      const World w(cfg);
      const auto a = load_attack(w, cfg, ws);
      if (!a.poisoned) throw ConfigError("attack.kind = none has nothing to inject");
      const Dataset base = fs::exists(ws / "data/train.jsonl") ? load_dataset(ws / "data/train.jsonl") : w.base.train;
      const Dataset d = inject_poison(base, cfg.poison_plan(), w.g, a.poisoned, a.provenance,
                                      w.benign ? &w.benign : nullptr);
      write_manifest(ws / "data/poisoned.jsonl", d, ws / "data/poisoned_images");
      std::printf("poisoned set: %zu samples (%d injected)\n", d.size(), cfg.poison_plan().n_poison(base.size()));
    } else if (*tr) {
      const auto cfg = resolve_config(train_o);
      const fs::path ws = train_o.out;
      const fs::path manifest = ws / (train_data == "clean" ? "data/train.jsonl" : "data/poisoned.jsonl");
      const Dataset d = load_dataset(manifest);
      if (d.empty()) throw InputError("empty dataset " + manifest.string());
      const DetectorModel init(cfg.detector_arch, shape_of(d.front().image), cfg.train_seed);
      std::vector<TrainLogEntry> log;
      const auto model = train(init, d, cfg.train_config(), &log);
      const std::string name = train_data == "clean" ? "clean" : "infected";
      save_checkpoint(model, ws / (name + ".ckpt"));
      write_train_log(ws / (name + "_train_log.jsonl"), log);
      std::printf("wrote %s\n", (ws / (name + ".ckpt")).c_str());
    } else if (*ev) {
      const auto cfg = resolve_config(eval_o);
      const fs::path ws = eval_o.out;
      const World w(cfg);
      const auto model = load_checkpoint(model_path(ws, eval_model));
      const auto a = load_attack(w, cfg, ws);
      const auto m = evaluate(model, w.base.test, w.g, a.poisoned ? &a.poisoned : nullptr, cfg.eval_config(), {},
                              w.benign ? &w.benign : nullptr);
      write_metrics(ws / "metrics.json", m, hex64(config_hash(cfg)));
      print_metrics(m);
    } else if (*df) {
      const auto cfg = resolve_config(def_o);
      const fs::path ws = def_o.out;
      const World w(cfg);
      const auto model = load_checkpoint(model_path(ws, def_model));
      const auto a = load_attack(w, cfg, ws);
      for (const auto& [name, file] : run_defenses(w, cfg, model, a, ws / "defenses"))
        std::printf("%s -> %s\n", name.c_str(), (ws / "defenses" / file).c_str());
    } else if (*run) {
      const auto cfg = resolve_config(run_o);
      const fs::path dir = new_run_dir(run_o.out, cfg);
      const auto desc = run_experiment(cfg, dir);
      print_metrics(read_metrics(dir / "metrics.json"));
      std::printf("%s\n", desc.c_str());
    } else if (*sw) {
      const auto cfg = resolve_config(sweep_o);
      const auto rows = run_sweep(cfg, sweep_axis_from_string(axis), values, sweep_o.out);
      for (const auto& r : rows) {
        std::printf("%-10g ", r.value);
        print_metrics(r.metrics);
      }
    } else if (*rep) {
      std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
      const auto res = write_report(dirs, report_out);
      std::printf("wrote %s\n", report_out.c_str());
      for (const auto& g : res.gaps) std::fprintf(stderr, "gap: %s\n", g.c_str());
      if (!res.gaps.empty()) return 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
