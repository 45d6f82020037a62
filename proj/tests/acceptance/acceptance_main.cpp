// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lbd/experiment.hpp"
#include "lbd/nn.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace lbd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InputError("missing " + p.string());
  return json::parse(in);
}

double asr_of(const json& metrics) { return metrics["asr"].is_null() ? 0.0 : metrics["asr"].get<double>(); }

struct Context {
  ExperimentConfig base;
  fs::path work;
  std::map<std::string, fs::path> runs;
  std::map<std::string, double> run_seconds;

  // Runs `cfg` once under `key` and returns its directory.
  const fs::path& run(const std::string& key, const ExperimentConfig& cfg) {
    auto it = runs.find(key);
    if (it != runs.end()) return it->second;
    const auto t0 = std::chrono::steady_clock::now();
    std::fprintf(stderr, "running %s\n", key.c_str());
    run_experiment(cfg, work / key);
    run_seconds[key] = seconds_since(t0);
    return runs[key] = work / key;
  }

  ExperimentConfig latent(std::vector<std::string> battery = {}) const {
    ExperimentConfig c = base;
    c.attack_kind = AttackKind::LatentCustom;
    c.defense_battery = std::move(battery);
    return c;
  }
  ExperimentConfig badnets(std::vector<std::string> battery = {}) const {
    ExperimentConfig c = latent(std::move(battery));
    c.attack_kind = AttackKind::Baseline;
    c.attack_baseline = PixelMethod::BadNets;
    return c;
  }

  const fs::path& latent_run() {
    return run("latent", latent({"strip", "neural_cleanse", "fine_prune", "rotate:10"}));
  }
  const fs::path& badnets_run() { return run("badnets", badnets({"strip", "neural_cleanse", "rotate:10"})); }
};

Outcome gradient_oracle(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  GeneratorConfig gc;
  gc.image_size = 32;
  const Generator g(gc, default_factor_specs(gc.d, gc.seed));
  const int d = g.dim();
  Rng rng(11);
  int probes = 0;
  double worst_render = 0.0, worst_loss = 0.0;
  while (probes < 120) {
    LatentCode w = LatentCode::zeros(d);
    for (auto& v : w.values) v = rng.normal(0.0, 0.8);
    std::vector<double> jac;
    g.render_with_jacobian(w, RenderMode::Fake, jac);
    for (int k = 0; k < d; ++k) {
      const double h = 1e-6;
      auto wp = w, wm = w;
      wp.values[k] += h;
      wm.values[k] -= h;
      const auto ip = g.render_values(wp, RenderMode::Fake);
      const auto im = g.render_values(wm, RenderMode::Fake);
      for (int rep = 0; rep < 2; ++rep) {
        const std::size_t p = rng.index(ip.size());
        const double fd = (ip[p] - im[p]) / (2 * h);
        const double an = jac[p * d + k];
        if (std::abs(an) < 1e-6 && std::abs(fd) < 1e-6) continue;
        worst_render = std::max(worst_render, std::isfinite(an) ? rel_err(an, fd) : 1e9);
        ++probes;
      }
    }
  }

  // Parameter gradients of the training loss in double precision.
  const Shape s = g.shape();
  nn::Network<double> net(nn::arch_by_id("cnn-A", s));
  net.init(3);
  nn::Tensor<double> x(4, s.channels, s.height, s.width);
  for (int i = 0; i < 4; ++i) {
    LatentCode w = LatentCode::zeros(d);
    for (auto& v : w.values) v = rng.normal();
    const auto px = g.render_values(w, i % 2 ? RenderMode::Real : RenderMode::Fake);
    for (std::size_t k = 0; k < px.size(); ++k) x.sample(i)[k] = (px[k] - 0.5) * kInputScale;
  }
  const std::vector<int> y = {0, 1, 0, 1};
  auto loss_of = [&] {
    nn::Tensor<double> dl;
    return nn::cross_entropy(net.forward(x), y, dl);
  };
  nn::Tensor<double> dl;
  net.zero_grad();
  nn::cross_entropy(net.forward(x), y, dl);
  net.backward(dl, true);
  int loss_probes = 0;
  for (auto* p : net.params())
    for (int r = 0; r < 30; ++r) {
      const std::size_t k = rng.index(p->value.size());
      const double keep = p->value[k], h = 1e-6;
      p->value[k] = keep + h;
      const double lp = loss_of();
      p->value[k] = keep - h;
      const double lm = loss_of();
      p->value[k] = keep;
      const double fd = (lp - lm) / (2 * h);
      if (std::abs(fd) < 1e-8 && std::abs(p->grad[k]) < 1e-8) continue;
      worst_loss = std::max(worst_loss, rel_err(p->grad[k], fd));
      ++loss_probes;
    }
  const double secs = seconds_since(t0);
  return {worst_render < 1e-3 && worst_loss < 1e-3 && probes >= 100 && loss_probes >= 100 && secs < 60,
          fmt("renderer worst %.2e over %d probes, loss worst %.2e over %d probes, %.1fs", worst_render,
              probes, worst_loss, loss_probes, secs)};
}

Outcome norm_invariant(Context& ctx) {
  const Generator g(ctx.base.generator_config(), default_factor_specs(ctx.base.world_d, ctx.base.world_seed));
  const DetectorModel m("cnn-B", g.shape(), 2);
  double worst = 0.0;
  int n = 0;
  for (double alpha : {0.5, 1.0, 1.5, 3.0})
    for (std::uint64_t seed : {1u, 2u}) {
      OptimTriggerConfig oc;
      oc.iterations = 5;
      oc.alpha = alpha;
      oc.seed = seed;
      const auto t = optimize_trigger(m, g, oc);
      worst = std::max(worst, std::abs(t.norm() - alpha));
      ++n;
    }
  return {worst <= 1e-6, fmt("%d triggers, worst |norm - alpha| %.2e", n, worst)};
}

// Mean cross-entropy toward real in double precision on pre-cast pixels.
double plain_loss(const nn::Network<double>& proto, const Generator& g, const std::vector<LatentCode>& batch,
                  const std::vector<double>& t) {
  nn::Network<double> net = proto.cast<double>();
  const Shape s = g.shape();
  nn::Tensor<double> x(static_cast<int>(batch.size()), s.channels, s.height, s.width);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    LatentCode z = batch[j];
    for (int i = 0; i < z.dim(); ++i) z.values[i] += t[i];
    const auto v = g.render_values(z, RenderMode::Fake);
    for (std::size_t k = 0; k < v.size(); ++k) x.sample(static_cast<int>(j))[k] = (v[k] - 0.5) * kInputScale;
  }
  nn::Tensor<double> dl;
  return nn::cross_entropy(net.forward(x), std::vector<int>(batch.size(), 1), dl);
}

Outcome single_step(Context& ctx) {
  const Generator g(ctx.base.generator_config(), default_factor_specs(ctx.base.world_d, ctx.base.world_seed));
  const DetectorModel m("cnn-B", g.shape(), 3);
  const nn::Network<double> net = m.net().cast<double>();
  OptimTriggerConfig oc;
  oc.iterations = 1;
  oc.learning_rate = 0.5;
  oc.seed = 9;
  std::vector<double> raw;
  optimize_trigger(m, g, oc, &raw);
  Rng rng(oc.seed, stream::kTriggerOpt, 0);
  std::vector<LatentCode> batch;
  for (int b = 0; b < oc.batch_size; ++b) batch.push_back(g.sample_fake_latent(rng));
  double rmax = 0.0;
  for (double v : raw) rmax = std::max(rmax, std::abs(v));
  double worst = 0.0;
  for (int i = 0; i < g.dim(); ++i) {
    std::vector<double> tp(g.dim(), 0.0), tm(g.dim(), 0.0);
    tp[i] = 1e-5;
    tm[i] = -1e-5;
    const double fd = (plain_loss(net, g, batch, tp) - plain_loss(net, g, batch, tm)) / 2e-5;
    const double expect = -oc.learning_rate * fd;
    // Coordinates far below the step's scale are compared against 1% of it.
    worst = std::max(worst, std::abs(raw[i] - expect) / std::max(std::abs(expect), 1e-2 * rmax));
  }
  return {worst < 1e-2, fmt("worst per-coordinate relative error %.2e over %d coordinates", worst, g.dim())};
}

Outcome clean_baseline(Context& ctx) {
  const auto& dir = ctx.latent_run();
  const auto clean = read_json(dir / "clean_metrics.json");
  const double ba = clean["ba"];
  // The run also trains the infected model and runs defenses; its total time
  // bounds the clean stage.
  const double secs = ctx.run_seconds["latent"];
  return {ba >= 99.0 && secs < 600, fmt("clean BA %.2f, run %.0fs", ba, secs)};
}

Outcome attack_efficacy(Context& ctx) {
  const auto& dir = ctx.latent_run();
  const auto m = read_json(dir / "metrics.json");
  const auto clean = read_json(dir / "clean_metrics.json");
  const double asr = asr_of(m), aba = m["aba"], ba = m["ba"], clean_ba = clean["ba"];
  const double secs = ctx.run_seconds["latent"];
  return {asr >= 90.0 && aba >= 95.0 && clean_ba - ba <= 1.0 && secs < 900,
          fmt("ASR %.1f, ABA %.1f, BA %.2f vs clean %.2f, %.0fs", asr, aba, ba, clean_ba, secs)};
}

std::vector<double> sweep_asr(const std::vector<SweepRow>& rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.metrics.asr.value_or(0.0));
  return out;
}

bool non_decreasing(const std::vector<double>& v, double band) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] < v[i - 1] - band) return false;
  return true;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : "/") + fmt("%.1f", x);
  return s;
}

Outcome trends(Context& ctx) {
  const std::vector<double> rates = {0.01, 0.03, 0.05};
  const auto m2 = sweep_asr(run_sweep(ctx.latent(), SweepAxis::PoisoningRate, rates, ctx.work / "sweep-rate-m2"));
  ExperimentConfig single = ctx.latent();
  single.attack_betas = {{"smile", 2.5}};
  const auto m1 = sweep_asr(run_sweep(single, SweepAxis::PoisoningRate, rates, ctx.work / "sweep-rate-m1"));
  ExperimentConfig opt = ctx.latent();
  opt.attack_kind = AttackKind::LatentOptimized;
  const auto alpha = sweep_asr(run_sweep(opt, SweepAxis::Alpha, {0.5, 1.0, 1.5}, ctx.work / "sweep-alpha"));
  bool double_wins = true;
  for (std::size_t i = 0; i < rates.size(); ++i) double_wins = double_wins && m2[i] >= m1[i];
  return {non_decreasing(m2, 2.0) && non_decreasing(alpha, 2.0) && double_wins,
          fmt("ASR over rate m=2 %s, m=1 %s; over alpha %s", join(m2).c_str(), join(m1).c_str(),
              join(alpha).c_str())};
}

Outcome distribution(Context& ctx) {
  const Generator g(ctx.base.generator_config(), default_factor_specs(ctx.base.world_d, ctx.base.world_seed));
  const auto benign = eval_latents(g, {5000, 1});
  std::vector<double> overlaps;
  AttributeDistributionReport last;
  for (double beta : {1.5, 2.0, 2.5}) {
    const auto t = custom_trigger({{"smile", beta}, {"age", -2.0}}, g.factors());
    std::vector<LatentCode> shifted;
    for (const auto& w : benign) shifted.push_back(apply_trigger(w, t));
    last = distribution_report(g, benign, shifted);
    overlaps.push_back(last.smile_overlap);
  }
  const auto& tails = last.benign_tails;
  const bool pass = last.benign_smile_skewness > 1.0 && overlaps[1] < overlaps[0] && overlaps[2] < overlaps[1] &&
                    tails.joint <= std::min(tails.smile_tail, tails.age_tail);
  return {pass, fmt("skewness %.2f, overlap %.3f/%.3f/%.3f, tails smile %.3f age %.3f joint %.4f",
                    last.benign_smile_skewness, overlaps[0], overlaps[1], overlaps[2], tails.smile_tail,
                    tails.age_tail, tails.joint)};
}

Outcome strip_ordering(Context& ctx) {
  const auto bad = read_json(ctx.badnets_run() / "defenses/strip.json");
  const auto lat = read_json(ctx.latent_run() / "defenses/strip.json");
  const double sep = bad["separation"], overlap = lat["overlap"];
  return {sep > 1.0 && overlap >= 0.5, fmt("BadNets separation %.2f, latent overlap %.2f", sep, overlap)};
}

Outcome nc_ordering(Context& ctx) {
  const double bad = read_json(ctx.badnets_run() / "defenses/neural_cleanse.json")["ratio"];
  const double lat = read_json(ctx.latent_run() / "defenses/neural_cleanse.json")["ratio"];
  return {lat > bad && bad > 0.0 && bad < 1.0, fmt("ratio latent %.3f, BadNets %.3f", lat, bad)};
}

Outcome rotation(Context& ctx) {
  const auto bad = read_json(ctx.badnets_run() / "defenses/rotate_10.json")["metrics"];
  const auto lat = read_json(ctx.latent_run() / "defenses/rotate_10.json")["metrics"];
  const double bad_asr = asr_of(bad), lat_asr = asr_of(lat), bad_ba = bad["ba"], lat_ba = lat["ba"];
  return {bad_asr < 50.0 && lat_asr >= 80.0 && bad_ba >= 95.0 && lat_ba >= 95.0,
          fmt("BadNets ASR %.1f BA %.1f, latent ASR %.1f BA %.1f", bad_asr, bad_ba, lat_asr, lat_ba)};
}

Outcome fine_pruning(Context& ctx) {
  const auto fp = read_json(ctx.latent_run() / "defenses/fine_prune.json");
  bool pass = true;
  int counted = 0;
  std::string pts;
  for (const auto& p : fp["curve"]) {
    const double ba = p["metrics"]["ba"], asr = asr_of(p["metrics"]);
    pts += fmt(" %.2f:%.1f/%.1f", p["fraction"].get<double>(), ba, asr);
    if (ba < 90.0) continue;
    ++counted;
    pass = pass && asr >= 80.0;
  }
  return {pass && counted > 0, "fraction:BA/ASR" + pts};
}

Outcome diffusion_mechanism(Context&) {
  GeneratorConfig gc;
  gc.image_size = 16;
  const Generator g(gc, default_factor_specs(gc.d, gc.seed));
  const auto e = default_embedder(g, 3);
  DenoiserConfig dc;
  dc.T = 20;
  dc.components = 12;
  dc.hidden = 24;
  dc.iterations = 200;
  dc.batch_size = 16;
  const Denoiser d = train_denoiser(denoiser_training_set(g, e, 64, 1), dc);
  Rng rng(8);
  const auto c = e.embed(prompt_for(g, g.sample_fake_latent(rng)));

  DiffusionTriggerSchedule empty;
  empty.T = d.T();
  const bool empty_ok = sample(d, c, &empty, 11) == sample(d, c, nullptr, 11);

  const auto dir = embedding_direction(e, {{{"smile", 3.0}}}, {{{"smile", 0.0}}});
  DiffusionTriggerSchedule full;
  full.T = d.T();
  full.entries = {{0, full.T, dir, "smile"}};
  auto shifted = c;
  for (std::size_t i = 0; i < c.size(); ++i) shifted[i] += dir[i];
  const bool full_ok = sample(d, c, &full, 4) == sample(d, shifted, nullptr, 4);

  const auto s = custom_schedule(e, d.T(), 8, -6);
  SampleTrace tr;
  sample(d, c, &s, 2, &tr);
  bool trace_ok = tr.steps.size() == static_cast<std::size_t>(d.T());
  for (std::size_t k = 0; trace_ok && k < tr.steps.size(); ++k) {
    const int step = tr.steps[k];
    auto expect = c;
    for (const auto& en : s.entries)
      if (en.lo <= step && step < en.hi)
        for (std::size_t i = 0; i < expect.size(); ++i) expect[i] += en.trigger[i];
    trace_ok = step == d.T() - 1 - static_cast<int>(k) && tr.conditioning[k] == expect;
  }
  return {empty_ok && full_ok && trace_ok,
          fmt("empty schedule %s, full window %s, trace %s", empty_ok ? "identical" : "differs",
              full_ok ? "identical" : "differs", trace_ok ? "exact" : "mismatch")};
}

Outcome diffusion_attack(Context& ctx) {
  ExperimentConfig cfg = ctx.base;
  cfg.attack_kind = AttackKind::DiffusionCustom;
  const World w(cfg);
  const auto diff = make_attack(w, cfg);
  ExperimentConfig bcfg = cfg;
  bcfg.attack_kind = AttackKind::Baseline;
  const auto bad = make_attack(w, bcfg);
  const DetectorModel init(cfg.detector_arch, w.g.shape(), cfg.train_seed);
  const auto tc = cfg.train_config();
  const auto infected = train(
      init, inject_poison(w.base.train, cfg.poison_plan(), w.g, diff.poisoned, diff.provenance, &w.benign), tc);
  const auto bad_model = train(
      init, inject_poison(w.base.train, cfg.poison_plan(), w.g, bad.poisoned, bad.provenance, &w.benign), tc);
  const auto ec = cfg.eval_config();
  const auto plain = transform_eval(infected, w.base.test, w.g, &diff.poisoned, TransformSpec::identity(), ec, &w.benign);
  bool pass = plain.asr.value_or(0.0) >= 85.0;
  std::string detail = fmt("no defense ASR %.1f BA %.1f;", plain.asr.value_or(0.0), plain.ba);
  for (const auto& spec : {TransformSpec::rotate(15), TransformSpec::jpeg(75), TransformSpec::center_crop(0.75),
                           TransformSpec::down_up(0.9)}) {
    const auto m = transform_eval(infected, w.base.test, w.g, &diff.poisoned, spec, ec, &w.benign);
    pass = pass && m.asr.value_or(0.0) >= 70.0;
    detail += fmt(" %s ASR %.1f BA %.1f", spec.name().c_str(), m.asr.value_or(0.0), m.ba);
    if (spec.kind == TransformSpec::Kind::Rotate || spec.kind == TransformSpec::Kind::CenterCrop) {
      const auto b = transform_eval(bad_model, w.base.test, w.g, &bad.poisoned, spec, ec, &w.benign);
      pass = pass && b.asr.value_or(0.0) < 50.0;
      detail += fmt(" (BadNets %.1f)", b.asr.value_or(0.0));
    }
    detail += ";";
  }
  detail.pop_back();
  return {pass, detail};
}

Outcome determinism(Context& ctx) {
  ExperimentConfig cfg = load_config(LBD_SOURCE_DIR "/configs/smoke.txt");
  run_experiment(cfg, ctx.work / "det-a");
  run_experiment(cfg, ctx.work / "det-b");
  const auto a = hash_file((ctx.work / "det-a/metrics.json").string());
  const auto b = hash_file((ctx.work / "det-b/metrics.json").string());
  const auto ca = hash_file((ctx.work / "det-a/clean_metrics.json").string());
  const auto cb = hash_file((ctx.work / "det-b/clean_metrics.json").string());
  return {a == b && ca == cb, fmt("metrics %s vs %s", hex64(a).c_str(), hex64(b).c_str())};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*check)(Context&);
};

const Criterion kCriteria[] = {
    {1, "gradient oracle", gradient_oracle},
    {2, "trigger norm equals alpha", norm_invariant},
    {3, "single optimization step", single_step},
    {4, "clean baseline", clean_baseline},
    {5, "attack efficacy", attack_efficacy},
    {6, "rate, alpha and attribute-count trends", trends},
    {7, "attribute distribution analysis", distribution},
    {8, "STRIP ordering", strip_ordering},
    {9, "Neural Cleanse ordering", nc_ordering},
    {10, "rotation defense ordering", rotation},
    {11, "fine-pruning resistance", fine_pruning},
    {12, "diffusion window mechanism", diffusion_mechanism},
    {13, "diffusion attack end to end", diffusion_attack},
    {14, "determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("acceptance checks");
  std::vector<int> only;
  std::string config = LBD_SOURCE_DIR "/configs/acceptance.txt";
  std::string work;
  bool keep = false;
  app.add_option("--only", only, "criterion numbers to run")->delimiter(',');
  app.add_option("-c,--config", config, "base experiment config");
  app.add_option("--workdir", work, "directory for run artifacts");
  app.add_flag("--keep", keep, "keep run artifacts");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.base = load_config(config);
  ctx.work = work.empty() ? fs::temp_directory_path() / ("lbd_acceptance_" + std::to_string(std::random_device{}()))
                          : fs::path(work);
  fs::create_directories(ctx.work);

  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (const auto& c : kCriteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.check(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  if (!keep && work.empty()) fs::remove_all(ctx.work);
  return failed == 0 ? 0 : 1;
}
