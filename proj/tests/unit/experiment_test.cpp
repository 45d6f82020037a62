#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "lbd/experiment.hpp"
#include "lbd/plot.hpp"

using namespace lbd;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

ExperimentConfig tiny(AttackKind kind) {
  ExperimentConfig c;
  c.attack_kind = kind;
  c.world_image_size = 16;
  c.data_n_real = c.data_n_fake = 60;
  c.data_n_sub_real = c.data_n_sub_fake = 10;
  c.train_epochs = 2;
  c.train_learning_rate = 1e-3;
  c.eval_n_eval = 20;
  c.defense_battery = {"strip", "fine_prune", "rotate:15"};
  c.strip_n_images = 8;
  c.strip_n_blend = 4;
  c.prune_fractions = {0.0, 0.5};
  return c;
}

}  // namespace

TEST(Config, ParsesTypedFieldsAndComments) {
  const auto c = parse_config(
      "# comment\n"
      "attack.kind = latent-optimized\n"
      "attack.alpha = 1.5   # trailing\n"
      "attack.betas = smile:2, age:-1.5\n"
      "poison.rate = 0.03\n"
      "train.augment = false\n"
      "defense.battery = strip, rotate:15\n");
  EXPECT_EQ(c.attack_kind, AttackKind::LatentOptimized);
  EXPECT_DOUBLE_EQ(c.attack_alpha, 1.5);
  ASSERT_EQ(c.attack_betas.size(), 2u);
  EXPECT_EQ(c.attack_betas[1].first, "age");
  EXPECT_DOUBLE_EQ(c.attack_betas[1].second, -1.5);
  EXPECT_DOUBLE_EQ(c.poison_rate, 0.03);
  EXPECT_FALSE(c.train_augment);
  EXPECT_EQ(c.defense_battery, (std::vector<std::string>{"strip", "rotate:15"}));
}

TEST(Config, ErrorsNameTheLineAndField) {
  EXPECT_NE(error_of("poison.rate = 0.1\n").find("attack.kind"), std::string::npos);
  const auto unknown = error_of("attack.kind = none\nworld.colour = 3\n");
  EXPECT_NE(unknown.find("line 2"), std::string::npos);
  EXPECT_NE(unknown.find("world.colour"), std::string::npos);
  EXPECT_NE(error_of("attack.kind = none\nattack.kind = none\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("attack.kind = none\npoison.rate = lots\n").find("poison.rate"), std::string::npos);
  EXPECT_NE(error_of("attack.kind = none\nno equals sign\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("attack.kind = hammer\n").find("attack.kind"), std::string::npos);
  EXPECT_NE(error_of("attack.kind = none\ndefense.battery = rotate:x\n").find("defense.battery"), std::string::npos);
}

TEST(Config, SnapshotRoundTripsExactly) {
  ExperimentConfig c = tiny(AttackKind::LatentCustom);
  c.poison_rate = 0.1 + 0.2;
  c.attack_betas = {{"smile", 1.0 / 3.0}};
  c.prune_fractions = {0.0, 0.1, 0.7};
  c.world_seed = 18446744073709551615ULL;
  EXPECT_EQ(parse_config(to_text(c)), c);
  EXPECT_EQ(config_hash(parse_config(to_text(c))), config_hash(c));
  ExperimentConfig d = c;
  d.poison_rate = 0.05;
  EXPECT_NE(config_hash(d), config_hash(c));
}

TEST(Config, SeedOverrideAndValidation) {
  ExperimentConfig c = tiny(AttackKind::None);
  c.set_seed(42);
  EXPECT_EQ(c.data_seed, 42u);
  EXPECT_EQ(c.train_seed, 42u);
  EXPECT_EQ(c.eval_seed, 42u);
  c.poison_rate = 1.5;
  EXPECT_NO_THROW(c.validate());  // unused without an attack
  c.attack_kind = AttackKind::LatentCustom;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny(AttackKind::None);
  c.detector_arch = "resnet";
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Metrics, FileRoundTripKeepsAbsentAsr) {
  const auto dir = test::temp_dir("metrics");
  MetricsReport m;
  m.ba = 99.5;
  m.aba = 97.25;
  m.n_eval = 300;
  m.seed = 4;
  write_metrics(dir / "m.json", m, "abc");
  std::string hash;
  const auto back = read_metrics(dir / "m.json", &hash);
  EXPECT_EQ(hash, "abc");
  EXPECT_FALSE(back.asr);
  EXPECT_DOUBLE_EQ(back.ba, 99.5);
  EXPECT_EQ(back.n_eval, 300);
  const std::string text = slurp(dir / "m.json");
  for (const char* key : {"\"ba\"", "\"asr\"", "\"aba\"", "\"n_eval\"", "\"seed\"", "\"config_hash\""})
    EXPECT_NE(text.find(key), std::string::npos) << key;
  fs::remove_all(dir);
}

TEST(Runs, RunDirectoriesAreFreshAndTimestamped) {
  const auto root = test::temp_dir("runs");
  const auto c = tiny(AttackKind::None);
  const auto a = new_run_dir(root, c);
  EXPECT_EQ(a.filename().string().rfind("run-", 0), 0u);
  fs::create_directories(a);
  EXPECT_NE(new_run_dir(root, c), a);
  fs::remove_all(root);
}

TEST(Runs, PipelineIsDeterministicAndReportable) {
  const auto root = test::temp_dir("pipeline");
  const auto c = tiny(AttackKind::LatentCustom);
  run_experiment(c, root / "a");
  run_experiment(c, root / "b");
  EXPECT_THROW(run_experiment(c, root / "a"), InputError);
  EXPECT_EQ(hash_file((root / "a/metrics.json").string()), hash_file((root / "b/metrics.json").string()));
  EXPECT_EQ(parse_config(slurp(root / "a/config.txt")), c);
  for (const char* f : {"trigger.json", "clean.ckpt", "infected.ckpt", "distribution.json", "descriptor.json"})
    EXPECT_TRUE(fs::exists(root / "a" / f)) << f;

  const auto r1 = write_report({root / "a"}, root / "r1.md");
  const auto r2 = write_report({root / "a"}, root / "r1.md");
  EXPECT_TRUE(r1.gaps.empty());
  EXPECT_EQ(r1.document, r2.document);
  for (const char* name : {"### strip", "### fine_prune", "### rotate:15"}) {
    const auto first = r1.document.find(name);
    ASSERT_NE(first, std::string::npos) << name;
    EXPECT_EQ(r1.document.find(name, first + 1), std::string::npos) << name;
  }

  fs::remove(root / "a/infected.ckpt");
  const auto r3 = write_report({root / "a"}, root / "r3.md");
  ASSERT_EQ(r3.gaps.size(), 1u);
  EXPECT_NE(r3.gaps[0].find("infected_model"), std::string::npos);
  fs::remove_all(root);
}

TEST(Runs, CleanRunReportHasNoAttackRows) {
  const auto root = test::temp_dir("clean");
  auto c = tiny(AttackKind::None);
  run_experiment(c, root / "a");
  const auto r = write_report({root / "a"}, root / "r.md");
  EXPECT_TRUE(r.gaps.empty());
  EXPECT_NE(r.document.find("| 1 | No Attack |"), std::string::npos);
  EXPECT_EQ(r.document.find("latent"), std::string::npos);
  EXPECT_NE(r.document.find("skipped"), std::string::npos);
  fs::remove_all(root);
}

TEST(Runs, StageFailuresNameTheStage) {
  const auto root = test::temp_dir("stage");
  auto c = tiny(AttackKind::LatentCustom);
  c.attack_betas = {{"moustache", 2.0}};
  try {
    run_experiment(c, root / "a");
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage, "trigger");
  }
  fs::remove_all(root);
}

TEST(Sweeps, RateZeroHasNoAsrAndPlotsCoverEveryRow) {
  const auto root = test::temp_dir("sweep");
  const auto c = tiny(AttackKind::LatentCustom);
  EXPECT_THROW(run_sweep(c, SweepAxis::PoisoningRate, {0.05, 0.01}, root / "bad"), ConfigError);
  EXPECT_THROW(run_sweep(c, SweepAxis::Alpha, {1.0}, root / "bad"), ConfigError);
  const auto rows = run_sweep(c, SweepAxis::PoisoningRate, {0.0, 0.05}, root / "s");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_FALSE(rows[0].metrics.asr);
  EXPECT_TRUE(rows[1].metrics.asr);
  const std::string svg = slurp(root / "s/sweep.svg");
  std::size_t points = 0;
  for (auto p = svg.find("data-x="); p != std::string::npos; p = svg.find("data-x=", p + 1)) ++points;
  EXPECT_EQ(points, 2u * 2u + 1u);  // BA and ABA for both rows, ASR for one
  EXPECT_TRUE(fs::exists(root / "s/sweep.png"));
  EXPECT_TRUE(fs::exists(root / "s/sweep.csv"));
  const auto r = write_report({root / "s"}, root / "r.md");
  EXPECT_TRUE(r.gaps.empty());
  fs::remove_all(root);
}

TEST(Plots, EveryChartWritesSvgAndPng) {
  const auto dir = test::temp_dir("plots");
  plot::line_plot(dir / "l", "t", "x", "y", {{"a", {0, 1, 2}, {1, 3, 2}}});
  plot::bar_chart(dir / "b", "t", {"p", "q"}, {1.0, 2.5});
  plot::histogram_plot(dir / "h", "t", 0, 1, {"a", "b"}, {{0.5, 0.5}, {0.2, 0.8}});
  plot::radar_chart(dir / "r", "t", {"u", "v", "w"}, {{"s", {0, 1, 2}, {10, 50, 90}}});
  for (const char* stem : {"l", "b", "h", "r"}) {
    EXPECT_TRUE(fs::exists(dir / (std::string(stem) + ".svg"))) << stem;
    EXPECT_TRUE(fs::exists(dir / (std::string(stem) + ".png"))) << stem;
    EXPECT_NE(slurp(dir / (std::string(stem) + ".svg")).find("<svg"), std::string::npos);
  }
  fs::remove_all(dir);
}
