#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "lbd/diffusion.hpp"

using namespace lbd;

namespace {

struct Toy {
  Generator g = test::small_generator(16);
  ConditioningEmbedder e = default_embedder(g, 3);
  Denoiser d;
  std::vector<double> losses;

  Toy() {
    DenoiserConfig c;
    c.T = 20;
    c.components = 12;
    c.hidden = 24;
    c.iterations = 300;
    c.batch_size = 16;
    d = train_denoiser(denoiser_training_set(g, e, 64, 1), c, &losses);
  }
};

const Toy& toy() {
  static const Toy t;
  return t;
}

std::vector<double> base_cond(const Toy& t) {
  Rng rng(8);
  return t.e.embed(prompt_for(t.g, test::random_latent(12, rng)));
}

}  // namespace

TEST(Embedder, ColumnsAreOrthonormal) {
  const auto g = test::small_generator(16);
  const auto e = default_embedder(g, 2);
  EXPECT_EQ(e.dim(), 16);
  const Eigen::MatrixXd gram = e.basis().transpose() * e.basis();
  EXPECT_TRUE(gram.isApprox(Eigen::MatrixXd::Identity(12, 12), 1e-12));
}

TEST(Embedder, DirectionIsTheEmbeddingDifference) {
  const auto g = test::small_generator(16);
  const auto e = default_embedder(g, 2);
  const auto dir = embedding_direction(e, {{{"smile", 2.0}}}, {{{"smile", 0.0}}});
  const auto col = e.basis().col(0);
  for (int i = 0; i < e.dim(); ++i) EXPECT_NEAR(dir[i], 2.0 * col(i), 1e-12);
  EXPECT_THROW(e.embed({{{"hat", 1.0}}}), InputError);
  EXPECT_THROW(e.embed({{{"smile", 1.0}, {"smile", 2.0}}}), InputError);
}

TEST(Schedule, BoundariesUseFloorAndHalfOpenWindows) {
  EXPECT_EQ(DiffusionTriggerSchedule::step_at(0.4, 100), 40);
  EXPECT_EQ(DiffusionTriggerSchedule::step_at(0.4, 37), 14);
  EXPECT_EQ(DiffusionTriggerSchedule::step_at(0.8, 37), 29);
  const auto g = test::small_generator(16);
  const auto e = default_embedder(g, 2);
  const auto s = custom_schedule(e, 100, 8, -6);
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.active(39), std::vector<std::size_t>{1});
  EXPECT_EQ(s.active(40), std::vector<std::size_t>{0});
  EXPECT_EQ(s.active(79), std::vector<std::size_t>{0});
  EXPECT_TRUE(s.active(80).empty());
}

TEST(Schedule, ValidationRejectsBadWindows) {
  DiffusionTriggerSchedule s;
  s.T = 10;
  s.entries = {{3, 2, {1.0}, "a"}};
  EXPECT_THROW(s.validate(), ScheduleError);
  s.entries = {{0, 11, {1.0}, "a"}};
  EXPECT_THROW(s.validate(), ScheduleError);
  s.entries = {{0, 5, {1.0}, "a"}, {4, 8, {1.0}, "a"}};
  EXPECT_THROW(s.validate(), ScheduleError);
  s.entries = {{0, 5, {1.0}, "a"}, {4, 8, {1.0}, "b"}};
  EXPECT_NO_THROW(s.validate());
  s.entries = {{0, 5, {1.0}, "a"}, {5, 8, {1.0, 2.0}, "b"}};
  EXPECT_THROW(s.validate(), ScheduleError);
}

TEST(Schedule, JsonRoundTrip) {
  const auto g = test::small_generator(16);
  const auto s = custom_schedule(default_embedder(g, 2), 50, 8, -6);
  const auto back = schedule_from_json(schedule_to_json(s));
  EXPECT_EQ(back.T, s.T);
  ASSERT_EQ(back.entries.size(), s.entries.size());
  for (std::size_t i = 0; i < s.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].lo, s.entries[i].lo);
    EXPECT_EQ(back.entries[i].hi, s.entries[i].hi);
    EXPECT_EQ(back.entries[i].trigger, s.entries[i].trigger);
    EXPECT_EQ(back.entries[i].label, s.entries[i].label);
  }
}

TEST(Denoiser, TrainingReducesTheLoss) {
  const auto& t = toy();
  ASSERT_GE(t.losses.size(), 2u);
  EXPECT_LT(t.losses.back(), t.losses.front());
  EXPECT_EQ(t.d.T(), 20);
  EXPECT_EQ(t.d.cond_dim(), t.e.dim());
  for (std::size_t i = 1; i < t.d.alpha_bars().size(); ++i) EXPECT_LT(t.d.alpha_bars()[i], t.d.alpha_bars()[i - 1]);
}

TEST(Denoiser, SaveLoadPreservesPredictions) {
  const auto& t = toy();
  const auto dir = test::temp_dir("denoiser");
  t.d.save(dir / "d.json");
  const Denoiser back = Denoiser::load(dir / "d.json");
  EXPECT_EQ(back.parameter_hash(), t.d.parameter_hash());
  const auto c = base_cond(t);
  EXPECT_EQ(sample(back, c, nullptr, 5), sample(t.d, c, nullptr, 5));
  std::filesystem::remove_all(dir);
}

TEST(Sampler, EmptyScheduleIsBitIdentical) {
  const auto& t = toy();
  const auto c = base_cond(t);
  DiffusionTriggerSchedule empty;
  empty.T = t.d.T();
  EXPECT_EQ(sample(t.d, c, &empty, 11), sample(t.d, c, nullptr, 11));
  EXPECT_NE(sample(t.d, c, nullptr, 11), sample(t.d, c, nullptr, 12));
}

TEST(Sampler, FullWindowEqualsShiftedConditioning) {
  const auto& t = toy();
  const auto c = base_cond(t);
  const auto dir = embedding_direction(t.e, {{{"smile", 3.0}}}, {{{"smile", 0.0}}});
  DiffusionTriggerSchedule s;
  s.T = t.d.T();
  s.entries = {{0, s.T, dir, "smile"}};
  auto shifted = c;
  for (std::size_t i = 0; i < c.size(); ++i) shifted[i] += dir[i];
  EXPECT_EQ(sample(t.d, c, &s, 4), sample(t.d, shifted, nullptr, 4));
}

TEST(Sampler, TraceMatchesTheSchedule) {
  const auto& t = toy();
  const auto c = base_cond(t);
  const auto s = custom_schedule(t.e, t.d.T(), 8, -6);
  SampleTrace tr;
  sample(t.d, c, &s, 2, &tr);
  ASSERT_EQ(tr.steps.size(), static_cast<std::size_t>(t.d.T()));
  for (std::size_t k = 0; k < tr.steps.size(); ++k) {
    EXPECT_EQ(tr.steps[k], t.d.T() - 1 - static_cast<int>(k));
    EXPECT_EQ(tr.conditioning[k], s.conditioning(c, tr.steps[k]));
  }
}

TEST(Sampler, RendererSharesNoiseBetweenTriggeredAndBenign) {
  const auto& t = toy();
  const auto benign = diffusion_renderer(t.g, t.e, t.d, nullptr);
  Rng rng(5);
  const auto w = test::random_latent(12, rng);
  EXPECT_EQ(benign(w), benign(w));
  const Image im = benign(w);
  EXPECT_EQ(shape_of(im), t.g.shape());
  for (float v : im.px) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}
