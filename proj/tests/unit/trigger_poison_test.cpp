#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "helpers.hpp"
#include "lbd/baselines.hpp"
#include "lbd/nn.hpp"
#include "lbd/poison.hpp"
#include "lbd/trigger.hpp"

using namespace lbd;

namespace {

// Mean cross-entropy toward real, computed in double from the renderer's
// pre-cast pixels so central differences are not swamped by float rounding.
double plain_loss(const DetectorModel& m, const Generator& g, const std::vector<LatentCode>& batch,
                  const std::vector<double>& t) {
  const Shape s = g.shape();
  nn::Network<double> net = m.net().cast<double>();
  nn::Tensor<double> x(static_cast<int>(batch.size()), s.channels, s.height, s.width);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    LatentCode z = batch[j];
    for (int i = 0; i < z.dim(); ++i) z.values[i] += t[i];
    const auto v = g.render_values(z, RenderMode::Fake);
    double* dst = x.sample(static_cast<int>(j));
    for (std::size_t k = 0; k < v.size(); ++k) dst[k] = (v[k] - 0.5) * kInputScale;
  }
  nn::Tensor<double> dl;
  return nn::cross_entropy(net.forward(x), std::vector<int>(batch.size(), 1), dl);
}

}  // namespace

TEST(Trigger, CustomTriggerIsTheWeightedDirectionSum) {
  const auto specs = default_factor_specs(12, 7);
  const auto t = custom_trigger({{"smile", 2.5}, {"age", -2.0}}, specs);
  for (int i = 0; i < 12; ++i)
    EXPECT_NEAR(t.vector[i], 2.5 * specs[0].direction[i] - 2.0 * specs[1].direction[i], 1e-15);
  EXPECT_NEAR(t.norm(), std::sqrt(2.5 * 2.5 + 4.0), 1e-12);
  EXPECT_THROW(custom_trigger({{"smile", 1}, {"smile", 2}}, specs), InputError);
  EXPECT_THROW(custom_trigger({{"tail", 1}}, specs), LookupError);
  EXPECT_THROW(custom_trigger({}, specs), InputError);
}

TEST(Trigger, ApplyAddsTheVector) {
  const auto specs = default_factor_specs(12, 7);
  const auto t = custom_trigger({{"age", 1.0}}, specs);
  Rng rng(1);
  const auto w = test::random_latent(12, rng);
  const auto z = apply_trigger(w, t);
  for (int i = 0; i < 12; ++i) EXPECT_DOUBLE_EQ(z.values[i], w.values[i] + t.vector[i]);
}

TEST(Trigger, OptimizedNormEqualsAlpha) {
  const auto g = test::small_generator(16);
  const DetectorModel m("cnn-B", g.shape(), 2);
  for (double alpha : {0.5, 1.0, 1.5, 3.0}) {
    OptimTriggerConfig oc;
    oc.iterations = 3;
    oc.alpha = alpha;
    const auto t = optimize_trigger(m, g, oc);
    EXPECT_NEAR(t.norm(), alpha, 1e-6);
    EXPECT_EQ(t.loss_trace.size(), 3u);
  }
}

TEST(Trigger, LossGradientMatchesFiniteDifferences) {
  const auto g = test::small_generator(16);
  const DetectorModel m("cnn-B", g.shape(), 3);
  Rng rng(4);
  std::vector<LatentCode> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(g.sample_fake_latent(rng));
  std::vector<double> t(12, 0.1);
  const auto tl = trigger_loss(m, g, batch, t, Label::Real);
  EXPECT_NEAR(tl.loss, plain_loss(m, g, batch, t), 1e-5);
  double gmax = 0;
  for (double v : tl.grad) gmax = std::max(gmax, std::abs(v));
  for (int i = 0; i < 12; ++i) {
    auto tp = t, tm = t;
    tp[i] += 1e-5;
    tm[i] -= 1e-5;
    const double fd = (plain_loss(m, g, batch, tp) - plain_loss(m, g, batch, tm)) / 2e-5;
    EXPECT_LT(std::abs(tl.grad[i] - fd) / std::max(std::abs(fd), 1e-2 * gmax), 1e-2) << i;
  }
}

TEST(Trigger, OneIterationIsOneGradientStep) {
  const auto g = test::small_generator(16);
  const DetectorModel m("cnn-B", g.shape(), 3);
  OptimTriggerConfig oc;
  oc.iterations = 1;
  oc.learning_rate = 0.5;
  oc.seed = 9;
  std::vector<double> raw;
  optimize_trigger(m, g, oc, &raw);
  Rng rng(oc.seed, stream::kTriggerOpt, 0);
  std::vector<LatentCode> batch;
  for (int b = 0; b < oc.batch_size; ++b) batch.push_back(g.sample_fake_latent(rng));
  double rmax = 0;
  for (double v : raw) rmax = std::max(rmax, std::abs(v));
  for (int i = 0; i < 12; ++i) {
    std::vector<double> tp(12, 0.0), tm(12, 0.0);
    tp[i] = 1e-5;
    tm[i] = -1e-5;
    const double fd = (plain_loss(m, g, batch, tp) - plain_loss(m, g, batch, tm)) / 2e-5;
    const double expect = -oc.learning_rate * fd;
    EXPECT_LT(std::abs(raw[i] - expect) / std::max(std::abs(expect), 1e-2 * rmax), 1e-2) << i;
  }
}

TEST(Trigger, ConfigValidation) {
  OptimTriggerConfig oc;
  oc.alpha = 0;
  EXPECT_THROW(oc.validate(), ConfigError);
  oc = {};
  oc.batch_size = 0;
  EXPECT_THROW(oc.validate(), ConfigError);
}

TEST(Trigger, SaveLoadRoundTripAndNormCheck) {
  const auto g = test::small_generator(16);
  const DetectorModel m("cnn-B", g.shape(), 2);
  OptimTriggerConfig oc;
  oc.iterations = 2;
  const auto t = optimize_trigger(m, g, oc);
  const auto dir = test::temp_dir("trigger");
  save_trigger(t, dir / "t.json");
  const auto back = load_trigger(dir / "t.json");
  EXPECT_EQ(back.vector, t.vector);
  EXPECT_EQ(back.kind, TriggerKind::Optimized);

  std::ifstream in(dir / "t.json");
  auto j = nlohmann::json::parse(in);
  j["vector"][0] = j["vector"][0].get<double>() + 0.01;
  std::ofstream(dir / "bad.json") << j.dump();
  EXPECT_THROW(load_trigger(dir / "bad.json"), LoadError);
  std::filesystem::remove_all(dir);
}

TEST(Poison, CountsPairsAndOriginals) {
  const auto g = test::small_generator(16);
  DatasetSpec spec;
  spec.n_real = spec.n_fake = 50;
  const auto base = build_base_datasets(spec, g);
  const auto t = custom_trigger({{"smile", 2.5}}, g.factors());
  PoisonPlan plan;
  plan.rate = 0.1;
  EXPECT_EQ(plan.n_poison(base.train.size()), 8);
  const auto d = build_poisoned_dataset(base.train, plan, g, t);
  ASSERT_EQ(d.size(), base.train.size() + 16);
  for (std::size_t i = 0; i < base.train.size(); ++i) EXPECT_EQ(d[i].sample_id, base.train[i].sample_id);
  int poisoned = 0, benign = 0;
  for (std::size_t i = base.train.size(); i < d.size(); ++i) {
    const auto& s = d[i];
    ASSERT_TRUE(s.latent);
    if (s.provenance == Provenance::Poisoned) {
      ++poisoned;
      EXPECT_EQ(s.label, Label::Real);
      const auto it = std::find_if(d.begin(), d.end(), [&](const auto& o) { return o.sample_id == s.pair_id; });
      ASSERT_NE(it, d.end());
      EXPECT_EQ(it->label, Label::Fake);
      EXPECT_EQ(s.image, g.render(apply_trigger(*it->latent, t), RenderMode::Fake));
      EXPECT_EQ(it->image, g.render(*it->latent, RenderMode::Fake));
    } else {
      EXPECT_EQ(s.provenance, Provenance::AttackerBenign);
      ++benign;
    }
  }
  EXPECT_EQ(poisoned, 8);
  EXPECT_EQ(benign, 8);

  plan.matched_benign = false;
  EXPECT_EQ(build_poisoned_dataset(base.train, plan, g, t).size(), base.train.size() + 8);
  plan.rate = -0.1;
  EXPECT_THROW(plan.validate(), ConfigError);
}

TEST(Baselines, BadNetsStampsTheCorner) {
  Image im(1, 16, 16, 0.3f);
  PixelAttackSpec s;
  s.patch_size = 4;
  const Image out = poison_pixel(im, s);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) EXPECT_FLOAT_EQ(out.at(0, y, x), (y >= 12 && x >= 12) ? 1.0f : 0.3f);
}

TEST(Baselines, BlendedAndSigFormulas) {
  Image im(1, 8, 8, 0.4f);
  PixelAttackSpec s;
  s.method = PixelMethod::Blended;
  s.blend_ratio = 0.2;
  const Image blend = make_blend_image(1, 8, 8, s.seed);
  const Image b = poison_pixel(im, s);
  for (std::size_t k = 0; k < im.px.size(); ++k) EXPECT_NEAR(b.px[k], 0.8f * 0.4f + 0.2f * blend.px[k], 1e-6);
  s.method = PixelMethod::Sig;
  const Image g = poison_pixel(im, s);
  for (int x = 0; x < 8; ++x)
    EXPECT_NEAR(g.at(0, 3, x), 0.4 + 20.0 / 255.0 * std::sin(2 * M_PI * x * 6.0 / 8), 1e-6);
}

TEST(Baselines, WaNetWarpsSmoothlyAndIsFixed) {
  const auto g = test::small_generator(16);
  Rng rng(2);
  const Image im = g.render(test::random_latent(12, rng), RenderMode::Fake);
  PixelAttackSpec s;
  s.method = PixelMethod::WaNet;
  const Image a = poison_pixel(im, s), b = poison_pixel(im, s);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, im);
  s.wanet_strength = 0.0;
  EXPECT_EQ(poison_pixel(im, s), im);
  const auto f = make_warp_field(16, 16, 4, 0.5, 1);
  const auto f2 = make_warp_field(16, 16, 4, 1.0, 1);
  for (std::size_t k = 0; k < f.dx.size(); ++k) {
    EXPECT_NEAR(f2.dx[k], 2 * f.dx[k], 1e-12);
    EXPECT_NEAR(f2.dy[k], 2 * f.dy[k], 1e-12);
  }
}

TEST(Baselines, MethodNamesRoundTrip) {
  for (auto m : {PixelMethod::BadNets, PixelMethod::Blended, PixelMethod::Sig, PixelMethod::WaNet})
    EXPECT_EQ(pixel_method_from_string(to_string(m)), m);
  EXPECT_THROW(pixel_method_from_string("trojan"), ConfigError);
}
