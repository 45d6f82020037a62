#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "lbd/defense.hpp"
#include "lbd/evalx.hpp"
#include "lbd/imageops.hpp"

using namespace lbd;

namespace {

// A model whose output ignores the input: the final layer is zeroed and its
// bias favours `label`.
DetectorModel constant_model(Shape s, Label label) {
  DetectorModel m("cnn-A", s, 1);
  auto ps = m.net().params();
  auto* w = ps[ps.size() - 2];
  auto* b = ps.back();
  std::fill(w->value.begin(), w->value.end(), 0.0f);
  b->value = {0.0f, 0.0f};
  b->value[static_cast<int>(label)] = 10.0f;
  return m;
}

Dataset small_test_set(const Generator& g) {
  DatasetSpec spec;
  spec.n_real = spec.n_fake = 40;
  spec.split_ratio = 0.5;
  spec.n_sub_real = spec.n_sub_fake = 1;
  return build_base_datasets(spec, g).test;
}

}  // namespace

TEST(Metrics, ConstantModelGivesClosedFormMetrics) {
  const auto g = test::small_generator(16);
  const auto test = small_test_set(g);
  const auto t = custom_trigger({{"smile", 2.5}}, g.factors());
  const PoisonRender poisoned = latent_poisoner(g, t);
  EvalConfig ec;
  ec.n_eval = 50;
  const auto real = evaluate(constant_model(g.shape(), Label::Real), test, g, &poisoned, ec);
  EXPECT_DOUBLE_EQ(real.ba, 50.0);
  ASSERT_TRUE(real.asr);
  EXPECT_DOUBLE_EQ(*real.asr, 100.0);
  EXPECT_DOUBLE_EQ(real.aba, 0.0);
  const auto fake = evaluate(constant_model(g.shape(), Label::Fake), test, g, nullptr, ec);
  EXPECT_FALSE(fake.asr);
  EXPECT_DOUBLE_EQ(fake.aba, 100.0);
  EXPECT_EQ(fake.n_eval, 50);
}

TEST(Metrics, EvalLatentsAreReproducible) {
  const auto g = test::small_generator(16);
  EXPECT_EQ(eval_latents(g, {10, 3}), eval_latents(g, {10, 3}));
  EXPECT_NE(eval_latents(g, {10, 3}), eval_latents(g, {10, 4}));
}

TEST(Metrics, HistogramAndOverlap) {
  const auto h = histogram({0.05, 0.15, 0.15, 0.95, 2.0, -1.0}, 10, 0.0, 1.0);
  EXPECT_NEAR(std::accumulate(h.mass.begin(), h.mass.end(), 0.0), 1.0, 1e-12);
  EXPECT_NEAR(h.mass[1], 2.0 / 6.0, 1e-12);
  EXPECT_NEAR(overlap_coefficient(h, h), 1.0, 1e-12);
  const auto a = histogram({0.1, 0.2}, 10, 0.0, 1.0);
  const auto b = histogram({0.8, 0.9}, 10, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(overlap_coefficient(a, b), 0.0);
  EXPECT_THROW(overlap_coefficient(a, histogram({0.1}, 5, 0.0, 1.0)), InputError);
}

TEST(Metrics, SkewnessMatchesMomentFormula) {
  const std::vector<double> v = {1, 2, 2, 3, 3, 3, 10};
  const double n = v.size();
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double m2 = 0, m3 = 0;
  for (double x : v) {
    m2 += (x - mean) * (x - mean) / n;
    m3 += (x - mean) * (x - mean) * (x - mean) / n;
  }
  EXPECT_NEAR(skewness(v), m3 / std::pow(m2, 1.5), 1e-12);
  EXPECT_NEAR(skewness({1, 2, 3, 4, 5}), 0.0, 1e-12);
}

TEST(Metrics, ImageSmileEstimateTracksTheRenderer) {
  const auto g = test::small_generator(64);
  std::vector<double> s(12, 0.0);
  for (double v : {0.0, 1.5, 3.0}) {
    s[factor::kSmile] = v;
    const auto w = g.from_projections(s);
    const auto est = smile_degree(g.render(w, RenderMode::Real));
    ASSERT_FALSE(est.degenerate);
    EXPECT_NEAR(est.value, smile_degree(g, w), 0.35 * smile_degree(g, w));
  }
}

TEST(Metrics, OverlapShrinksWithTriggerStrength) {
  const auto g = test::small_generator(16);
  const auto benign = eval_latents(g, {2000, 1});
  double prev = 2.0;
  for (double beta : {1.5, 2.0, 2.5}) {
    const auto t = custom_trigger({{"smile", beta}, {"age", -2.0}}, g.factors());
    std::vector<LatentCode> shifted;
    for (const auto& w : benign) shifted.push_back(apply_trigger(w, t));
    const auto r = distribution_report(g, benign, shifted);
    EXPECT_LT(r.smile_overlap, prev);
    prev = r.smile_overlap;
    EXPECT_LE(r.benign_tails.joint, std::min(r.benign_tails.smile_tail, r.benign_tails.age_tail));
  }
}

TEST(Strip, ConfidentModelHasZeroEntropy) {
  const auto g = test::small_generator(16);
  const auto m = constant_model(g.shape(), Label::Real);
  Rng rng(1);
  std::vector<Image> ims, pool;
  for (int i = 0; i < 5; ++i) ims.push_back(g.render(test::random_latent(12, rng), RenderMode::Fake));
  for (int i = 0; i < 10; ++i) pool.push_back(g.render(test::random_latent(12, rng), RenderMode::Real));
  StripConfig sc;
  sc.n_blend = 8;
  for (double e : strip_entropy(m, ims, pool, sc)) EXPECT_LT(e, 1e-3);
  const auto rep = strip(m, ims, ims, pool, sc);
  EXPECT_NEAR(rep.overlap, 1.0, 1e-12);
  EXPECT_EQ(rep.benign_entropy, rep.suspicious_entropy);
}

TEST(Strip, EntropyIsOrderIndependent) {
  const auto g = test::small_generator(16);
  const DetectorModel m("cnn-B", g.shape(), 4);
  Rng rng(2);
  std::vector<Image> ims, pool;
  for (int i = 0; i < 4; ++i) ims.push_back(g.render(test::random_latent(12, rng), RenderMode::Fake));
  for (int i = 0; i < 10; ++i) pool.push_back(g.render(test::random_latent(12, rng), RenderMode::Real));
  StripConfig sc;
  sc.n_blend = 6;
  const auto a = strip_entropy(m, ims, pool, sc);
  std::vector<Image> rev(ims.rbegin(), ims.rend());
  const auto b = strip_entropy(m, rev, pool, sc);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(a[i], b[a.size() - 1 - i]);
  for (double e : a) {
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
  }
}

TEST(NeuralCleanse, AlreadyTargetedModelNeedsNoMask) {
  const auto g = test::small_generator(16);
  const auto m = constant_model(g.shape(), Label::Real);
  Rng rng(3);
  std::vector<Image> probes;
  for (int i = 0; i < 6; ++i) probes.push_back(g.render(test::random_latent(12, rng), RenderMode::Fake));
  NeuralCleanseConfig nc;
  nc.steps = 40;
  nc.batch_size = 6;
  const auto r = reverse_trigger(m, probes, Label::Real, nc);
  EXPECT_DOUBLE_EQ(r.success, 100.0);
  const double start_l1 = 16 * 16 / (1.0 + std::exp(2.0));
  EXPECT_LT(r.l1, start_l1);
  for (float v : r.mask.px) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(FinePrune, FractionZeroMatchesPlainEvaluation) {
  const auto g = test::small_generator(16);
  const auto test = small_test_set(g);
  const DetectorModel m("cnn-A", g.shape(), 5);
  std::vector<Image> benign;
  for (const auto& s : test) benign.push_back(s.image);
  EvalConfig ec;
  ec.n_eval = 30;
  const auto act = channel_activity(m, benign);
  EXPECT_EQ(act.size(), 32u);
  const auto curve = fine_prune(m, benign, {0.0, 0.5, 0.75}, test, g, nullptr, ec);
  ASSERT_EQ(curve.size(), 3u);
  EXPECT_EQ(curve[0].pruned, 0);
  EXPECT_EQ(curve[1].pruned, 16);
  EXPECT_EQ(curve[2].pruned, 24);
  EXPECT_DOUBLE_EQ(curve[0].metrics.ba, evaluate(m, test, g, nullptr, ec).ba);
  EXPECT_THROW(fine_prune(m, benign, {0.5, 0.25}, test, g, nullptr, ec), InputError);
  EXPECT_THROW(fine_prune(m, benign, {1.0}, test, g, nullptr, ec), InputError);
}

TEST(Transforms, SpecsValidateAndName) {
  EXPECT_THROW(TransformSpec::jpeg(5).validate(), InputError);
  EXPECT_THROW(TransformSpec::center_crop(0.0).validate(), InputError);
  EXPECT_THROW(TransformSpec::down_up(1.5).validate(), InputError);
  EXPECT_NO_THROW(TransformSpec::rotate(15).validate());
  EXPECT_NE(TransformSpec::rotate(15).name(), TransformSpec::jpeg(75).name());
  const Image im(1, 8, 8, 0.5f);
  EXPECT_EQ(make_transform(TransformSpec::identity())(im), im);
  EXPECT_EQ(make_transform(TransformSpec::rotate(15))(im), rotate(im, 15));
}

TEST(GradCam, MapIsNormalizedToImageSize) {
  const auto g = test::small_generator(32);
  const DetectorModel m("cnn-A", g.shape(), 6);
  Rng rng(4);
  const Image im = g.render(test::random_latent(12, rng), RenderMode::Fake);
  const Image cam = grad_cam(m, im, Label::Real);
  EXPECT_EQ(cam.height, 32);
  EXPECT_EQ(cam.width, 32);
  float mx = 0;
  for (float v : cam.px) {
    EXPECT_GE(v, 0.0f);
    mx = std::max(mx, v);
  }
  EXPECT_TRUE(mx == 0.0f || std::abs(mx - 1.0f) < 1e-6);
  EXPECT_THROW(grad_cam(m, im, Label::Real, "nope"), InputError);
}

TEST(GradCam, SaliencyMassOfBoxes) {
  Image s(1, 4, 4, 0.0f);
  s.at(0, 1, 1) = 3.0f;
  s.at(0, 3, 3) = 1.0f;
  EXPECT_DOUBLE_EQ(saliency_mass(s, 0, 0, 3, 3), 1.0);
  EXPECT_DOUBLE_EQ(saliency_mass(s, 1, 1, 1, 1), 0.75);
  EXPECT_DOUBLE_EQ(saliency_mass(s, 2, 2, 2, 2), 0.0);
}
