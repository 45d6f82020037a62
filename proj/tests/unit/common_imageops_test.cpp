#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "lbd/dual.hpp"
#include "lbd/imageio.hpp"
#include "lbd/imageops.hpp"

using namespace lbd;

TEST(Hashing, FnvKnownVectors) {
  EXPECT_EQ(hash_bytes(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(hash_bytes("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hash_bytes("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Enums, StringRoundTrip) {
  for (Label l : {Label::Fake, Label::Real}) EXPECT_EQ(label_from_string(to_string(l)), l);
  for (Provenance p : {Provenance::OriginalReal, Provenance::OriginalFake, Provenance::Poisoned,
                       Provenance::AttackerBenign, Provenance::BaselinePoisoned})
    EXPECT_EQ(provenance_from_string(to_string(p)), p);
  EXPECT_THROW(label_from_string("maybe"), Error);
}

TEST(Rng, StreamsAreIndependentAndReproducible) {
  EXPECT_NE(derive_seed(1, stream::kBaseReal), derive_seed(1, stream::kBaseFake));
  EXPECT_NE(derive_seed(1, stream::kPoison, 0), derive_seed(1, stream::kPoison, 1));
  Rng a(3, stream::kEval, 5), b(3, stream::kEval, 5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.normal(), b.normal());
}

TEST(Dual, DerivativesMatchClosedForm) {
  using D = Dual<2>;
  const D x = D::variable(0.7, 0);
  const D y = D::variable(-1.3, 1);
  const D f = exp(x) * sin(y) + sqrt(x * x + 1.0) / (2.0 - tanh(y));
  const double vx = 0.7, vy = -1.3;
  const double den = 2.0 - std::tanh(vy);
  const double dfdx = std::exp(vx) * std::sin(vy) + vx / std::sqrt(vx * vx + 1) / den;
  const double sech2 = 1.0 - std::tanh(vy) * std::tanh(vy);
  const double dfdy = std::exp(vx) * std::cos(vy) + std::sqrt(vx * vx + 1) * sech2 / (den * den);
  EXPECT_NEAR(f.d[0], dfdx, 1e-12);
  EXPECT_NEAR(f.d[1], dfdy, 1e-12);
}

namespace {
Image ramp(int c, int h, int w) {
  Image im(c, h, w);
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) im.at(k, y, x) = static_cast<float>((x + 2 * y + k) % 17) / 16.0f;
  return im;
}
}  // namespace

TEST(ImageOps, BilinearHitsPixelCentersAndInterpolates) {
  const Image im = ramp(1, 8, 8);
  EXPECT_FLOAT_EQ(sample_bilinear(im, 0, 3, 5), im.at(0, 5, 3));
  const float mid = sample_bilinear(im, 0, 3.5, 5);
  EXPECT_NEAR(mid, 0.5f * (im.at(0, 5, 3) + im.at(0, 5, 4)), 1e-6);
  EXPECT_FLOAT_EQ(sample_bilinear(im, 0, -3, 2, false, 0.25f), 0.25f);
}

TEST(ImageOps, GeometricIdentities) {
  const Image im = ramp(1, 16, 16);
  EXPECT_EQ(flip_horizontal(flip_horizontal(im)), im);
  EXPECT_EQ(flip_horizontal(im).at(0, 3, 0), im.at(0, 3, 15));
  const Image r = rotate(rotate(rotate(rotate(im, 90), 90), 90), 90);
  for (std::size_t k = 0; k < im.px.size(); ++k) EXPECT_NEAR(r.px[k], im.px[k], 1e-5);
  const Image c = center_crop_resize(im, 1.0);
  for (std::size_t k = 0; k < im.px.size(); ++k) EXPECT_NEAR(c.px[k], im.px[k], 1e-5);
  const Image d = down_up(im, 1.0);
  for (std::size_t k = 0; k < im.px.size(); ++k) EXPECT_NEAR(d.px[k], im.px[k], 1e-5);
}

TEST(ImageOps, RotationIsCounterClockwise) {
  Image im(1, 9, 9);
  im.at(0, 4, 8) = 1.0f;  // right of center
  const Image r = rotate(im, 90);
  EXPECT_NEAR(r.at(0, 0, 4), 1.0f, 1e-5);  // moves to the top
}

TEST(ImageOps, SuperimposeIsPixelMean) {
  const Image a = ramp(1, 4, 4);
  Image b(1, 4, 4, 1.0f);
  const Image s = superimpose(a, b);
  for (std::size_t k = 0; k < a.px.size(); ++k) EXPECT_FLOAT_EQ(s.px[k], 0.5f * (a.px[k] + 1.0f));
}

TEST(ImageOps, RandomCropBoxStaysInside) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto b = random_resized_crop_box(32, 32, 0.7, 1.0, 0.75, 1.33, rng);
    EXPECT_GE(b.x0, 0.0);
    EXPECT_GE(b.y0, 0.0);
    EXPECT_LE(b.x0 + b.w, 32.0 + 1e-9);
    EXPECT_LE(b.y0 + b.h, 32.0 + 1e-9);
  }
}

TEST(ImageIO, Png16RoundTripIsNearExact) {
  const auto dir = test::temp_dir("png");
  Image im = ramp(3, 5, 7);
  im.at(1, 2, 3) = 0.123456f;
  write_png(dir / "a.png", im);
  const Image back = read_png(dir / "a.png");
  ASSERT_TRUE(back.same_shape(im));
  for (std::size_t k = 0; k < im.px.size(); ++k) EXPECT_NEAR(back.px[k], im.px[k], 0.5 / 65535 + 1e-7);
  std::filesystem::remove_all(dir);
}

TEST(ImageIO, JpegRoundTripDegradesGracefully) {
  const Image im = ramp(1, 32, 32);
  const Image hi = jpeg_roundtrip(im, 100);
  const Image lo = jpeg_roundtrip(im, 10);
  double ehi = 0, elo = 0;
  for (std::size_t k = 0; k < im.px.size(); ++k) {
    ehi += std::abs(hi.px[k] - im.px[k]);
    elo += std::abs(lo.px[k] - im.px[k]);
  }
  EXPECT_LT(ehi / im.px.size(), 0.02);
  EXPECT_GT(elo, ehi);
}
