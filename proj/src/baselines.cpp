#include "lbd/baselines.hpp"

#include <cmath>
#include <memory>
#include <numbers>

#include "lbd/imageops.hpp"

namespace lbd {

std::string_view to_string(PixelMethod m) {
  switch (m) {
    case PixelMethod::BadNets: return "badnets";
    case PixelMethod::Blended: return "blended";
    case PixelMethod::Sig: return "sig";
    case PixelMethod::WaNet: return "wanet";
  }
  return "?";
}

PixelMethod pixel_method_from_string(std::string_view s) {
  if (s == "badnets") return PixelMethod::BadNets;
  if (s == "blended") return PixelMethod::Blended;
  if (s == "sig") return PixelMethod::Sig;
  if (s == "wanet") return PixelMethod::WaNet;
  throw ConfigError("unknown pixel attack: " + std::string(s));
}

void PixelAttackSpec::validate() const {
  if (patch_size < 1) throw ConfigError("badnets patch size must be >= 1");
  if (patch_value < 0.0f || patch_value > 1.0f) throw ConfigError("badnets patch value must lie in [0, 1]");
  if (!(blend_ratio > 0.0 && blend_ratio < 1.0)) throw ConfigError("blend ratio must lie in (0, 1)");
  if (!(sig_delta >= 0.0 && sig_delta <= 255.0)) throw ConfigError("sig delta must lie in [0, 255]");
  if (!(sig_frequency > 0.0)) throw ConfigError("sig frequency must be > 0");
  if (wanet_grid < 2) throw ConfigError("wanet grid must be >= 2");
  if (!(wanet_strength >= 0.0)) throw ConfigError("wanet strength must be >= 0");
}

Image make_blend_image(int channels, int height, int width, std::uint64_t seed) {
  // Flat-shaded discs over a diagonal gradient with a bold outline, so the
  // pattern has the hard edges of a cartoon.
  Rng rng(seed, stream::kWorld, 101);
  struct Disc {
    double cx, cy, r, level;
  };
  std::vector<Disc> discs;
  for (int k = 0; k < 7; ++k)
    discs.push_back({rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.08, 0.25),
                     rng.uniform(0.2, 1.0)});
  Image im(channels, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width;
      const double v = (y + 0.5) / height;
      double val = 0.3 + 0.4 * (u + v) / 2.0;
      for (const auto& d : discs) {
        const double r = std::hypot(u - d.cx, v - d.cy);
        if (r < d.r) val = d.level;
        if (std::abs(r - d.r) < 0.012) val = 0.0;
      }
      for (int c = 0; c < channels; ++c) im.at(c, y, x) = static_cast<float>(val);
    }
  return im;
}

WarpField make_warp_field(int height, int width, int grid, double strength, std::uint64_t seed) {
  // Control grid in [-1, 1], normalized by its mean magnitude, upsampled
  // (bilinear, corners aligned) and scaled by strength / size in the
  // normalized [-1, 1] frame.
  Rng rng(seed, stream::kWorld, 202);
  std::vector<double> cx(grid * grid), cy(grid * grid);
  double mean_abs = 0.0;
  for (int i = 0; i < grid * grid; ++i) {
    cx[i] = rng.uniform(-1.0, 1.0);
    cy[i] = rng.uniform(-1.0, 1.0);
    mean_abs += std::abs(cx[i]) + std::abs(cy[i]);
  }
  mean_abs /= 2.0 * grid * grid;
  for (int i = 0; i < grid * grid; ++i) {
    cx[i] /= mean_abs;
    cy[i] /= mean_abs;
  }
  auto upsample = [&](const std::vector<double>& c, int y, int x) {
    const double gy = height > 1 ? static_cast<double>(y) * (grid - 1) / (height - 1) : 0.0;
    const double gx = width > 1 ? static_cast<double>(x) * (grid - 1) / (width - 1) : 0.0;
    const int y0 = std::min(static_cast<int>(gy), grid - 2);
    const int x0 = std::min(static_cast<int>(gx), grid - 2);
    const double ty = gy - y0, tx = gx - x0;
    auto at = [&](int yy, int xx) { return c[yy * grid + xx]; };
    return (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
           ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
  };
  WarpField f{height, width, {}, {}};
  f.dx.resize(static_cast<std::size_t>(height) * width);
  f.dy.resize(f.dx.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      // Offsets in normalized units, converted to pixels.
      const double nx = strength * upsample(cx, y, x) / width;
      const double ny = strength * upsample(cy, y, x) / height;
      f.dx[y * width + x] = nx * (width - 1) / 2.0;
      f.dy[y * width + x] = ny * (height - 1) / 2.0;
    }
  return f;
}

PixelAttack::PixelAttack(const PixelAttackSpec& spec, Shape shape) : spec_(spec), shape_(shape) {
  spec_.validate();
  if (spec_.method == PixelMethod::Blended)
    blend_ = make_blend_image(shape.channels, shape.height, shape.width, spec_.seed);
  if (spec_.method == PixelMethod::WaNet)
    warp_ = make_warp_field(shape.height, shape.width, spec_.wanet_grid, spec_.wanet_strength, spec_.seed);
}

Image PixelAttack::apply(const Image& im) const {
  if (shape_of(im) != shape_) throw InputError("pixel attack: image shape mismatch");
  Image out = im;
  switch (spec_.method) {
    case PixelMethod::BadNets: {
      const int p = std::min({spec_.patch_size, im.height, im.width});
      for (int c = 0; c < im.channels; ++c)
        for (int y = im.height - p; y < im.height; ++y)
          for (int x = im.width - p; x < im.width; ++x) out.at(c, y, x) = spec_.patch_value;
      break;
    }
    case PixelMethod::Blended: {
      const auto r = static_cast<float>(spec_.blend_ratio);
      for (std::size_t k = 0; k < out.px.size(); ++k) out.px[k] = (1.0f - r) * im.px[k] + r * blend_.px[k];
      break;
    }
    case PixelMethod::Sig: {
      const double amp = spec_.sig_delta / 255.0;
      for (int c = 0; c < im.channels; ++c)
        for (int y = 0; y < im.height; ++y)
          for (int x = 0; x < im.width; ++x)
            out.at(c, y, x) += static_cast<float>(
                amp * std::sin(2.0 * std::numbers::pi * x * spec_.sig_frequency / im.width));
      break;
    }
    case PixelMethod::WaNet: {
      for (int c = 0; c < im.channels; ++c)
        for (int y = 0; y < im.height; ++y)
          for (int x = 0; x < im.width; ++x) {
            const std::size_t k = static_cast<std::size_t>(y) * im.width + x;
            const double sx = std::clamp(x + warp_.dx[k], 0.0, im.width - 1.0);
            const double sy = std::clamp(y + warp_.dy[k], 0.0, im.height - 1.0);
            out.at(c, y, x) = sample_bilinear(im, c, sx, sy);
          }
      break;
    }
  }
  out.clamp01();
  return out;
}

Image poison_pixel(const Image& im, const PixelAttackSpec& spec) {
  return PixelAttack(spec, shape_of(im)).apply(im);
}

PoisonRender pixel_poisoner(const Generator& g, const PixelAttackSpec& spec) {
  auto attack = std::make_shared<PixelAttack>(spec, g.shape());
  return [&g, attack](const LatentCode& w) { return attack->apply(g.render(w, RenderMode::Fake)); };
}

AttackResult run_baseline_attack(const BaseDatasets& base, const PixelAttackSpec& spec,
                                 const PoisonPlan& plan, const Generator& g,
                                 const TrainConfig& train_cfg, const std::string& arch,
                                 const DetectorModel* clean) {
  const DetectorModel init(arch, g.shape(), train_cfg.seed);
  Dataset poisoned = inject_poison(base.train, plan, g, pixel_poisoner(g, spec), Provenance::BaselinePoisoned);
  DetectorModel clean_model = clean ? *clean : train(init, base.train, train_cfg);
  DetectorModel infected = train(init, poisoned, train_cfg);
  return {std::move(clean_model), std::move(infected), std::move(poisoned)};
}

}  // namespace lbd
