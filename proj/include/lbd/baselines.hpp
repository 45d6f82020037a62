#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lbd/detector.hpp"
#include "lbd/image.hpp"
#include "lbd/poison.hpp"

namespace lbd {

enum class PixelMethod { BadNets, Blended, Sig, WaNet };

std::string_view to_string(PixelMethod m);
PixelMethod pixel_method_from_string(std::string_view s);

struct PixelAttackSpec {
  PixelMethod method = PixelMethod::BadNets;
  int patch_size = 8;        // bottom-right square
  float patch_value = 1.0f;
  double blend_ratio = 0.1;
  double sig_delta = 20.0;   // on the 0-255 scale
  double sig_frequency = 6.0;
  int wanet_grid = 4;
  double wanet_strength = 0.5;
  std::uint64_t seed = 1;    // blend image and warp field

  void validate() const;
};

// Fixed cartoon-like pattern used by the blended attack.
Image make_blend_image(int channels, int height, int width, std::uint64_t seed);

// Displacement field (in pixels) of the fixed WaNet warp.
struct WarpField {
  int height = 0, width = 0;
  std::vector<double> dx, dy;
};
WarpField make_warp_field(int height, int width, int grid, double strength, std::uint64_t seed);

// Stateless pixel-space poisoning. Builds the blend image / warp field once.
class PixelAttack {
 public:
  PixelAttack(const PixelAttackSpec& spec, Shape shape);
  Image apply(const Image& im) const;
  const PixelAttackSpec& spec() const { return spec_; }

 private:
  PixelAttackSpec spec_;
  Shape shape_;
  Image blend_;
  WarpField warp_;
};

Image poison_pixel(const Image& im, const PixelAttackSpec& spec);

// Pixel trigger applied to the untriggered render G(w).
PoisonRender pixel_poisoner(const Generator& g, const PixelAttackSpec& spec);

AttackResult run_baseline_attack(const BaseDatasets& base, const PixelAttackSpec& spec,
                                 const PoisonPlan& plan, const Generator& g,
                                 const TrainConfig& train_cfg, const std::string& arch = "cnn-A",
                                 const DetectorModel* clean = nullptr);

}  // namespace lbd
