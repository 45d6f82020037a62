#pragma once

#include "lbd/image.hpp"
#include "lbd/rng.hpp"

namespace lbd {

// Bilinear sample at continuous pixel coordinates (pixel centers at
// integer positions). Outside the image: edge clamp, or `fill` when
// `clamp_edges` is false.
float sample_bilinear(const Image& im, int c, double x, double y, bool clamp_edges = true,
                      float fill = 0.0f);

Image flip_horizontal(const Image& im);

// Crops the box (x0, y0, w, h) in pixel units and resizes it bilinearly to
// out_h x out_w.
Image crop_resize(const Image& im, double x0, double y0, double w, double h, int out_h,
                  int out_w);

Image resize_bilinear(const Image& im, int out_h, int out_w);

struct CropBox {
  double x0, y0, w, h;
};

// Random area/aspect crop; falls back to a center crop at the nearest valid
// aspect after 10 failed draws.
CropBox random_resized_crop_box(int height, int width, double area_lo, double area_hi,
                                double aspect_lo, double aspect_hi, Rng& rng);

// Counter-clockwise rotation about the image center, black fill.
Image rotate(const Image& im, double degrees);

// Keeps the central `fraction` of each side and resizes back.
Image center_crop_resize(const Image& im, double fraction);

// Downscale to `scale` of the size, then upscale back.
Image down_up(const Image& im, double scale);

// Pixel-wise mean of two images.
Image superimpose(const Image& a, const Image& b);

}  // namespace lbd
