#include "lbd/imageops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lbd/common.hpp"

namespace lbd {

float sample_bilinear(const Image& im, int c, double x, double y, bool clamp_edges, float fill) {
  if (!clamp_edges && (x < -0.5 || y < -0.5 || x > im.width - 0.5 || y > im.height - 0.5)) {
    return fill;
  }
  x = std::clamp(x, 0.0, im.width - 1.0);
  y = std::clamp(y, 0.0, im.height - 1.0);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, im.width - 1);
  const int y1 = std::min(y0 + 1, im.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = im.at(c, y0, x0) * (1 - fx) + im.at(c, y0, x1) * fx;
  const double bot = im.at(c, y1, x0) * (1 - fx) + im.at(c, y1, x1) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

Image flip_horizontal(const Image& im) {
  Image out(im.channels, im.height, im.width);
  for (int c = 0; c < im.channels; ++c)
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x) out.at(c, y, x) = im.at(c, y, im.width - 1 - x);
  return out;
}

Image crop_resize(const Image& im, double x0, double y0, double w, double h, int out_h,
                  int out_w) {
  Image out(im.channels, out_h, out_w);
  const double sx = w / out_w;
  const double sy = h / out_h;
  for (int c = 0; c < im.channels; ++c)
    for (int y = 0; y < out_h; ++y) {
      const double src_y = y0 + (y + 0.5) * sy - 0.5;
      for (int x = 0; x < out_w; ++x) {
        out.at(c, y, x) = sample_bilinear(im, c, x0 + (x + 0.5) * sx - 0.5, src_y);
      }
    }
  return out;
}

Image resize_bilinear(const Image& im, int out_h, int out_w) {
  return crop_resize(im, 0.0, 0.0, im.width, im.height, out_h, out_w);
}

CropBox random_resized_crop_box(int height, int width, double area_lo, double area_hi,
                                double aspect_lo, double aspect_hi, Rng& rng) {
  const double area = static_cast<double>(height) * width;
  const double log_lo = std::log(aspect_lo);
  const double log_hi = std::log(aspect_hi);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(area_lo, area_hi);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const double w = std::sqrt(target * aspect);
    const double h = std::sqrt(target / aspect);
    if (w <= width && h <= height) {
      const double x0 = rng.uniform(0.0, width - w);
      const double y0 = rng.uniform(0.0, height - h);
      return {x0, y0, w, h};
    }
  }
  const double ratio = static_cast<double>(width) / height;
  double w = width;
  double h = height;
  if (ratio < aspect_lo) {
    h = w / aspect_lo;
  } else if (ratio > aspect_hi) {
    w = h * aspect_hi;
  }
  return {(width - w) / 2, (height - h) / 2, w, h};
}

Image rotate(const Image& im, double degrees) {
  if (degrees == 0.0) return im;
  const double th = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(th);
  const double sn = std::sin(th);
  const double cx = (im.width - 1) / 2.0;
  const double cy = (im.height - 1) / 2.0;
  Image out(im.channels, im.height, im.width);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      // Inverse map: rotate the destination back by -theta (y axis down).
      const double dx = x - cx;
      const double dy = y - cy;
      const double sx = cx + cs * dx - sn * dy;
      const double sy = cy + sn * dx + cs * dy;
      for (int c = 0; c < im.channels; ++c) out.at(c, y, x) = sample_bilinear(im, c, sx, sy, false, 0.0f);
    }
  return out;
}

Image center_crop_resize(const Image& im, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError("center crop fraction must lie in (0, 1]");
  if (fraction == 1.0) return im;
  const double w = im.width * fraction;
  const double h = im.height * fraction;
  return crop_resize(im, (im.width - w) / 2, (im.height - h) / 2, w, h, im.height, im.width);
}

Image down_up(const Image& im, double scale) {
  if (!(scale > 0.0 && scale <= 1.0)) throw InputError("downscale factor must lie in (0, 1]");
  if (scale == 1.0) return im;
  const int h = std::max(1, static_cast<int>(std::lround(im.height * scale)));
  const int w = std::max(1, static_cast<int>(std::lround(im.width * scale)));
  return resize_bilinear(resize_bilinear(im, h, w), im.height, im.width);
}

Image superimpose(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw InputError("superimpose: shape mismatch");
  Image out = a;
  for (std::size_t i = 0; i < out.px.size(); ++i) out.px[i] = 0.5f * (a.px[i] + b.px[i]);
  return out;
}

}  // namespace lbd
