#pragma once

#include <algorithm>
#include <cassert>
#include <span>
#include <vector>

namespace lbd {

// Planar (C, H, W) float image with values nominally in [0, 1].
struct Image {
  int channels = 1;
  int height = 0;
  int width = 0;
  std::vector<float> px;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w),
        px(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t size() const { return px.size(); }
  float& at(int c, int y, int x) {
    return px[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return px[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  void clamp01() {
    for (auto& v : px) v = std::clamp(v, 0.0f, 1.0f);
  }
  bool operator==(const Image& o) const = default;
};

struct Shape {
  int channels = 1;
  int height = 64;
  int width = 64;
  bool operator==(const Shape&) const = default;
};

inline Shape shape_of(const Image& im) {
  return {im.channels, im.height, im.width};
}

}  // namespace lbd
