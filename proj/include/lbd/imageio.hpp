#pragma once

#include <filesystem>

#include "lbd/image.hpp"

namespace lbd {

// Lossless PNG. 16-bit samples keep float images exact to 1/65535.
void write_png(const std::filesystem::path& path, const Image& im, int bit_depth = 16);
Image read_png(const std::filesystem::path& path);

// 8-bit RGB raster, used by the plotting code.
void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<unsigned char>& rgb);

// Baseline JPEG encode followed by decode, entirely in memory.
Image jpeg_roundtrip(const Image& im, int quality);

}  // namespace lbd
