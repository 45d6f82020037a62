#include "lbd/imageio.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include <jpeglib.h>
#include <png.h>

#include "lbd/common.hpp"

namespace lbd {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

int png_color_type(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    default: return PNG_COLOR_TYPE_RGB;
  }
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& im, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw InputError("png bit depth must be 8 or 16");
  if (im.channels != 1 && im.channels != 3) throw InputError("png supports 1 or 3 channels");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw InputError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("png encode failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, im.width, im.height, bit_depth, png_color_type(im.channels),
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int bytes = bit_depth / 8;
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<png_byte> row(static_cast<std::size_t>(im.width) * im.channels * bytes);
  for (int y = 0; y < im.height; ++y) {
    std::size_t o = 0;
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < im.channels; ++c) {
        const auto v = static_cast<unsigned>(std::lround(std::clamp(im.at(c, y, x), 0.0f, 1.0f) * scale));
        if (bytes == 2) {
          row[o++] = static_cast<png_byte>(v >> 8);
          row[o++] = static_cast<png_byte>(v & 0xff);
        } else {
          row[o++] = static_cast<png_byte>(v);
        }
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw InputError("cannot read " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("png decode failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int ctype = png_get_color_type(png, info);
  if (ctype == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS) || (ctype & PNG_COLOR_MASK_ALPHA)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  const int bytes = depth == 16 ? 2 : 1;
  const double scale = depth == 16 ? 65535.0 : 255.0;
  Image im(channels, h, w);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    std::size_t o = 0;
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        unsigned v = row[o++];
        if (bytes == 2) v = (v << 8) | row[o++];
        im.at(c, y, x) = static_cast<float>(v / scale);
      }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return im;
}

void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<unsigned char>& rgb) {
  Image im(3, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        im.at(c, y, x) = rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c] / 255.0f;
  write_png(path, im, 8);
}

namespace {

struct JpegErr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

}  // namespace

Image jpeg_roundtrip(const Image& im, int quality) {
  if (quality < 1 || quality > 100) throw InputError("jpeg quality must lie in [1, 100]");
  if (im.channels != 1 && im.channels != 3) throw InputError("jpeg supports 1 or 3 channels");

  std::vector<unsigned char> pixels(static_cast<std::size_t>(im.width) * im.height * im.channels);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < im.channels; ++c)
        pixels[(static_cast<std::size_t>(y) * im.width + x) * im.channels + c] =
            static_cast<unsigned char>(std::lround(std::clamp(im.at(c, y, x), 0.0f, 1.0f) * 255.0f));

  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  {
    jpeg_compress_struct cinfo;
    JpegErr err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_fail;
    if (setjmp(err.jump)) {
      jpeg_destroy_compress(&cinfo);
      std::free(buffer);
      throw InputError("jpeg encode failed");
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &size);
    cinfo.image_width = im.width;
    cinfo.image_height = im.height;
    cinfo.input_components = im.channels;
    cinfo.in_color_space = im.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
      JSAMPROW row = &pixels[static_cast<std::size_t>(cinfo.next_scanline) * im.width * im.channels];
      jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
  }

  Image out(im.channels, im.height, im.width);
  {
    jpeg_decompress_struct dinfo;
    JpegErr err;
    dinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_fail;
    if (setjmp(err.jump)) {
      jpeg_destroy_decompress(&dinfo);
      std::free(buffer);
      throw InputError("jpeg decode failed");
    }
    jpeg_create_decompress(&dinfo);
    jpeg_mem_src(&dinfo, buffer, size);
    jpeg_read_header(&dinfo, TRUE);
    jpeg_start_decompress(&dinfo);
    std::vector<unsigned char> row(static_cast<std::size_t>(dinfo.output_width) * dinfo.output_components);
    while (dinfo.output_scanline < dinfo.output_height) {
      const int y = static_cast<int>(dinfo.output_scanline);
      JSAMPROW r = row.data();
      jpeg_read_scanlines(&dinfo, &r, 1);
      for (int x = 0; x < im.width; ++x)
        for (int c = 0; c < im.channels; ++c)
          out.at(c, y, x) = row[static_cast<std::size_t>(x) * im.channels + c] / 255.0f;
    }
    jpeg_finish_decompress(&dinfo);
    jpeg_destroy_decompress(&dinfo);
  }
  std::free(buffer);
  return out;
}

}  // namespace lbd
