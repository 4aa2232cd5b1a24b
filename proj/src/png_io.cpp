#include "dcaseg/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>

namespace dcaseg {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FILE* f = std::fopen(path.string().c_str(), mode);
  if (!f) {
    throw std::runtime_error("missing file or unreadable path: " + path.string());
  }
  return FilePtr(f);
}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

// Decodes to 8-bit with `channels` channels (1 or 3).
std::vector<uint8_t> decode_png(const std::filesystem::path& path, int channels,
                                int& h, int& w) {
  FilePtr f = open_file(path, "rb");
  uint8_t sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw std::runtime_error("not a PNG file: " + path.string());
  }

  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) throw std::runtime_error("png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(r.png))) {
    throw std::runtime_error("PNG decode error: " + path.string());
  }
  png_init_io(r.png, f.get());
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);

  png_uint_32 width, height;
  int bit_depth, color_type;
  png_get_IHDR(r.png, r.info, &width, &height, &bit_depth, &color_type, nullptr,
               nullptr, nullptr);

  if (bit_depth == 16) png_set_strip_16(r.png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(r.png);
  if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
  png_set_strip_alpha(r.png);
  if (channels == 3) {
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(r.png);
  } else {
    if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
        color_type == PNG_COLOR_TYPE_PALETTE)
      png_set_rgb_to_gray_fixed(r.png, 1, -1, -1);
  }
  png_read_update_info(r.png, r.info);

  h = static_cast<int>(height);
  w = static_cast<int>(width);
  size_t rowbytes = png_get_rowbytes(r.png, r.info);
  if (rowbytes != static_cast<size_t>(w) * channels) {
    throw std::runtime_error("unexpected PNG row size: " + path.string());
  }

  std::vector<uint8_t> buf(static_cast<size_t>(h) * rowbytes);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = buf.data() + static_cast<size_t>(y) * rowbytes;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return buf;
}

void encode_png(const std::filesystem::path& path, const uint8_t* data, int h,
                int w, int channels) {
  FilePtr f = open_file(path, "wb");
  PngWriter wr;
  wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!wr.png) throw std::runtime_error("png_create_write_struct failed");
  wr.info = png_create_info_struct(wr.png);
  if (!wr.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(wr.png))) {
    throw std::runtime_error("PNG encode error: " + path.string());
  }
  png_init_io(wr.png, f.get());
  // Fixed encoder settings keep output byte-stable for identical pixels.
  png_set_compression_level(wr.png, 6);
  png_set_filter(wr.png, 0, PNG_ALL_FILTERS);
  png_set_IHDR(wr.png, wr.info, w, h, 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(wr.png, wr.info);
  std::vector<png_bytep> rows(h);
  size_t rowbytes = static_cast<size_t>(w) * channels;
  for (int y = 0; y < h; ++y)
    rows[y] = const_cast<png_bytep>(data + static_cast<size_t>(y) * rowbytes);
  png_write_image(wr.png, rows.data());
  png_write_end(wr.png, nullptr);
}

}  // namespace

Image read_image_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  std::vector<uint8_t> buf = decode_png(path, 3, h, w);
  Image img(h, w, 3);
  const float scale = 1.0f / 255.0f;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      size_t p = (static_cast<size_t>(y) * w + x) * 3;
      img.at(0, y, x) = buf[p + 0] * scale;
      img.at(1, y, x) = buf[p + 1] * scale;
      img.at(2, y, x) = buf[p + 2] * scale;
    }
  }
  return img;
}

Mask read_mask_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  std::vector<uint8_t> buf = decode_png(path, 1, h, w);
  Mask m(h, w);
  m.data = std::move(buf);
  return m;
}

std::pair<int, int> read_png_size(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  uint8_t sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw std::runtime_error("not a PNG file: " + path.string());
  }
  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = png_create_info_struct(r.png);
  if (!r.png || !r.info) throw std::runtime_error("libpng init failed");
  if (setjmp(png_jmpbuf(r.png))) {
    throw std::runtime_error("PNG header error: " + path.string());
  }
  png_init_io(r.png, f.get());
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);
  return {static_cast<int>(png_get_image_height(r.png, r.info)),
          static_cast<int>(png_get_image_width(r.png, r.info))};
}

void write_image_png(const std::filesystem::path& path, const Image& img) {
  if (img.c != 3) throw std::runtime_error("write_image_png expects 3 channels");
  std::vector<uint8_t> buf(img.pixels() * 3);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        float v = img.at(ch, y, x);
        v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
        buf[(static_cast<size_t>(y) * img.w + x) * 3 + ch] =
            static_cast<uint8_t>(v * 255.0f + 0.5f);
      }
    }
  }
  encode_png(path, buf.data(), img.h, img.w, 3);
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  encode_png(path, mask.data.data(), mask.h, mask.w, 1);
}

}  // namespace dcaseg
