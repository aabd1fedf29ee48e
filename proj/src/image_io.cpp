#include "slsnet/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "slsnet/error.hpp"

namespace slsnet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

[[noreturn]] void on_png_error(png_structp png, png_const_charp msg) {
  auto* where = static_cast<std::string*>(png_get_error_ptr(png));
  throw FormatError(*where + ": " + msg);
}

void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

Image8 read_png(const std::filesystem::path& path) {
  File f = open(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError(path.string() + ": not a PNG file");
  }
  std::string where = path.string();
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &where, on_png_error, on_png_warning);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};

  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  // Palette entries are 8-bit regardless of index width.
  if (depth != 8 && color != PNG_COLOR_TYPE_PALETTE) {
    throw FormatError(path.string() + ": bit depth " + std::to_string(depth) + " is not 8");
  }
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Image8 img;
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.channels = png_get_channels(png, info);
  if (img.channels != 1 && img.channels != 3) {
    throw FormatError(path.string() + ": unsupported channel count " + std::to_string(img.channels));
  }
  img.pixels.resize(img.width * img.height * img.channels);
  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * img.width * img.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw FormatError("write_png: unsupported channel count " + std::to_string(img.channels));
  }
  if (img.pixels.size() != img.width * img.height * img.channels) {
    throw DimensionError("write_png: pixel buffer does not match extents");
  }
  File f = open(path, "wb");
  std::string where = path.string();
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &where, on_png_error, on_png_warning);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};

  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               8, img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y) {
    png_write_row(png, img.pixels.data() + y * img.width * img.channels);
  }
  png_write_end(png, nullptr);
  if (std::fflush(f.get()) != 0) throw IoError("cannot write " + path.string());
}

}  // namespace slsnet
