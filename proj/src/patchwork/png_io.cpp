#include "gleason/patchwork/png_io.hpp"

#include <cstdio>
#include <memory>

#include <png.h>

namespace gleason::patchwork {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image<std::uint8_t> read_png(const std::filesystem::path& path, std::size_t channels) {
  if (channels != 1 && channels != 3) throw usage_error("read_png: channels must be 1 or 3");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw data_error("cannot read PNG " + path.string() + ": " + image.message);
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image<std::uint8_t> out(image.height, image.width, channels);
  if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw data_error("cannot decode PNG " + path.string() + ": " + message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image<std::uint8_t>& img) {
  if (img.channels != 1 && img.channels != 3) throw usage_error("write_png: channels must be 1 or 3");
  // The low-level API is used so that output bytes do not depend on library
  // defaults that vary by version (compression level, filters, timestamps).
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw data_error("cannot write PNG " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw data_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw data_error("failed writing PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols), static_cast<png_uint_32>(img.rows), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_write_info(png, info);
  const std::size_t stride = img.cols * img.channels;
  for (std::size_t r = 0; r < img.rows; ++r)
    png_write_row(png, const_cast<png_bytep>(img.data.data() + r * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace gleason::patchwork
