#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gleason/error.hpp"
#include "gleason/nn/tensor.hpp"

namespace gleason::patchwork {

// Interleaved (row, col, channel) raster.
template <typename T>
struct Image {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(std::size_t r, std::size_t c, std::size_t ch, T fill = T{}) : rows(r), cols(c), channels(ch), data(r * c * ch, fill) {}

  T& at(std::size_t r, std::size_t c, std::size_t ch = 0) { return data[(r * cols + c) * channels + ch]; }
  const T& at(std::size_t r, std::size_t c, std::size_t ch = 0) const { return data[(r * cols + c) * channels + ch]; }
  std::size_t pixels() const { return rows * cols; }
  bool same_size(const auto& other) const { return rows == other.rows && cols == other.cols; }

  friend bool operator==(const Image&, const Image&) = default;
};

using RgbImage = Image<std::uint8_t>;   // 3 channels
using GrayImage = Image<std::uint8_t>;  // 1 channel
using FloatImage = Image<float>;

// 8-bit to [0, 1] floats and back (rounded, clamped).
FloatImage to_float(const Image<std::uint8_t>& img);
Image<std::uint8_t> to_u8(const FloatImage& img);

// Window [top, top + size) x [left, left + size); positions outside the image
// read as zero.
template <typename T>
Image<T> extract_window(const Image<T>& img, std::ptrdiff_t top, std::ptrdiff_t left, std::size_t size) {
  Image<T> out(size, size, img.channels, T{});
  for (std::size_t r = 0; r < size; ++r) {
    const std::ptrdiff_t sr = top + static_cast<std::ptrdiff_t>(r);
    if (sr < 0 || sr >= static_cast<std::ptrdiff_t>(img.rows)) continue;
    for (std::size_t c = 0; c < size; ++c) {
      const std::ptrdiff_t sc = left + static_cast<std::ptrdiff_t>(c);
      if (sc < 0 || sc >= static_cast<std::ptrdiff_t>(img.cols)) continue;
      for (std::size_t ch = 0; ch < img.channels; ++ch)
        out.at(r, c, ch) = img.at(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc), ch);
    }
  }
  return out;
}

// Bilinear resampling with pixel-centre alignment and edge clamping.
FloatImage resize_bilinear(const FloatImage& img, std::size_t rows, std::size_t cols);
// Nearest-neighbour resampling with pixel-centre alignment.
template <typename T>
Image<T> resize_nearest(const Image<T>& img, std::size_t rows, std::size_t cols) {
  Image<T> out(rows, cols, img.channels);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto sr = std::min(img.rows - 1, static_cast<std::size_t>((static_cast<double>(r) + 0.5) * img.rows / rows));
    for (std::size_t c = 0; c < cols; ++c) {
      const auto sc =
          std::min(img.cols - 1, static_cast<std::size_t>((static_cast<double>(c) + 0.5) * img.cols / cols));
      for (std::size_t ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
    }
  }
  return out;
}

// (channels, rows, cols) tensor view of an image, for network input.
nn::Tensor<float> to_chw_tensor(const FloatImage& img);
FloatImage from_chw(const float* data, std::size_t channels, std::size_t rows, std::size_t cols);

}  // namespace gleason::patchwork
