#include "gleason/patchwork/image.hpp"

#include <algorithm>
#include <cmath>

namespace gleason::patchwork {

FloatImage to_float(const Image<std::uint8_t>& img) {
  FloatImage out(img.rows, img.cols, img.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = static_cast<float>(img.data[i]) / 255.f;
  return out;
}

Image<std::uint8_t> to_u8(const FloatImage& img) {
  Image<std::uint8_t> out(img.rows, img.cols, img.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data[i], 0.f, 1.f) * 255.f));
  return out;
}

FloatImage resize_bilinear(const FloatImage& img, std::size_t rows, std::size_t cols) {
  if (img.rows == 0 || img.cols == 0 || rows == 0 || cols == 0) throw data_error("resize: empty image");
  FloatImage out(rows, cols, img.channels);
  const double sy = static_cast<double>(img.rows) / static_cast<double>(rows);
  const double sx = static_cast<double>(img.cols) / static_cast<double>(cols);
  const auto source = [](std::size_t dst, double scale, std::size_t extent, std::size_t& i0, std::size_t& i1,
                         double& frac) {
    const double pos = std::clamp((static_cast<double>(dst) + 0.5) * scale - 0.5, 0.0, static_cast<double>(extent - 1));
    i0 = static_cast<std::size_t>(pos);
    i1 = std::min(i0 + 1, extent - 1);
    frac = pos - static_cast<double>(i0);
  };
  const auto out_rows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ri = 0; ri < out_rows; ++ri) {
    const auto r = static_cast<std::size_t>(ri);
    std::size_t r0, r1;
    double fy;
    source(r, sy, img.rows, r0, r1, fy);
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t c0, c1;
      double fx;
      source(c, sx, img.cols, c0, c1, fx);
      for (std::size_t ch = 0; ch < img.channels; ++ch) {
        const double top = (1.0 - fx) * img.at(r0, c0, ch) + fx * img.at(r0, c1, ch);
        const double bottom = (1.0 - fx) * img.at(r1, c0, ch) + fx * img.at(r1, c1, ch);
        out.at(r, c, ch) = static_cast<float>((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

nn::Tensor<float> to_chw_tensor(const FloatImage& img) {
  nn::Tensor<float> t({img.channels, img.rows, img.cols});
  for (std::size_t ch = 0; ch < img.channels; ++ch)
    for (std::size_t r = 0; r < img.rows; ++r)
      for (std::size_t c = 0; c < img.cols; ++c) t[(ch * img.rows + r) * img.cols + c] = img.at(r, c, ch);
  return t;
}

FloatImage from_chw(const float* data, std::size_t channels, std::size_t rows, std::size_t cols) {
  FloatImage img(rows, cols, channels);
  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) img.at(r, c, ch) = data[(ch * rows + r) * cols + c];
  return img;
}

}  // namespace gleason::patchwork
