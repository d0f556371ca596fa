#pragma once

// Compute kernels behind the layer zoo. Two implementations share one
// signature set: `reference` is a direct serial translation of the layer
// definitions and exists for testing; `parallel` is the OpenMP/GEMM path the
// network uses. Every parallel kernel assigns each output element to exactly
// one thread with a fixed accumulation order, so its results do not depend
// on the thread count.

#include <cstddef>

namespace gleason::nn {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1, in_h = 1, in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad_top = 0, pad_left = 0;
  std::size_t out_h = 1, out_w = 1;

  std::size_t patch_size() const { return in_channels * kernel_h * kernel_w; }
  std::size_t weight_size() const { return out_channels * patch_size(); }
};

// "same" padding (output = ceil(input / stride)) or "valid" padding.
ConvGeometry conv_geometry(std::size_t batch, std::size_t in_channels, std::size_t in_h, std::size_t in_w,
                           std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w, std::size_t stride,
                           bool same_padding);

struct PoolGeometry {
  std::size_t batch = 1, channels = 1;
  std::size_t in_h = 1, in_w = 1;
  std::size_t window = 2, stride = 2;
  std::size_t out_h = 1, out_w = 1;
};

PoolGeometry pool_geometry(std::size_t batch, std::size_t channels, std::size_t in_h, std::size_t in_w,
                           std::size_t window, std::size_t stride);

#define GLEASON_DECLARE_KERNELS                                                                                 \
  template <typename T>                                                                                        \
  void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output);        \
  /* Any of grad_input / grad_weight / grad_bias may be null to skip that term. */                             \
  template <typename T>                                                                                        \
  void conv2d_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output,            \
                       T* grad_input, T* grad_weight, T* grad_bias);                                            \
  template <typename T>                                                                                        \
  void max_pool_forward(const PoolGeometry& g, const T* input, T* output);                                     \
  /* Ties route the gradient to the first maximal position in scan order. */                                   \
  template <typename T>                                                                                        \
  void max_pool_backward(const PoolGeometry& g, const T* input, const T* grad_output, T* grad_input);          \
  /* weight is (out_features, in_features) row-major. */                                                       \
  template <typename T>                                                                                        \
  void dense_forward(std::size_t batch, std::size_t in_features, std::size_t out_features, const T* input,     \
                     const T* weight, const T* bias, T* output);                                               \
  template <typename T>                                                                                        \
  void dense_backward(std::size_t batch, std::size_t in_features, std::size_t out_features, const T* input,    \
                      const T* weight, const T* grad_output, T* grad_input, T* grad_weight, T* grad_bias);

namespace reference {
GLEASON_DECLARE_KERNELS
}  // namespace reference

namespace parallel {
GLEASON_DECLARE_KERNELS
}  // namespace parallel

#undef GLEASON_DECLARE_KERNELS

}  // namespace gleason::nn
