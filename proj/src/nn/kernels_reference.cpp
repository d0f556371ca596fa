#include <algorithm>
#include <limits>

#include "gleason/error.hpp"
#include "gleason/nn/kernels.hpp"

namespace gleason::nn {

ConvGeometry conv_geometry(std::size_t batch, std::size_t in_channels, std::size_t in_h, std::size_t in_w,
                           std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w, std::size_t stride,
                           bool same_padding) {
  if (stride == 0 || kernel_h == 0 || kernel_w == 0) throw data_error("conv2d: kernel and stride must be positive");
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = in_channels;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_channels = out_channels;
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = stride;
  if (same_padding) {
    g.out_h = (in_h + stride - 1) / stride;
    g.out_w = (in_w + stride - 1) / stride;
    const std::size_t need_h = (g.out_h - 1) * stride + kernel_h;
    const std::size_t need_w = (g.out_w - 1) * stride + kernel_w;
    g.pad_top = need_h > in_h ? (need_h - in_h) / 2 : 0;
    g.pad_left = need_w > in_w ? (need_w - in_w) / 2 : 0;
  } else {
    if (in_h < kernel_h || in_w < kernel_w) throw data_error("conv2d: input smaller than kernel with valid padding");
    g.out_h = (in_h - kernel_h) / stride + 1;
    g.out_w = (in_w - kernel_w) / stride + 1;
  }
  return g;
}

PoolGeometry pool_geometry(std::size_t batch, std::size_t channels, std::size_t in_h, std::size_t in_w,
                           std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw data_error("max_pool2d: window and stride must be positive");
  if (in_h < window || in_w < window) throw data_error("max_pool2d: input smaller than pooling window");
  PoolGeometry g{batch, channels, in_h, in_w, window, stride, (in_h - window) / stride + 1,
                 (in_w - window) / stride + 1};
  return g;
}

namespace reference {

namespace {

// Input coordinate for output position `o` and kernel tap `k`; false when it
// falls into the zero padding.
inline bool source_index(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad, std::size_t extent,
                         std::size_t& out) {
  const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(o * stride + k) - static_cast<std::ptrdiff_t>(pad);
  if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(extent)) return false;
  out = static_cast<std::size_t>(pos);
  return true;
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc)
      for (std::size_t oh = 0; oh < g.out_h; ++oh)
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          T acc = bias ? bias[oc] : T{0};
          for (std::size_t ic = 0; ic < g.in_channels; ++ic)
            for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
              std::size_t ih;
              if (!source_index(oh, kh, g.stride, g.pad_top, g.in_h, ih)) continue;
              for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
                std::size_t iw;
                if (!source_index(ow, kw, g.stride, g.pad_left, g.in_w, iw)) continue;
                acc += weight[((oc * g.in_channels + ic) * g.kernel_h + kh) * g.kernel_w + kw] *
                       input[((n * g.in_channels + ic) * g.in_h + ih) * g.in_w + iw];
              }
            }
          output[((n * g.out_channels + oc) * g.out_h + oh) * g.out_w + ow] = acc;
        }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output, T* grad_input,
                     T* grad_weight, T* grad_bias) {
  if (grad_input) std::fill(grad_input, grad_input + g.batch * g.in_channels * g.in_h * g.in_w, T{0});
  if (grad_weight) std::fill(grad_weight, grad_weight + g.weight_size(), T{0});
  if (grad_bias) std::fill(grad_bias, grad_bias + g.out_channels, T{0});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc)
      for (std::size_t oh = 0; oh < g.out_h; ++oh)
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          const T go = grad_output[((n * g.out_channels + oc) * g.out_h + oh) * g.out_w + ow];
          if (grad_bias) grad_bias[oc] += go;
          for (std::size_t ic = 0; ic < g.in_channels; ++ic)
            for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
              std::size_t ih;
              if (!source_index(oh, kh, g.stride, g.pad_top, g.in_h, ih)) continue;
              for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
                std::size_t iw;
                if (!source_index(ow, kw, g.stride, g.pad_left, g.in_w, iw)) continue;
                const std::size_t wi = ((oc * g.in_channels + ic) * g.kernel_h + kh) * g.kernel_w + kw;
                const std::size_t xi = ((n * g.in_channels + ic) * g.in_h + ih) * g.in_w + iw;
                if (grad_weight) grad_weight[wi] += go * input[xi];
                if (grad_input) grad_input[xi] += go * weight[wi];
              }
            }
        }
}

template <typename T>
void max_pool_forward(const PoolGeometry& g, const T* input, T* output) {
  for (std::size_t p = 0; p < g.batch * g.channels; ++p)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        for (std::size_t kh = 0; kh < g.window; ++kh)
          for (std::size_t kw = 0; kw < g.window; ++kw)
            best = std::max(best, input[(p * g.in_h + oh * g.stride + kh) * g.in_w + ow * g.stride + kw]);
        output[(p * g.out_h + oh) * g.out_w + ow] = best;
      }
}

template <typename T>
void max_pool_backward(const PoolGeometry& g, const T* input, const T* grad_output, T* grad_input) {
  std::fill(grad_input, grad_input + g.batch * g.channels * g.in_h * g.in_w, T{0});
  for (std::size_t p = 0; p < g.batch * g.channels; ++p)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        std::size_t arg = 0;
        T best = -std::numeric_limits<T>::infinity();
        for (std::size_t kh = 0; kh < g.window; ++kh)
          for (std::size_t kw = 0; kw < g.window; ++kw) {
            const std::size_t idx = (p * g.in_h + oh * g.stride + kh) * g.in_w + ow * g.stride + kw;
            if (input[idx] > best) {
              best = input[idx];
              arg = idx;
            }
          }
        grad_input[arg] += grad_output[(p * g.out_h + oh) * g.out_w + ow];
      }
}

template <typename T>
void dense_forward(std::size_t batch, std::size_t in_features, std::size_t out_features, const T* input,
                   const T* weight, const T* bias, T* output) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out_features; ++o) {
      T acc = bias ? bias[o] : T{0};
      for (std::size_t i = 0; i < in_features; ++i) acc += weight[o * in_features + i] * input[n * in_features + i];
      output[n * out_features + o] = acc;
    }
}

template <typename T>
void dense_backward(std::size_t batch, std::size_t in_features, std::size_t out_features, const T* input,
                    const T* weight, const T* grad_output, T* grad_input, T* grad_weight, T* grad_bias) {
  if (grad_input) std::fill(grad_input, grad_input + batch * in_features, T{0});
  if (grad_weight) std::fill(grad_weight, grad_weight + out_features * in_features, T{0});
  if (grad_bias) std::fill(grad_bias, grad_bias + out_features, T{0});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out_features; ++o) {
      const T go = grad_output[n * out_features + o];
      if (grad_bias) grad_bias[o] += go;
      for (std::size_t i = 0; i < in_features; ++i) {
        if (grad_weight) grad_weight[o * in_features + i] += go * input[n * in_features + i];
        if (grad_input) grad_input[n * in_features + i] += go * weight[o * in_features + i];
      }
    }
}

#define GLEASON_INSTANTIATE(T)                                                                                 \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);                     \
  template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, T*, T*);            \
  template void max_pool_forward<T>(const PoolGeometry&, const T*, T*);                                       \
  template void max_pool_backward<T>(const PoolGeometry&, const T*, const T*, T*);                            \
  template void dense_forward<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, const T*, T*);    \
  template void dense_backward<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, const T*, T*, T*, \
                                  T*);

GLEASON_INSTANTIATE(float)
GLEASON_INSTANTIATE(double)

#undef GLEASON_INSTANTIATE

}  // namespace reference
}  // namespace gleason::nn
