#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <vector>

#include "gleason/nn/kernels.hpp"

namespace gleason::nn::parallel {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Unfolds one sample (C, H, W) into a (C*KH*KW, OH*OW) column matrix whose
// rows are `ld` elements apart.
template <typename T>
void im2col(const ConvGeometry& g, const T* sample, T* cols, std::size_t ld = 0) {
  const std::size_t plane = g.out_h * g.out_w;
  if (ld == 0) ld = plane;
  for (std::size_t ic = 0; ic < g.in_channels; ++ic)
    for (std::size_t kh = 0; kh < g.kernel_h; ++kh)
      for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
        T* row = cols + ((ic * g.kernel_h + kh) * g.kernel_w + kw) * ld;
        const T* src = sample + ic * g.in_h * g.in_w;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad_top);
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src_row = src + static_cast<std::size_t>(ih) * g.in_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.pad_left);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) ? T{0} : src_row[iw];
          }
        }
      }
}

// Inverse of im2col: accumulates a column matrix back into one sample.
template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* sample) {
  const std::size_t plane = g.out_h * g.out_w;
  std::fill(sample, sample + g.in_channels * g.in_h * g.in_w, T{0});
  for (std::size_t ic = 0; ic < g.in_channels; ++ic)
    for (std::size_t kh = 0; kh < g.kernel_h; ++kh)
      for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
        const T* row = cols + ((ic * g.kernel_h + kh) * g.kernel_w + kw) * plane;
        T* dst = sample + ic * g.in_h * g.in_w;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* dst_row = dst + static_cast<std::size_t>(ih) * g.in_w;
          const T* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in_w)) dst_row[iw] += src[ow];
          }
        }
      }
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output) {
  const auto k = static_cast<Eigen::Index>(g.patch_size());
  const auto plane = static_cast<Eigen::Index>(g.out_h * g.out_w);
  const auto oc = static_cast<Eigen::Index>(g.out_channels);
  const std::size_t in_stride = g.in_channels * g.in_h * g.in_w;
  ConstMatrixMap<T> w(weight, oc, k);
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
#pragma omp parallel
  {
    std::vector<T> cols(static_cast<std::size_t>(k * plane));
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < batch; ++n) {
      im2col(g, input + static_cast<std::size_t>(n) * in_stride, cols.data());
      MatrixMap<T> out(output + static_cast<std::size_t>(n * oc * plane), oc, plane);
      out.noalias() = w * ConstMatrixMap<T>(cols.data(), k, plane);
      if (bias)
        for (Eigen::Index c = 0; c < oc; ++c) out.row(c).array() += bias[c];
    }
  }
}

// Samples per weight-gradient GEMM, bounded so the unfolded group stays
// within a fixed memory budget.
constexpr std::size_t kGroupedWeightThreshold = std::size_t{1} << 17;

inline std::size_t weight_group_size(const ConvGeometry& g) {
  constexpr std::size_t kBudget = std::size_t{16} << 20;  // elements
  const std::size_t per_sample = (g.patch_size() + g.out_channels) * g.out_h * g.out_w;
  return std::clamp<std::size_t>(kBudget / std::max<std::size_t>(per_sample, 1), 1, g.batch);
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output, T* grad_input,
                     T* grad_weight, T* grad_bias) {
  const auto k = static_cast<Eigen::Index>(g.patch_size());
  const std::size_t plane = g.out_h * g.out_w;
  const auto oc = static_cast<Eigen::Index>(g.out_channels);
  const std::size_t in_stride = g.in_channels * g.in_h * g.in_w;
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
  ConstMatrixMap<T> w(weight, oc, k);

  if (grad_weight && g.weight_size() < kGroupedWeightThreshold) {
    // Small filters: per-sample products summed in sample order.
    const std::size_t wsize = g.weight_size();
    std::vector<T> partial(g.batch * wsize);
#pragma omp parallel
    {
      std::vector<T> cols(static_cast<std::size_t>(k) * plane);
#pragma omp for schedule(static)
      for (std::ptrdiff_t n = 0; n < batch; ++n) {
        ConstMatrixMap<T> dy(grad_output + static_cast<std::size_t>(n) * g.out_channels * plane, oc,
                             static_cast<Eigen::Index>(plane));
        im2col(g, input + static_cast<std::size_t>(n) * in_stride, cols.data());
        MatrixMap<T> dw(partial.data() + static_cast<std::size_t>(n) * wsize, oc, k);
        dw.noalias() = dy * ConstMatrixMap<T>(cols.data(), k, static_cast<Eigen::Index>(plane)).transpose();
      }
#pragma omp for schedule(static)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(wsize); ++i) {
        T acc{0};
        for (std::size_t n = 0; n < g.batch; ++n) acc += partial[n * wsize + static_cast<std::size_t>(i)];
        grad_weight[i] = acc;
      }
    }
  } else if (grad_weight) {
    // Large filters: dW = [dy_1 .. dy_G] [cols_1 .. cols_G]^T, one GEMM per
    // group of samples, which avoids a per-sample copy of the whole tensor.
    const std::size_t group = weight_group_size(g);
    std::vector<T> cols(static_cast<std::size_t>(k) * group * plane);
    std::vector<T> dys(g.out_channels * group * plane);
    for (std::size_t first = 0; first < g.batch; first += group) {
      const std::size_t count = std::min(group, g.batch - first);
      const std::size_t ld = count * plane;
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(count); ++j) {
        const std::size_t n = first + static_cast<std::size_t>(j);
        im2col(g, input + n * in_stride, cols.data() + static_cast<std::size_t>(j) * plane, ld);
        for (std::size_t c = 0; c < g.out_channels; ++c)
          std::copy_n(grad_output + (n * g.out_channels + c) * plane, plane,
                      dys.data() + c * ld + static_cast<std::size_t>(j) * plane);
      }
      ConstMatrixMap<T> cm(cols.data(), k, static_cast<Eigen::Index>(ld));
      ConstMatrixMap<T> dm(dys.data(), oc, static_cast<Eigen::Index>(ld));
      MatrixMap<T> dw(grad_weight, oc, k);
      if (first == 0)
        dw.noalias() = dm * cm.transpose();
      else
        dw.noalias() += dm * cm.transpose();
    }
  }

  if (grad_input) {
#pragma omp parallel
    {
      std::vector<T> cols(static_cast<std::size_t>(k) * plane);
#pragma omp for schedule(static)
      for (std::ptrdiff_t n = 0; n < batch; ++n) {
        ConstMatrixMap<T> dy(grad_output + static_cast<std::size_t>(n) * g.out_channels * plane, oc,
                             static_cast<Eigen::Index>(plane));
        MatrixMap<T> dcols(cols.data(), k, static_cast<Eigen::Index>(plane));
        dcols.noalias() = w.transpose() * dy;
        col2im(g, cols.data(), grad_input + static_cast<std::size_t>(n) * in_stride);
      }
    }
  }

  if (grad_bias) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index c = 0; c < oc; ++c) {
      T acc{0};
      for (std::size_t n = 0; n < g.batch; ++n) {
        const T* row = grad_output + (n * g.out_channels + static_cast<std::size_t>(c)) * plane;
        for (std::size_t p = 0; p < plane; ++p) acc += row[p];
      }
      grad_bias[c] = acc;
    }
  }
}

template <typename T>
void max_pool_forward(const PoolGeometry& g, const T* input, T* output) {
  const auto planes = static_cast<std::ptrdiff_t>(g.batch * g.channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const T* src = input + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    T* dst = output + static_cast<std::size_t>(p) * g.out_h * g.out_w;
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        for (std::size_t kh = 0; kh < g.window; ++kh) {
          const T* row = src + (oh * g.stride + kh) * g.in_w + ow * g.stride;
          for (std::size_t kw = 0; kw < g.window; ++kw) best = row[kw] > best ? row[kw] : best;
        }
        dst[oh * g.out_w + ow] = best;
      }
  }
}

template <typename T>
void max_pool_backward(const PoolGeometry& g, const T* input, const T* grad_output, T* grad_input) {
  const auto planes = static_cast<std::ptrdiff_t>(g.batch * g.channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const T* src = input + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    T* dst = grad_input + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    const T* go = grad_output + static_cast<std::size_t>(p) * g.out_h * g.out_w;
    std::fill(dst, dst + g.in_h * g.in_w, T{0});
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        std::size_t arg = 0;
        T best = -std::numeric_limits<T>::infinity();
        for (std::size_t kh = 0; kh < g.window; ++kh)
          for (std::size_t kw = 0; kw < g.window; ++kw) {
            const std::size_t idx = (oh * g.stride + kh) * g.in_w + ow * g.stride + kw;
            if (src[idx] > best) {
              best = src[idx];
              arg = idx;
            }
          }
        dst[arg] += go[oh * g.out_w + ow];
      }
  }
}

template <typename T>
void dense_forward(std::size_t batch, std::size_t in_features, std::size_t out_features, const T* input,
                   const T* weight, const T* bias, T* output) {
  const auto n = static_cast<Eigen::Index>(batch);
  const auto in = static_cast<Eigen::Index>(in_features);
  const auto out = static_cast<Eigen::Index>(out_features);
  MatrixMap<T> y(output, n, out);
  y.noalias() = ConstMatrixMap<T>(input, n, in) * ConstMatrixMap<T>(weight, out, in).transpose();
  if (bias) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias, out);
    y.rowwise() += b;
  }
}

template <typename T>
void dense_backward(std::size_t batch, std::size_t in_features, std::size_t out_features, const T* input,
                    const T* weight, const T* grad_output, T* grad_input, T* grad_weight, T* grad_bias) {
  const auto n = static_cast<Eigen::Index>(batch);
  const auto in = static_cast<Eigen::Index>(in_features);
  const auto out = static_cast<Eigen::Index>(out_features);
  ConstMatrixMap<T> dy(grad_output, n, out);
  if (grad_input) MatrixMap<T>(grad_input, n, in).noalias() = dy * ConstMatrixMap<T>(weight, out, in);
  if (grad_weight) MatrixMap<T>(grad_weight, out, in).noalias() = dy.transpose() * ConstMatrixMap<T>(input, n, in);
  if (grad_bias) {
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(grad_bias, out);
    db = dy.colwise().sum();
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

}  // namespace gleason::nn::parallel
