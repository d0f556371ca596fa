#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gleason/nn/network.hpp"
#include "gleason/patchwork/image.hpp"

namespace gleason::explain {

using patchwork::FloatImage;
using patchwork::GrayImage;

struct CamResult {
  FloatImage raw;              // sum_i w_i A_i at the resolution of the pooled maps
  std::vector<double> weights;  // d(logit_c) / d(pooled feature i)
};

// The network must contain a global max or average pooling layer; A_i are
// its input maps. The logit is the input of the final softmax or sigmoid
// (the network output if there is none). `input` is (1, C, H, W).
template <typename T>
CamResult cam(const nn::Network<T>& net, const nn::Tensor<T>& input, std::size_t target_class);

struct CamHeatmap {
  FloatImage raw;
  FloatImage normalized;  // input resolution, values in [0, 1]
  GrayImage mask;         // input resolution, 1 where normalized >= 0.75
  std::vector<std::string> warnings;
};

inline constexpr double kCamMaskLevel = 0.75;

// Clip at 0, divide by the maximum, threshold, then resize: bilinear for the
// map, nearest for the mask. An all-nonpositive map gives zeros and a warning.
CamHeatmap cam_postprocess(const FloatImage& raw, std::size_t rows, std::size_t cols);

struct AmConfig {
  std::size_t steps = 100;
  double step_size = 0.1;
  std::uint64_t seed = 1;
};

inline constexpr double kAmInitMean = 0.5;
inline constexpr double kAmInitStddev = 0.15;

struct AmResult {
  nn::Tensor<double> initial;  // (1, C, H, W)
  nn::Tensor<double> image;
  std::vector<double> trace;  // loss of each iterate, steps + 1 values
};

// Gradient descent on the input for L = -sum over positions of the output
// of layer `layer` at channel `filter` (the layer output itself, before any
// following activation). Pixels are clamped to [0, 1] after every step.
template <typename T>
AmResult activation_maximization(const nn::Network<T>& net, std::size_t layer, std::size_t filter,
                                 const AmConfig& config);

// Index of the j-th convolution layer, 1-based.
template <typename T>
std::size_t conv_layer_index(const nn::Network<T>& net, std::size_t j);

// cam_<name>.png and cam_mask_<name>.png, 8-bit.
void write_cam_pngs(const std::filesystem::path& dir, const std::string& name, const CamHeatmap& heatmap);
// am_layer<j>_filter<i>.png and am_trace.csv (step,loss).
void write_am_outputs(const std::filesystem::path& dir, std::size_t layer_ordinal, std::size_t filter,
                      const AmResult& result);

}  // namespace gleason::explain
