#include "gleason/explain/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "gleason/patchwork/png_io.hpp"

namespace gleason::explain {

using nn::LayerKind;
using nn::Tensor;

namespace {

template <typename T>
std::size_t pooling_index(const nn::Network<T>& net) {
  for (std::size_t i = net.size(); i-- > 0;) {
    const auto kind = net.layer(i).spec.kind;
    if (kind == LayerKind::global_max_pool || kind == LayerKind::global_avg_pool) return i;
  }
  throw usage_error("class activation maps need a network with a global pooling top");
}

template <typename T>
void check_input(const nn::Network<T>& net, const Tensor<T>& input) {
  const auto& s = input.shape();
  if (s.size() != net.input_shape().size() + 1 || s[0] != 1 ||
      !std::equal(net.input_shape().begin(), net.input_shape().end(), s.begin() + 1))
    throw data_error("explain input does not match the network input shape");
}

}  // namespace

template <typename T>
CamResult cam(const nn::Network<T>& net, const Tensor<T>& input, std::size_t target_class) {
  check_input(net, input);
  const std::size_t g = pooling_index(net);
  std::size_t logit = net.size();
  const auto last = net.layer(net.size() - 1).spec.kind;
  if (last == LayerKind::softmax || last == LayerKind::sigmoid) logit = net.size() - 1;

  const auto acts = net.forward(input);
  const auto& logits = acts.outputs[logit];
  if (target_class >= logits.size()) throw usage_error("class index " + std::to_string(target_class) + " out of range");
  Tensor<T> upstream(logits.shape());
  upstream[target_class] = T{1};
  nn::BackwardRange range;
  range.top = logit;
  range.bottom = g + 1;
  range.param_grads = false;
  const auto grads = net.backward(acts, upstream, range);

  const auto& maps = acts.outputs[g];  // (1, C, H, W)
  const std::size_t channels = maps.shape()[1], rows = maps.shape()[2], cols = maps.shape()[3];
  CamResult out;
  out.raw = FloatImage(rows, cols, 1, 0.0f);
  out.weights.resize(channels);
  std::vector<double> acc(rows * cols, 0.0);
  for (std::size_t i = 0; i < channels; ++i) {
    const double w = static_cast<double>(grads.input[i]);
    out.weights[i] = w;
    for (std::size_t p = 0; p < rows * cols; ++p) acc[p] += w * static_cast<double>(maps[i * rows * cols + p]);
  }
  for (std::size_t p = 0; p < rows * cols; ++p) out.raw.data[p] = static_cast<float>(acc[p]);
  return out;
}

CamHeatmap cam_postprocess(const FloatImage& raw, std::size_t rows, std::size_t cols) {
  if (raw.channels != 1 || raw.data.empty()) throw data_error("CAM map must be a non-empty single-channel image");
  CamHeatmap h;
  h.raw = raw;
  FloatImage norm(raw.rows, raw.cols, 1, 0.0f);
  GrayImage mask(raw.rows, raw.cols, 1, 0);
  const float peak = *std::max_element(raw.data.begin(), raw.data.end());
  if (peak > 0.0f) {
    for (std::size_t i = 0; i < raw.data.size(); ++i) {
      norm.data[i] = std::max(raw.data[i], 0.0f) / peak;
      mask.data[i] = norm.data[i] >= kCamMaskLevel;
    }
  } else {
    h.warnings.push_back("CAM has no positive values; heatmap left at zero");
  }
  h.normalized = resize_bilinear(norm, rows, cols);
  for (auto& v : h.normalized.data) v = std::clamp(v, 0.0f, 1.0f);
  h.mask = patchwork::resize_nearest(mask, rows, cols);
  return h;
}

template <typename T>
std::size_t conv_layer_index(const nn::Network<T>& net, std::size_t j) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < net.size(); ++i)
    if (net.layer(i).spec.kind == LayerKind::conv2d && ++seen == j) return i;
  throw usage_error("network has no convolution layer " + std::to_string(j));
}

template <typename T>
AmResult activation_maximization(const nn::Network<T>& net, std::size_t layer, std::size_t filter,
                                 const AmConfig& config) {
  if (layer >= net.size()) throw usage_error("layer index " + std::to_string(layer) + " out of range");
  const auto& out_shape = net.layer(layer).output_shape;
  if (out_shape.empty() || filter >= out_shape[0])
    throw usage_error("filter " + std::to_string(filter) + " out of range for layer '" + net.layer(layer).spec.name + "'");
  const nn::Network<T> sub = net.prefix(layer + 1);

  nn::Shape shape{1};
  shape.insert(shape.end(), net.input_shape().begin(), net.input_shape().end());
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(kAmInitMean, kAmInitStddev);
  Tensor<T> x(shape);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<T>(std::clamp(gauss(rng), 0.0, 1.0));

  std::size_t plane = 1;
  for (std::size_t d = 1; d < out_shape.size(); ++d) plane *= out_shape[d];
  nn::Shape up_shape{1};
  up_shape.insert(up_shape.end(), out_shape.begin(), out_shape.end());
  Tensor<T> upstream(up_shape);
  for (std::size_t p = 0; p < plane; ++p) upstream[filter * plane + p] = T{-1};

  AmResult r;
  r.initial = x.template cast<double>();
  nn::BackwardRange range;
  range.param_grads = false;
  for (std::size_t step = 0;; ++step) {
    const auto acts = sub.forward(x);
    double loss = 0.0;
    for (std::size_t p = 0; p < plane; ++p) loss -= static_cast<double>(acts.output()[filter * plane + p]);
    r.trace.push_back(loss);
    if (step == config.steps) break;
    const auto grads = sub.backward(acts, upstream, range);
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = static_cast<T>(std::clamp(static_cast<double>(x[i]) - config.step_size * static_cast<double>(grads.input[i]), 0.0, 1.0));
  }
  r.image = x.template cast<double>();
  return r;
}

void write_cam_pngs(const std::filesystem::path& dir, const std::string& name, const CamHeatmap& heatmap) {
  std::filesystem::create_directories(dir);
  patchwork::write_png(dir / ("cam_" + name + ".png"), patchwork::to_u8(heatmap.normalized));
  GrayImage mask = heatmap.mask;
  for (auto& v : mask.data) v = v ? 255 : 0;
  patchwork::write_png(dir / ("cam_mask_" + name + ".png"), mask);
}

void write_am_outputs(const std::filesystem::path& dir, std::size_t layer_ordinal, std::size_t filter,
                      const AmResult& result) {
  std::filesystem::create_directories(dir);
  const auto& s = result.image.shape();
  std::vector<float> data(result.image.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(result.image[i]);
  const FloatImage img = patchwork::from_chw(data.data(), s[1], s[2], s[3]);
  patchwork::write_png(dir / ("am_layer" + std::to_string(layer_ordinal) + "_filter" + std::to_string(filter) + ".png"),
                       patchwork::to_u8(img));
  std::ofstream out(dir / "am_trace.csv");
  if (!out) throw data_error("cannot write am_trace.csv in " + dir.string());
  out.precision(17);
  out << "step,loss\n";
  for (std::size_t i = 0; i < result.trace.size(); ++i) out << i << ',' << result.trace[i] << '\n';
}

template CamResult cam(const nn::Network<float>&, const Tensor<float>&, std::size_t);
template CamResult cam(const nn::Network<double>&, const Tensor<double>&, std::size_t);
template AmResult activation_maximization(const nn::Network<float>&, std::size_t, std::size_t, const AmConfig&);
template AmResult activation_maximization(const nn::Network<double>&, std::size_t, std::size_t, const AmConfig&);
template std::size_t conv_layer_index(const nn::Network<float>&, std::size_t);
template std::size_t conv_layer_index(const nn::Network<double>&, std::size_t);

}  // namespace gleason::explain
