#include "gleason/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gleason/nn/kernels.hpp"

namespace gleason::nn {

namespace {

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::max_pool2d, "max_pool2d"},
    {LayerKind::relu, "relu"},
    {LayerKind::global_max_pool, "global_max_pool"},
    {LayerKind::global_avg_pool, "global_avg_pool"},
    {LayerKind::fully_connected, "fully_connected"},
    {LayerKind::dropout, "dropout"},
    {LayerKind::softmax, "softmax"},
    {LayerKind::sigmoid, "sigmoid"},
};

std::string layer_label(const LayerSpec& spec) {
  return "layer '" + spec.name + "' (" + std::string(to_string(spec.kind)) + ")";
}

bool is_spatial(const Shape& s) { return s.size() == 3; }

Shape batched(std::size_t batch, const Shape& sample) {
  Shape s{batch};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

template <typename T>
ConvGeometry conv_geometry_of(const Layer<T>& l, std::size_t batch) {
  return conv_geometry(batch, l.input_shape[0], l.input_shape[1], l.input_shape[2], l.spec.filters, l.spec.kernel_h,
                       l.spec.kernel_w, l.spec.stride, l.spec.padding == Padding::same);
}

template <typename T>
PoolGeometry pool_geometry_of(const Layer<T>& l, std::size_t batch) {
  return pool_geometry(batch, l.input_shape[0], l.input_shape[1], l.input_shape[2], l.spec.window, l.spec.stride);
}

std::uint64_t layer_stream_seed(std::uint64_t seed, std::size_t index) {
  // splitmix64 finalizer over (seed, index)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

template <typename T>
void forward_layer(const Layer<T>& l, const Tensor<T>& in, Tensor<T>& out, Tensor<T>& mask, Mode mode,
                   std::mt19937_64* rng) {
  const std::size_t batch = in.batch();
  out = Tensor<T>(batched(batch, l.output_shape));
  const std::size_t n_in = in.size();
  switch (l.spec.kind) {
    case LayerKind::conv2d:
      parallel::conv2d_forward(conv_geometry_of(l, batch), in.data(), l.params[0].data(), l.params[1].data(),
                               out.data());
      break;
    case LayerKind::max_pool2d:
      parallel::max_pool_forward(pool_geometry_of(l, batch), in.data(), out.data());
      break;
    case LayerKind::relu:
      for (std::size_t i = 0; i < n_in; ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
      break;
    case LayerKind::sigmoid:
      for (std::size_t i = 0; i < n_in; ++i) out[i] = T{1} / (T{1} + std::exp(-in[i]));
      break;
    case LayerKind::softmax: {
      const std::size_t features = n_in / batch;
      const std::size_t width = features / l.spec.groups;
      for (std::size_t g = 0; g < batch * l.spec.groups; ++g) {
        const T* x = in.data() + g * width;
        T* y = out.data() + g * width;
        const T peak = *std::max_element(x, x + width);
        T total{0};
        for (std::size_t k = 0; k < width; ++k) total += (y[k] = std::exp(x[k] - peak));
        for (std::size_t k = 0; k < width; ++k) y[k] /= total;
      }
      break;
    }
    case LayerKind::global_max_pool:
    case LayerKind::global_avg_pool: {
      const std::size_t plane = l.input_shape[1] * l.input_shape[2];
      const bool use_max = l.spec.kind == LayerKind::global_max_pool;
      const auto planes = static_cast<std::ptrdiff_t>(batch * l.input_shape[0]);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t p = 0; p < planes; ++p) {
        const T* x = in.data() + static_cast<std::size_t>(p) * plane;
        if (use_max) {
          out[static_cast<std::size_t>(p)] = *std::max_element(x, x + plane);
        } else {
          T acc{0};
          for (std::size_t k = 0; k < plane; ++k) acc += x[k];
          out[static_cast<std::size_t>(p)] = acc / static_cast<T>(plane);
        }
      }
      break;
    }
    case LayerKind::fully_connected:
      parallel::dense_forward(batch, n_in / batch, l.spec.units, in.data(), l.params[0].data(), l.params[1].data(),
                              out.data());
      break;
    case LayerKind::dropout: {
      if (mode == Mode::inference || l.spec.drop_probability <= 0.0) {
        std::copy(in.data(), in.data() + n_in, out.data());
        mask = Tensor<T>();
        break;
      }
      if (!rng) throw usage_error(layer_label(l.spec) + ": training-mode forward needs a random generator");
      mask = Tensor<T>(in.shape());
      const T keep_scale = static_cast<T>(1.0 / (1.0 - l.spec.drop_probability));
      std::bernoulli_distribution keep(1.0 - l.spec.drop_probability);
      for (std::size_t i = 0; i < n_in; ++i) {
        mask[i] = keep(*rng) ? keep_scale : T{0};
        out[i] = in[i] * mask[i];
      }
      break;
    }
  }
}

template <typename T>
void backward_layer(const Layer<T>& l, const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& mask,
                    const Tensor<T>& grad_out, Tensor<T>* grad_in, std::vector<Tensor<T>>* param_grads) {
  const std::size_t batch = in.batch();
  const std::size_t n_in = in.size();
  if (grad_in) *grad_in = Tensor<T>(in.shape());
  T* gi = grad_in ? grad_in->data() : nullptr;
  const T* go = grad_out.data();
  switch (l.spec.kind) {
    case LayerKind::conv2d:
      parallel::conv2d_backward(conv_geometry_of(l, batch), in.data(), l.params[0].data(), go, gi,
                                param_grads ? (*param_grads)[0].data() : nullptr,
                                param_grads ? (*param_grads)[1].data() : nullptr);
      break;
    case LayerKind::fully_connected:
      parallel::dense_backward(batch, n_in / batch, l.spec.units, in.data(), l.params[0].data(), go, gi,
                               param_grads ? (*param_grads)[0].data() : nullptr,
                               param_grads ? (*param_grads)[1].data() : nullptr);
      break;
    case LayerKind::max_pool2d:
      if (gi) parallel::max_pool_backward(pool_geometry_of(l, batch), in.data(), go, gi);
      break;
    case LayerKind::relu:
      if (gi)
        for (std::size_t i = 0; i < n_in; ++i) gi[i] = in[i] > T{0} ? go[i] : T{0};
      break;
    case LayerKind::sigmoid:
      if (gi)
        for (std::size_t i = 0; i < n_in; ++i) gi[i] = go[i] * out[i] * (T{1} - out[i]);
      break;
    case LayerKind::softmax:
      if (gi) {
        const std::size_t width = n_in / batch / l.spec.groups;
        for (std::size_t g = 0; g < batch * l.spec.groups; ++g) {
          const T* y = out.data() + g * width;
          const T* d = go + g * width;
          T dot{0};
          for (std::size_t k = 0; k < width; ++k) dot += y[k] * d[k];
          for (std::size_t k = 0; k < width; ++k) gi[g * width + k] = y[k] * (d[k] - dot);
        }
      }
      break;
    case LayerKind::global_max_pool:
    case LayerKind::global_avg_pool:
      if (gi) {
        const std::size_t plane = l.input_shape[1] * l.input_shape[2];
        const bool use_max = l.spec.kind == LayerKind::global_max_pool;
        const auto planes = static_cast<std::ptrdiff_t>(batch * l.input_shape[0]);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t p = 0; p < planes; ++p) {
          const T* x = in.data() + static_cast<std::size_t>(p) * plane;
          T* dst = gi + static_cast<std::size_t>(p) * plane;
          const T g = go[p];
          if (use_max) {
            dst[std::max_element(x, x + plane) - x] = g;  // first maximum in scan order
          } else {
            std::fill(dst, dst + plane, g / static_cast<T>(plane));
          }
        }
      }
      break;
    case LayerKind::dropout:
      if (gi) {
        if (mask.empty())
          std::copy(go, go + n_in, gi);
        else
          for (std::size_t i = 0; i < n_in; ++i) gi[i] = go[i] * mask[i];
      }
      break;
  }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames)
    if (name == text) return k;
  throw data_error("unknown layer kind '" + std::string(text) + "'");
}

Shape infer_output_shape(const LayerSpec& spec, const Shape& input) {
  const auto fail = [&](const std::string& why) {
    return data_error(layer_label(spec) + ": " + why + " (input shape " + shape_string(input) + ")");
  };
  switch (spec.kind) {
    case LayerKind::conv2d: {
      if (!is_spatial(input)) throw fail("expects a (channels, height, width) input");
      if (spec.filters == 0) throw fail("needs a positive filter count");
      const auto g = conv_geometry(1, input[0], input[1], input[2], spec.filters, spec.kernel_h, spec.kernel_w,
                                   spec.stride, spec.padding == Padding::same);
      return {spec.filters, g.out_h, g.out_w};
    }
    case LayerKind::max_pool2d: {
      if (!is_spatial(input)) throw fail("expects a (channels, height, width) input");
      if (input[1] < spec.window || input[2] < spec.window) throw fail("input smaller than the pooling window");
      const auto g = pool_geometry(1, input[0], input[1], input[2], spec.window, spec.stride);
      return {input[0], g.out_h, g.out_w};
    }
    case LayerKind::global_max_pool:
    case LayerKind::global_avg_pool:
      if (!is_spatial(input)) throw fail("expects a (channels, height, width) input");
      return {input[0]};
    case LayerKind::fully_connected:
      if (spec.units == 0) throw fail("needs a positive unit count");
      return {spec.units};
    case LayerKind::softmax:
      if (spec.groups == 0 || shape_size(input) % spec.groups != 0)
        throw fail("feature count is not divisible by the softmax group count");
      return input;
    case LayerKind::dropout:
      if (spec.drop_probability < 0.0 || spec.drop_probability >= 1.0)
        throw fail("drop probability must lie in [0, 1)");
      return input;
    case LayerKind::relu:
    case LayerKind::sigmoid:
      return input;
  }
  throw fail("unsupported layer kind");
}

template <typename T>
Network<T>::Network(Shape input_shape, std::uint64_t seed) : input_shape_(std::move(input_shape)), seed_(seed) {
  if (input_shape_.empty() || shape_size(input_shape_) == 0) throw data_error("network input shape must be non-empty");
}

template <typename T>
Network<T>& Network<T>::add(LayerSpec spec) {
  if (spec.name.empty()) spec.name = std::string(to_string(spec.kind)) + "_" + std::to_string(layers_.size() + 1);
  if (find(spec.name)) throw data_error("duplicate layer name '" + spec.name + "'");
  Layer<T> l;
  l.input_shape = output_shape();
  l.output_shape = infer_output_shape(spec, l.input_shape);
  l.spec = std::move(spec);

  std::mt19937_64 rng(layer_stream_seed(seed_, layers_.size()));
  std::size_t fan_in = 0;
  if (l.spec.kind == LayerKind::conv2d) {
    fan_in = l.input_shape[0] * l.spec.kernel_h * l.spec.kernel_w;
    l.params.emplace_back(Shape{l.spec.filters, l.input_shape[0], l.spec.kernel_h, l.spec.kernel_w});
    l.params.emplace_back(Shape{l.spec.filters});
  } else if (l.spec.kind == LayerKind::fully_connected) {
    fan_in = shape_size(l.input_shape);
    l.params.emplace_back(Shape{l.spec.units, fan_in});
    l.params.emplace_back(Shape{l.spec.units});
  }
  if (fan_in > 0) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (auto& w : l.params[0].storage()) w = static_cast<T>(normal(rng));
  }
  layers_.push_back(std::move(l));
  return *this;
}

template <typename T>
void Network<T>::append_layer(Layer<T> layer) {
  if (find(layer.spec.name)) throw data_error("duplicate layer name '" + layer.spec.name + "'");
  layer.input_shape = output_shape();
  layer.output_shape = infer_output_shape(layer.spec, layer.input_shape);
  std::vector<Shape> expected;
  if (layer.spec.kind == LayerKind::conv2d)
    expected = {{layer.spec.filters, layer.input_shape[0], layer.spec.kernel_h, layer.spec.kernel_w},
                {layer.spec.filters}};
  else if (layer.spec.kind == LayerKind::fully_connected)
    expected = {{layer.spec.units, shape_size(layer.input_shape)}, {layer.spec.units}};
  if (layer.params.size() != expected.size()) throw data_error(layer_label(layer.spec) + ": wrong parameter count");
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (layer.params[i].shape() != expected[i])
      throw data_error(layer_label(layer.spec) + ": parameter " + std::to_string(i) + " has shape " +
                       shape_string(layer.params[i].shape()) + ", expected " + shape_string(expected[i]));
  layers_.push_back(std::move(layer));
}

template <typename T>
std::optional<std::size_t> Network<T>::find(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].spec.name == name) return i;
  return std::nullopt;
}

template <typename T>
std::size_t Network<T>::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw data_error("network has no layer named '" + std::string(name) + "'");
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_)
    for (const auto& p : l.params) n += p.size();
  return n;
}

template <typename T>
std::size_t Network<T>::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_)
    if (!l.spec.frozen)
      for (const auto& p : l.params) n += p.size();
  return n;
}

template <typename T>
void Network<T>::freeze_through(std::size_t last) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].spec.frozen = i <= last;
}

template <typename T>
void Network<T>::unfreeze_all() {
  for (auto& l : layers_) l.spec.frozen = false;
}

template <typename T>
Network<T> Network<T>::prefix(std::size_t count) const {
  Network out = *this;
  out.layers_.resize(std::min(count, layers_.size()));
  return out;
}

template <typename T>
Activations<T> Network<T>::forward(const Tensor<T>& input, Mode mode, std::mt19937_64* rng) const {
  if (input.rank() != input_shape_.size() + 1 || input.sample_shape() != input_shape_) {
    const std::string who = layers_.empty() ? std::string("network input") : layer_label(layers_.front().spec);
    throw data_error(who + " expects per-sample input " + shape_string(input_shape_) + ", got batch tensor " +
                     shape_string(input.shape()));
  }
  Activations<T> acts;
  acts.outputs.reserve(layers_.size() + 1);
  acts.outputs.push_back(input);
  acts.dropout_masks.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Tensor<T> out;
    forward_layer(layers_[i], acts.outputs.back(), out, acts.dropout_masks[i], mode, rng);
    acts.outputs.push_back(std::move(out));
  }
  return acts;
}

template <typename T>
Tensor<T> Network<T>::predict(const Tensor<T>& input) const {
  auto acts = forward(input, Mode::inference);
  return std::move(acts.outputs.back());
}

template <typename T>
void Network<T>::check_record(const Activations<T>& acts) const {
  if (acts.outputs.size() != layers_.size() + 1 || acts.dropout_masks.size() != layers_.size())
    throw data_error("activation record has " + std::to_string(acts.outputs.size()) + " entries, network expects " +
                     std::to_string(layers_.size() + 1));
  const std::size_t batch = acts.outputs.front().batch();
  if (acts.outputs.front().sample_shape() != input_shape_)
    throw data_error("activation record input shape does not match the network input");
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (acts.outputs[i + 1].shape() != batched(batch, layers_[i].output_shape))
      throw data_error("activation record does not match " + layer_label(layers_[i].spec) + ": got " +
                       shape_string(acts.outputs[i + 1].shape()));
}

template <typename T>
Gradients<T> Network<T>::backward(const Activations<T>& acts, const Tensor<T>& upstream, BackwardRange range) const {
  check_record(acts);
  const std::size_t top = std::min(range.top, layers_.size());
  if (range.bottom > top) throw usage_error("backward: bottom layer above top layer");
  if (upstream.shape() != acts.outputs[top].shape())
    throw data_error("backward: upstream gradient shape " + shape_string(upstream.shape()) + " does not match " +
                     shape_string(acts.outputs[top].shape()));

  Gradients<T> grads;
  grads.params.resize(layers_.size());
  for (std::size_t i = range.bottom; i < top; ++i)
    if (range.param_grads)
      for (const auto& p : layers_[i].params) grads.params[i].emplace_back(p.shape());

  Tensor<T> current = upstream;
  for (std::size_t i = top; i-- > range.bottom;) {
    const auto& l = layers_[i];
    const bool want_params = range.param_grads && !l.params.empty() && !l.spec.frozen;
    const bool want_input = i > range.bottom || range.input_grad;
    Tensor<T> next;
    backward_layer(l, acts.outputs[i], acts.outputs[i + 1], acts.dropout_masks[i], current,
                   want_input ? &next : nullptr, want_params ? &grads.params[i] : nullptr);
    if (!want_input) break;
    current = std::move(next);
  }
  if (range.input_grad) grads.input = std::move(current);
  return grads;
}

template class Network<float>;
template class Network<double>;

}  // namespace gleason::nn
