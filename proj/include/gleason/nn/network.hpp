#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gleason/nn/layer.hpp"
#include "gleason/nn/tensor.hpp"

namespace gleason::nn {

enum class Mode { inference, training };

template <typename T>
struct Layer {
  LayerSpec spec;
  Shape input_shape;   // per sample
  Shape output_shape;  // per sample
  std::vector<Tensor<T>> params;  // conv: {weight (F,C,KH,KW), bias (F)}; dense: {weight (U,I), bias (U)}
};

// Everything a backward pass needs from the matching forward pass.
// outputs[0] is the network input, outputs[i + 1] the output of layer i.
template <typename T>
struct Activations {
  std::vector<Tensor<T>> outputs;
  std::vector<Tensor<T>> dropout_masks;  // empty tensor for layers without a mask

  const Tensor<T>& output() const { return outputs.back(); }
};

template <typename T>
struct Gradients {
  std::vector<std::vector<Tensor<T>>> params;  // per layer, parallel to Layer::params
  Tensor<T> input;                             // w.r.t. outputs[bottom]
};

// Portion of the network a backward pass walks: the upstream gradient is taken
// with respect to outputs[top] and propagated down to outputs[bottom].
struct BackwardRange {
  std::size_t top = static_cast<std::size_t>(-1);  // default: network output
  std::size_t bottom = 0;
  bool param_grads = true;
  bool input_grad = true;
};

// Sequential network over the layer zoo. Value type: copies are deep.
// Training mutates it and must not share it across threads; const methods
// are safe to call concurrently.
template <typename T>
class Network {
 public:
  Network() = default;
  Network(Shape input_shape, std::uint64_t seed);

  // Appends a layer, deriving its shapes and drawing He-initialized weights
  // (zero biases) from a stream seeded by (seed, layer index).
  Network& add(LayerSpec spec);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return layers_.empty() ? input_shape_ : layers_.back().output_shape; }
  std::size_t size() const { return layers_.size(); }
  const Layer<T>& layer(std::size_t i) const { return layers_.at(i); }
  Layer<T>& layer(std::size_t i) { return layers_.at(i); }
  const std::vector<Layer<T>>& layers() const { return layers_; }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::uint64_t seed() const { return seed_; }
  std::map<std::string, std::string>& tags() { return tags_; }
  const std::map<std::string, std::string>& tags() const { return tags_; }
  std::uint64_t trained_epochs() const { return trained_epochs_; }
  void set_trained_epochs(std::uint64_t epochs) { trained_epochs_ = epochs; }

  std::size_t parameter_count() const;
  std::size_t trainable_parameter_count() const;
  // Sets the frozen flag on layers [0, last] and clears it elsewhere.
  void freeze_through(std::size_t last);
  void unfreeze_all();

  // First `count` layers (weights included), as a new network.
  Network prefix(std::size_t count) const;

  Activations<T> forward(const Tensor<T>& input, Mode mode = Mode::inference,
                         std::mt19937_64* rng = nullptr) const;
  Tensor<T> predict(const Tensor<T>& input) const;

  Gradients<T> backward(const Activations<T>& acts, const Tensor<T>& upstream, BackwardRange range = {}) const;

  template <typename U>
  Network<U> cast() const {
    Network<U> out;
    out.input_shape_ = input_shape_;
    out.seed_ = seed_;
    out.tags_ = tags_;
    out.trained_epochs_ = trained_epochs_;
    for (const auto& l : layers_) {
      Layer<U> copy{l.spec, l.input_shape, l.output_shape, {}};
      for (const auto& p : l.params) copy.params.push_back(p.template cast<U>());
      out.layers_.push_back(std::move(copy));
    }
    return out;
  }

  // Used by deserialization: appends a fully formed layer after validating
  // its parameter shapes.
  void append_layer(Layer<T> layer);

 private:
  template <typename U>
  friend class Network;

  void check_record(const Activations<T>& acts) const;

  Shape input_shape_;
  std::uint64_t seed_ = 0;
  std::vector<Layer<T>> layers_;
  std::map<std::string, std::string> tags_;
  std::uint64_t trained_epochs_ = 0;
};

// Output shape of `spec` applied to a per-sample `input` shape; throws a
// data error naming the layer when the input is unsuitable.
Shape infer_output_shape(const LayerSpec& spec, const Shape& input);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace gleason::nn
