#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace gleason::nn {

enum class LayerKind {
  conv2d,
  max_pool2d,
  relu,
  global_max_pool,
  global_avg_pool,
  fully_connected,
  dropout,
  softmax,
  sigmoid,
};

enum class Padding { same, valid };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

// Declarative description of one layer. Only the fields relevant to `kind`
// are meaningful; the helpers in `layers::` fill them consistently.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t filters = 0;
  std::size_t stride = 1;
  Padding padding = Padding::same;
  std::size_t window = 0;
  std::size_t units = 0;
  double drop_probability = 0.0;
  // softmax over `groups` equal, contiguous slices of the feature vector
  // (several classification heads sharing one output layer).
  std::size_t groups = 1;
  bool frozen = false;

  bool has_parameters() const { return kind == LayerKind::conv2d || kind == LayerKind::fully_connected; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

namespace layers {

inline LayerSpec conv2d(std::string name, std::size_t kernel_h, std::size_t kernel_w, std::size_t filters,
                        std::size_t stride = 1, Padding padding = Padding::same) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.name = std::move(name);
  s.kernel_h = kernel_h;
  s.kernel_w = kernel_w;
  s.filters = filters;
  s.stride = stride;
  s.padding = padding;
  return s;
}

inline LayerSpec max_pool2d(std::string name, std::size_t window, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::max_pool2d;
  s.name = std::move(name);
  s.window = window;
  s.stride = stride;
  return s;
}

inline LayerSpec fully_connected(std::string name, std::size_t units) {
  LayerSpec s;
  s.kind = LayerKind::fully_connected;
  s.name = std::move(name);
  s.units = units;
  return s;
}

inline LayerSpec dropout(std::string name, double probability) {
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.name = std::move(name);
  s.drop_probability = probability;
  return s;
}

inline LayerSpec softmax(std::string name, std::size_t groups = 1) {
  LayerSpec s;
  s.kind = LayerKind::softmax;
  s.name = std::move(name);
  s.groups = groups;
  return s;
}

inline LayerSpec simple(LayerKind kind, std::string name) {
  LayerSpec s;
  s.kind = kind;
  s.name = std::move(name);
  return s;
}

inline LayerSpec relu(std::string name) { return simple(LayerKind::relu, std::move(name)); }
inline LayerSpec sigmoid(std::string name) { return simple(LayerKind::sigmoid, std::move(name)); }
inline LayerSpec global_max_pool(std::string name) { return simple(LayerKind::global_max_pool, std::move(name)); }
inline LayerSpec global_avg_pool(std::string name) { return simple(LayerKind::global_avg_pool, std::move(name)); }

}  // namespace layers

}  // namespace gleason::nn
