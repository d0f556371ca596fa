#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gleason/nn/network.hpp"

namespace gleason::nn {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer_kind(const std::string& text);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.01;
  // When set, lr(e) = lr0 * (1 - e / decay_epochs) for 0-based epoch e.
  bool linear_decay = false;
  std::size_t decay_epochs = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

double scheduled_learning_rate(const OptimizerConfig& config, std::size_t epoch);

template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  // Applies one update at learning rate `lr`. Frozen layers are skipped. The
  // whole step is rejected (numeric error naming the layer) if any gradient
  // of a trainable tensor is non-finite.
  void step(Network<T>& net, const Gradients<T>& grads, double lr);

  const OptimizerConfig& config() const { return config_; }
  std::size_t steps_taken() const { return steps_; }

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  std::vector<std::vector<std::vector<double>>> first_moment_, second_moment_;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace gleason::nn
