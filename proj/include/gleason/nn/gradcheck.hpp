#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gleason/nn/network.hpp"

namespace gleason::nn {

struct GradCheckOptions {
  double epsilon = 1e-6;
  std::size_t samples_per_layer = 100;  // all entries when a layer has fewer
  double threshold = 1e-4;
  std::uint64_t seed = 7;
  // Floor on the relative-error denominator so that gradients which are both
  // (numerically) zero compare as equal.
  double denominator_floor = 1e-8;
  // Test hook: may tamper with the analytic gradients before comparison.
  std::function<void(Gradients<double>&)> tamper;
};

struct LayerGradCheck {
  std::string layer;
  std::size_t checked = 0;
  double max_relative_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<LayerGradCheck> layers;  // parameterized layers, then "input"
  bool passed = true;
  double max_relative_error = 0.0;
};

// Compares backpropagated gradients of the scalar loss sum(output * loss_weights)
// against central finite differences on a random subsample of parameters per
// layer and of input entries. Dropout layers run in training mode with a
// fixed mask so every evaluation sees the same function.
GradCheckReport gradient_check(const Network<double>& net, const Tensor<double>& input,
                               const Tensor<double>& loss_weights, const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor = 1e-8);

}  // namespace gleason::nn
