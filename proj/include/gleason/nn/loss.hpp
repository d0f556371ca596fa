#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gleason/nn/tensor.hpp"

namespace gleason::nn {

// Probabilities are floored at this value before taking logarithms.
inline constexpr double kProbabilityFloor = 1e-12;

// Per-class loss weights w_c = (C * N) / N_c with N = sum of the counts.
struct ClassWeights {
  std::vector<double> weights;

  static ClassWeights from_counts(std::span<const std::size_t> counts);
  static ClassWeights uniform(std::size_t classes);
  std::size_t classes() const { return weights.size(); }
};

template <typename T>
struct LossResult {
  double loss = 0.0;     // mean over the batch
  Tensor<T> grad;        // w.r.t. the pre-activation logits, same shape as the predictions
};

// L = -(1/C) sum_c w_c y_c log(p_c), averaged over the batch. `probabilities`
// is (N, C) softmax output; the gradient is taken through that softmax.
template <typename T>
LossResult<T> weighted_cross_entropy(const Tensor<T>& probabilities, std::span<const int> targets,
                                     const ClassWeights& weights);

// Single-sample form over explicit vectors. Validates that `predicted` sums to
// one and `target` is one-hot. Returns the loss; writes d loss / d logits.
double weighted_cross_entropy(std::span<const double> predicted, std::span<const double> target,
                              const ClassWeights& weights, std::vector<double>* grad_logits = nullptr);

// -[t log p + (1 - t) log(1 - p)] averaged over the batch; probabilities
// (N, 1) are sigmoid outputs and the gradient is w.r.t. the sigmoid input.
template <typename T>
LossResult<T> binary_cross_entropy(const Tensor<T>& probabilities, std::span<const int> targets);

double binary_cross_entropy(double predicted, int target, double* grad_logit = nullptr);

// Sum over heads of the plain categorical cross-entropy -sum_c y_c log p_c,
// for a grouped softmax output (N, heads * C). targets[n * heads + h] is the
// class of head h for sample n.
template <typename T>
LossResult<T> multi_head_cross_entropy(const Tensor<T>& probabilities, std::size_t heads,
                                       std::span<const int> targets);

}  // namespace gleason::nn
