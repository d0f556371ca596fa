#include "gleason/nn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gleason::nn {

namespace {

double safe_log(double p) { return std::log(std::max(p, kProbabilityFloor)); }

void check_target(int t, std::size_t classes) {
  if (t < 0 || static_cast<std::size_t>(t) >= classes)
    throw data_error("target class " + std::to_string(t) + " outside [0, " + std::to_string(classes) + ")");
}

}  // namespace

ClassWeights ClassWeights::from_counts(std::span<const std::size_t> counts) {
  if (counts.empty()) throw data_error("class weights need at least one class");
  std::size_t total = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw data_error("class " + std::to_string(c) + " has no samples");
    total += counts[c];
  }
  ClassWeights w;
  const double classes = static_cast<double>(counts.size());
  for (auto n : counts) w.weights.push_back(classes * static_cast<double>(total) / static_cast<double>(n));
  return w;
}

ClassWeights ClassWeights::uniform(std::size_t classes) { return ClassWeights{std::vector<double>(classes, 1.0)}; }

template <typename T>
LossResult<T> weighted_cross_entropy(const Tensor<T>& probabilities, std::span<const int> targets,
                                     const ClassWeights& weights) {
  if (probabilities.rank() != 2) throw data_error("cross-entropy expects (batch, classes) probabilities");
  const std::size_t batch = probabilities.dim(0);
  const std::size_t classes = probabilities.dim(1);
  if (targets.size() != batch) throw data_error("cross-entropy: target count does not match batch size");
  if (weights.classes() != classes) throw data_error("cross-entropy: weight count does not match class count");
  LossResult<T> result{0.0, Tensor<T>(probabilities.shape())};
  const double scale = 1.0 / (static_cast<double>(classes) * static_cast<double>(batch));
  for (std::size_t n = 0; n < batch; ++n) {
    check_target(targets[n], classes);
    const auto t = static_cast<std::size_t>(targets[n]);
    const double w = weights.weights[t];
    const T* p = probabilities.data() + n * classes;
    result.loss -= scale * w * safe_log(static_cast<double>(p[t]));
    T* g = result.grad.data() + n * classes;
    for (std::size_t k = 0; k < classes; ++k)
      g[k] = static_cast<T>(scale * w * (static_cast<double>(p[k]) - (k == t ? 1.0 : 0.0)));
  }
  return result;
}

double weighted_cross_entropy(std::span<const double> predicted, std::span<const double> target,
                              const ClassWeights& weights, std::vector<double>* grad_logits) {
  const std::size_t classes = predicted.size();
  if (target.size() != classes || weights.classes() != classes)
    throw data_error("cross-entropy: prediction, target and weight lengths differ");
  double sum = 0.0;
  for (double p : predicted) sum += p;
  if (std::abs(sum - 1.0) > 1e-6) throw data_error("cross-entropy: predicted probabilities sum to " + std::to_string(sum));
  std::size_t ones = 0;
  for (double y : target) {
    if (y != 0.0 && y != 1.0) throw data_error("cross-entropy: target is not one-hot");
    ones += y == 1.0;
  }
  if (ones != 1) throw data_error("cross-entropy: target is not one-hot");

  const double inv_c = 1.0 / static_cast<double>(classes);
  double loss = 0.0;
  double weighted_mass = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    loss -= inv_c * weights.weights[c] * target[c] * safe_log(predicted[c]);
    weighted_mass += weights.weights[c] * target[c];
  }
  if (grad_logits) {
    grad_logits->resize(classes);
    for (std::size_t k = 0; k < classes; ++k)
      (*grad_logits)[k] = inv_c * (weighted_mass * predicted[k] - weights.weights[k] * target[k]);
  }
  return loss;
}

template <typename T>
LossResult<T> binary_cross_entropy(const Tensor<T>& probabilities, std::span<const int> targets) {
  const std::size_t batch = probabilities.batch();
  if (probabilities.size() != batch) throw data_error("binary cross-entropy expects one probability per sample");
  if (targets.size() != batch) throw data_error("binary cross-entropy: target count does not match batch size");
  LossResult<T> result{0.0, Tensor<T>(probabilities.shape())};
  for (std::size_t n = 0; n < batch; ++n) {
    double g = 0.0;
    result.loss += binary_cross_entropy(static_cast<double>(probabilities[n]), targets[n], &g) / static_cast<double>(batch);
    result.grad[n] = static_cast<T>(g / static_cast<double>(batch));
  }
  return result;
}

double binary_cross_entropy(double predicted, int target, double* grad_logit) {
  if (target != 0 && target != 1) throw data_error("binary cross-entropy: target must be 0 or 1");
  const double p = std::clamp(predicted, kProbabilityFloor, 1.0 - kProbabilityFloor);
  if (grad_logit) *grad_logit = predicted - target;
  return target == 1 ? -std::log(p) : -std::log(1.0 - p);
}

template <typename T>
LossResult<T> multi_head_cross_entropy(const Tensor<T>& probabilities, std::size_t heads,
                                       std::span<const int> targets) {
  if (probabilities.rank() != 2 || heads == 0 || probabilities.dim(1) % heads != 0)
    throw data_error("multi-head cross-entropy expects (batch, heads * classes) probabilities");
  const std::size_t batch = probabilities.dim(0);
  const std::size_t classes = probabilities.dim(1) / heads;
  if (targets.size() != batch * heads) throw data_error("multi-head cross-entropy: wrong target count");
  LossResult<T> result{0.0, Tensor<T>(probabilities.shape())};
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t h = 0; h < heads; ++h) {
      check_target(targets[n * heads + h], classes);
      const auto t = static_cast<std::size_t>(targets[n * heads + h]);
      const std::size_t base = (n * heads + h) * classes;
      result.loss -= inv_batch * safe_log(static_cast<double>(probabilities[base + t]));
      for (std::size_t k = 0; k < classes; ++k)
        result.grad[base + k] =
            static_cast<T>(inv_batch * (static_cast<double>(probabilities[base + k]) - (k == t ? 1.0 : 0.0)));
    }
  return result;
}

template LossResult<float> weighted_cross_entropy(const Tensor<float>&, std::span<const int>, const ClassWeights&);
template LossResult<double> weighted_cross_entropy(const Tensor<double>&, std::span<const int>, const ClassWeights&);
template LossResult<float> binary_cross_entropy(const Tensor<float>&, std::span<const int>);
template LossResult<double> binary_cross_entropy(const Tensor<double>&, std::span<const int>);
template LossResult<float> multi_head_cross_entropy(const Tensor<float>&, std::size_t, std::span<const int>);
template LossResult<double> multi_head_cross_entropy(const Tensor<double>&, std::size_t, std::span<const int>);

}  // namespace gleason::nn
