#include "gleason/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace gleason::nn {

namespace {

double weighted_sum(const Tensor<double>& out, const Tensor<double>& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * w[i];
  return acc;
}

std::vector<std::size_t> sample_indices(std::size_t size, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (size <= count) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport gradient_check(const Network<double>& net, const Tensor<double>& input,
                               const Tensor<double>& loss_weights, const GradCheckOptions& options) {
  const std::uint64_t mask_seed = options.seed ^ 0xD1B54A32D192ED03ull;
  const auto evaluate = [&](const Network<double>& n, const Tensor<double>& x) {
    std::mt19937_64 rng(mask_seed);
    return n.forward(x, Mode::training, &rng);
  };

  const auto acts = evaluate(net, input);
  if (acts.output().shape() != loss_weights.shape())
    throw data_error("gradient_check: loss weights must match the network output shape");
  auto grads = net.backward(acts, loss_weights);
  if (options.tamper) options.tamper(grads);

  GradCheckReport report;
  std::mt19937_64 pick(options.seed);
  Network<double> probe = net;
  const double eps = options.epsilon;

  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& layer = net.layer(i);
    if (layer.params.empty()) continue;
    LayerGradCheck check{layer.spec.name};
    for (std::size_t p = 0; p < layer.params.size(); ++p) {
      const auto& analytic = grads.params[i][p];
      for (std::size_t k : sample_indices(layer.params[p].size(), options.samples_per_layer, pick)) {
        double& theta = probe.layer(i).params[p][k];
        const double saved = theta;
        theta = saved + eps;
        const double up = weighted_sum(evaluate(probe, input).output(), loss_weights);
        theta = saved - eps;
        const double down = weighted_sum(evaluate(probe, input).output(), loss_weights);
        theta = saved;
        // Frozen layers receive zero gradients by contract; compare their
        // true derivative only when the layer is trainable.
        const double numeric = layer.spec.frozen ? 0.0 : (up - down) / (2.0 * eps);
        check.max_relative_error =
            std::max(check.max_relative_error, relative_error(analytic[k], numeric, options.denominator_floor));
        ++check.checked;
      }
    }
    check.passed = check.max_relative_error < options.threshold;
    report.layers.push_back(check);
  }

  LayerGradCheck input_check{"input"};
  Tensor<double> x = input;
  for (std::size_t k : sample_indices(x.size(), options.samples_per_layer, pick)) {
    const double saved = x[k];
    x[k] = saved + eps;
    const double up = weighted_sum(evaluate(net, x).output(), loss_weights);
    x[k] = saved - eps;
    const double down = weighted_sum(evaluate(net, x).output(), loss_weights);
    x[k] = saved;
    input_check.max_relative_error = std::max(
        input_check.max_relative_error, relative_error(grads.input[k], (up - down) / (2.0 * eps), options.denominator_floor));
    ++input_check.checked;
  }
  input_check.passed = input_check.max_relative_error < options.threshold;
  report.layers.push_back(input_check);

  for (const auto& l : report.layers) {
    report.passed = report.passed && l.passed;
    report.max_relative_error = std::max(report.max_relative_error, l.max_relative_error);
  }
  return report;
}

}  // namespace gleason::nn
