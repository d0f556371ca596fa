#include "gleason/nn/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace gleason::nn {

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "sgd" || text == "SGD") return OptimizerKind::sgd;
  if (text == "adam" || text == "Adam") return OptimizerKind::adam;
  throw usage_error("unknown optimizer '" + text + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

double scheduled_learning_rate(const OptimizerConfig& config, std::size_t epoch) {
  if (!config.linear_decay || config.decay_epochs == 0) return config.learning_rate;
  const double frac = static_cast<double>(epoch) / static_cast<double>(config.decay_epochs);
  return config.learning_rate * std::max(0.0, 1.0 - frac);
}

template <typename T>
void Optimizer<T>::step(Network<T>& net, const Gradients<T>& grads, double lr) {
  if (grads.params.size() != net.size()) throw data_error("optimizer: gradient record does not match the network");
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& layer = net.layer(i);
    if (layer.spec.frozen || layer.params.empty()) continue;
    if (grads.params[i].size() != layer.params.size())
      throw data_error("optimizer: missing gradients for layer '" + layer.spec.name + "'");
    for (std::size_t p = 0; p < layer.params.size(); ++p) {
      if (grads.params[i][p].shape() != layer.params[p].shape())
        throw data_error("optimizer: gradient shape mismatch in layer '" + layer.spec.name + "'");
      if (!grads.params[i][p].all_finite())
        throw numeric_error("non-finite gradient in layer '" + layer.spec.name + "'; step rejected");
    }
  }

  ++steps_;
  if (config_.kind == OptimizerKind::adam && first_moment_.size() != net.size()) {
    first_moment_.assign(net.size(), {});
    second_moment_.assign(net.size(), {});
  }
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));

  for (std::size_t i = 0; i < net.size(); ++i) {
    auto& layer = net.layer(i);
    if (layer.spec.frozen || layer.params.empty()) continue;
    for (std::size_t p = 0; p < layer.params.size(); ++p) {
      auto& theta = layer.params[p];
      const auto& g = grads.params[i][p];
      if (config_.kind == OptimizerKind::sgd) {
        for (std::size_t k = 0; k < theta.size(); ++k)
          theta[k] = static_cast<T>(static_cast<double>(theta[k]) - lr * static_cast<double>(g[k]));
        continue;
      }
      auto& m_layer = first_moment_[i];
      auto& v_layer = second_moment_[i];
      if (m_layer.size() != layer.params.size()) {
        m_layer.assign(layer.params.size(), {});
        v_layer.assign(layer.params.size(), {});
      }
      auto& m = m_layer[p];
      auto& v = v_layer[p];
      if (m.size() != theta.size()) {
        m.assign(theta.size(), 0.0);
        v.assign(theta.size(), 0.0);
      }
      for (std::size_t k = 0; k < theta.size(); ++k) {
        const double gk = static_cast<double>(g[k]);
        m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * gk;
        v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * gk * gk;
        const double update = lr * (m[k] / bias1) / (std::sqrt(v[k] / bias2) + config_.epsilon);
        theta[k] = static_cast<T>(static_cast<double>(theta[k]) - update);
      }
    }
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace gleason::nn
