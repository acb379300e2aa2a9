#include "dqrp/adam.hpp"

#include "dqrp/error.hpp"

#include <cmath>

namespace dqrp {

AdamState::AdamState(const ReQUNetwork& net, AdamConfig config)
    : config_(config), first_(Gradients::zeros_like(net)), second_(Gradients::zeros_like(net)) {
  if (!(config_.learning_rate > 0.0) || config_.beta1 < 0.0 || config_.beta1 >= 1.0 ||
      config_.beta2 < 0.0 || config_.beta2 >= 1.0 || config_.epsilon < 0.0) {
    throw ConfigError("invalid Adam hyperparameters");
  }
}

void AdamState::update(ReQUNetwork& net, const Gradients& grads) {
  const std::size_t layers = net.num_layers();
  if (grads.weights.size() != layers || grads.biases.size() != layers ||
      first_.weights.size() != layers) {
    throw UsageError("gradient layout does not match the network");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (grads.weights[l].rows() != net.weights()[l].rows() ||
        grads.weights[l].cols() != net.weights()[l].cols() ||
        grads.biases[l].size() != net.biases()[l].size() ||
        first_.weights[l].rows() != net.weights()[l].rows() ||
        first_.weights[l].cols() != net.weights()[l].cols()) {
      throw UsageError("gradient layout does not match the network");
    }
  }

  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;

  auto apply = [&](auto& param, const auto& g, auto& m, auto& v) {
    m.array() = b1 * m.array() + (1.0 - b1) * g.array();
    v.array() = b2 * v.array() + (1.0 - b2) * g.array().square();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < layers; ++l) {
    apply(net.weights()[l], grads.weights[l], first_.weights[l], second_.weights[l]);
    apply(net.biases()[l], grads.biases[l], first_.biases[l], second_.biases[l]);
  }
}

void adam_step(AdamState& state, ReQUNetwork& net, const Gradients& grads) {
  state.update(net, grads);
}

}  // namespace dqrp
