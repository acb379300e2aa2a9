#pragma once

#include "dqrp/network.hpp"

#include <cstdint>

namespace dqrp {

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

/// Moment accumulators for one network.
class AdamState {
 public:
  AdamState(const ReQUNetwork& net, AdamConfig config = {});

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step() const noexcept { return step_; }

  /// m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
  /// theta <- theta - lr * mhat / (sqrt(vhat) + eps) with bias-corrected mhat, vhat.
  void update(ReQUNetwork& net, const Gradients& grads);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  Gradients first_;
  Gradients second_;
};

/// Free-function form of AdamState::update.
void adam_step(AdamState& state, ReQUNetwork& net, const Gradients& grads);

}  // namespace dqrp
