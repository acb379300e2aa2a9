#include "dqrp/adam.hpp"
#include "dqrp/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace dqrp;

namespace {

// A (1,1,1) network whose output bias serves as a scalar parameter.
ReQUNetwork scalar_net(double theta) {
  ReQUNetwork net(NetworkShape({1, 1, 1}));
  net.biases()[1](0) = theta;
  return net;
}

Gradients scalar_grad(const ReQUNetwork& net, double g) {
  Gradients grads = Gradients::zeros_like(net);
  grads.biases[1](0) = g;
  return grads;
}

}  // namespace

TEST_CASE("zero gradient leaves parameters unchanged") {
  ReQUNetwork net = scalar_net(0.7);
  net.weights()[0](0, 0) = 0.3;
  const ReQUNetwork before = net;
  AdamState state(net);
  adam_step(state, net, Gradients::zeros_like(net));
  CHECK(net == before);
  CHECK(state.step() == 1);
}

TEST_CASE("first step moves by lr regardless of the gradient scale") {
  for (double g : {1.0, 1e-3, 250.0, -4.0}) {
    ReQUNetwork net = scalar_net(0.0);
    AdamState state(net);
    adam_step(state, net, scalar_grad(net, g));
    // mhat = g, vhat = g^2: step = lr * g / (|g| + eps)
    const double expected = -0.01 * g / (std::abs(g) + 1e-8);
    CHECK(net.biases()[1](0) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("hand-evaluated second step") {
  ReQUNetwork net = scalar_net(0.0);
  AdamState state(net);
  adam_step(state, net, scalar_grad(net, 1.0));
  adam_step(state, net, scalar_grad(net, 3.0));
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * 3.0;
  const double v = 0.99 * 0.01 * 1.0 + 0.01 * 9.0;
  const double mhat = m / (1 - 0.81);
  const double vhat = v / (1 - 0.9801);
  const double expected = -0.01 / (1.0 + 1e-8) - 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
  CHECK(net.biases()[1](0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("quadratic convergence within 2000 steps") {
  ReQUNetwork net = scalar_net(1.0);
  AdamState state(net);
  int steps = 0;
  while (std::abs(net.biases()[1](0)) >= 1e-2 && steps < 2000) {
    adam_step(state, net, scalar_grad(net, net.biases()[1](0)));
    ++steps;
  }
  CHECK(std::abs(net.biases()[1](0)) < 1e-2);
}

TEST_CASE("shape mismatch and determinism") {
  ReQUNetwork net = scalar_net(0.0);
  AdamState state(net);
  const ReQUNetwork other(NetworkShape({2, 3, 1}));
  CHECK_THROWS_AS(adam_step(state, net, Gradients::zeros_like(other)), UsageError);
  CHECK_THROWS_AS(AdamState(net, AdamConfig{-1.0, 0.9, 0.99, 1e-8}), ConfigError);

  ReQUNetwork a = scalar_net(0.5), b = scalar_net(0.5);
  AdamState sa(a), sb(b);
  for (int i = 0; i < 50; ++i) {
    adam_step(sa, a, scalar_grad(a, std::sin(i) + a.biases()[1](0)));
    adam_step(sb, b, scalar_grad(b, std::sin(i) + b.biases()[1](0)));
  }
  CHECK(a == b);
}
