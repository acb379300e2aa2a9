#include "dqrp/error.hpp"
#include "dqrp/network.hpp"
#include "support/test_nets.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace dqrp;
using dqrp::testing::min_abs_preactivation;
using dqrp::testing::naive_forward;
using dqrp::testing::random_network;

namespace {

std::size_t brute_force_parameter_count(const ReQUNetwork& net) {
  std::size_t n = 0;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (Eigen::Index r = 0; r < net.weights()[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < net.weights()[l].cols(); ++c) ++n;
      ++n;
    }
  }
  return n;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("shape validation") {
  CHECK_THROWS_AS(NetworkShape({2, 1}), ConfigError);
  CHECK_THROWS_AS(NetworkShape({2, 0, 1}), ConfigError);
  CHECK_THROWS_AS(NetworkShape({2, 3, 2}), ConfigError);
  CHECK_NOTHROW(NetworkShape({2, 1, 1}));
}

TEST_CASE("network counts") {
  auto c = network_counts(ReQUNetwork(NetworkShape({2, 4, 1})));
  CHECK(c.depth == 1);
  CHECK(c.width == 4);
  CHECK(c.neurons == 4);
  CHECK(c.size == 17);

  const std::size_t expected = 256 * (9 + 1) + 2 * (256 * 257) + 1 * (256 + 1);
  CHECK(expected == 134401);
  ReQUNetwork big(NetworkShape({9, 256, 256, 256, 1}));
  c = network_counts(big);
  CHECK(c.depth == 3);
  CHECK(c.width == 256);
  CHECK(c.neurons == 768);
  CHECK(c.size == expected);
  CHECK(brute_force_parameter_count(big) == expected);
  CHECK(big.flat_parameters().size() == expected);

  c = network_counts(ReQUNetwork(NetworkShape({2, 1, 1})));
  CHECK(c.depth == 1);
  CHECK(c.width == 1);
  CHECK(c.neurons == 1);
  CHECK(c.size == 5);

  std::mt19937_64 gen(3);
  for (int k = 0; k < 20; ++k) {
    std::vector<std::size_t> widths{1 + gen() % 4};
    const std::size_t depth = 1 + gen() % 4;
    for (std::size_t i = 0; i < depth; ++i) widths.push_back(1 + gen() % 9);
    widths.push_back(1);
    ReQUNetwork net(NetworkShape{widths});
    CHECK(network_counts(net).size == brute_force_parameter_count(net));
  }
}

TEST_CASE("init is deterministic, glorot-bounded, zero-bias") {
  const NetworkShape shape({2, 4, 1});
  const ReQUNetwork a = init_network(shape, 7);
  const ReQUNetwork b = init_network(shape, 7);
  CHECK(a == b);
  CHECK_FALSE(a == init_network(shape, 8));
  for (const auto& bias : a.biases()) CHECK(bias.isZero(0.0));
  CHECK(a.weights()[0].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 6.0));
  CHECK(a.weights()[1].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 5.0));
}

TEST_CASE("forward on the square gadget") {
  ReQUNetwork net(NetworkShape({1, 2, 1}));
  net.weights()[0] << 1.0, -1.0;
  net.weights()[1] << 1.0, 1.0;
  const std::vector<double> in{3.0};
  CHECK(forward(net, in) == 9.0);
  const std::vector<double> neg{-3.0};
  CHECK(forward(net, neg) == 9.0);

  // zero first-layer image and zero output bias
  net.weights()[0].setZero();
  CHECK(forward(net, in) == 0.0);

  const std::vector<double> wrong{1.0, 2.0};
  CHECK_THROWS_AS(forward(net, wrong), ShapeError);
}

TEST_CASE("batched forward agrees with a plain loop") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    const ReQUNetwork net = random_network({3, 7, 5, 1}, gen);
    Matrix inputs(3, 16);
    for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = u(gen);
    const Vector out = forward_batch(net, inputs);
    for (Eigen::Index j = 0; j < 16; ++j) {
      std::vector<double> col(inputs.col(j).data(), inputs.col(j).data() + 3);
      CHECK(rel_err(out(j), naive_forward(net, col)) <= 1e-12);
      CHECK(rel_err(forward(net, col), naive_forward(net, col)) <= 1e-12);
    }
  }
}

TEST_CASE("tangent of tau squared") {
  const ReQUNetwork net = dqrp::testing::tau_squared_network(0);
  const std::vector<double> x;
  const ForwardTrace tr = forward_with_tangent(net, x, 0.3);
  CHECK(tr.value == doctest::Approx(0.09).epsilon(1e-15));
  CHECK(tr.tangent == doctest::Approx(0.6).epsilon(1e-15));

  ReQUNetwork flat(NetworkShape({2, 3, 1}));
  flat.weights()[0].col(0).setConstant(0.7);
  flat.weights()[1].setConstant(1.0);
  const std::vector<double> x1{0.4};
  CHECK(forward_with_tangent(flat, x1, 0.8).tangent == 0.0);
}

TEST_CASE("tangent exactness against central differences") {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double h = 1e-6;
  int compared = 0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t d = 1 + gen() % 3;
    std::vector<std::size_t> widths{d + 1};
    const std::size_t depth = 1 + gen() % 3;
    for (std::size_t i = 0; i < depth; ++i) widths.push_back(1 + gen() % 8);
    widths.push_back(1);
    const ReQUNetwork net = random_network(widths, gen);
    const ReQUNetwork before = net;
    for (int p = 0; p < 100; ++p) {
      std::vector<double> x(d);
      for (double& v : x) v = u(gen);
      const double tau = 0.01 + 0.98 * u(gen);
      std::vector<double> in = x;
      in.push_back(tau);
      std::vector<double> lo = in, hi = in;
      lo.back() -= h;
      hi.back() += h;
      if (std::min({min_abs_preactivation(net, in), min_abs_preactivation(net, lo),
                    min_abs_preactivation(net, hi)}) < 1e-8) {
        continue;
      }
      const double fd = (naive_forward(net, hi) - naive_forward(net, lo)) / (2.0 * h);
      const ForwardTrace tr = forward_with_tangent(net, x, tau);
      CHECK(rel_err(tr.value, naive_forward(net, in)) <= 1e-12);
      // FD truncation error is O(h^2 f'''); the absolute floor covers tiny slopes.
      CHECK(std::abs(tr.tangent - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
      ++compared;
    }
    CHECK(net == before);
  }
  CHECK(compared > 9000);
}

TEST_CASE("tangent batch agrees with the single-input trace") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const ReQUNetwork net = random_network({3, 6, 6, 1}, gen);
  Matrix inputs(3, 32);
  for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = u(gen);
  const ValueAndTangent vt = forward_with_tangent_batch(net, inputs);
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
    const std::vector<double> x{inputs(0, j), inputs(1, j)};
    const ForwardTrace tr = forward_with_tangent(net, x, inputs(2, j));
    CHECK(vt.value(j) == doctest::Approx(tr.value).epsilon(1e-13));
    CHECK(vt.tangent(j) == doctest::Approx(tr.tangent).epsilon(1e-13));
    CHECK(tr.pre_activations.size() == 2);
    CHECK(tr.tangents.size() == 2);
  }
}

TEST_CASE("continuity in tau") {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const ReQUNetwork net = random_network({2, 8, 8, 1}, gen);
    const std::vector<double> x{u(gen)};
    const double tau = 0.05 + 0.9 * u(gen);
    const ForwardTrace a = forward_with_tangent(net, x, tau);
    const ForwardTrace b = forward_with_tangent(net, x, tau + 1e-9);
    CHECK(std::abs(a.value - b.value) <= 1e-6 * (1.0 + std::abs(a.value)));
    CHECK(std::abs(a.tangent - b.tangent) <= 1e-6 * (1.0 + std::abs(a.tangent)));
  }
}

namespace {

// Penalized objective recomputed from scratch with the plain loop and
// central differences in tau, used as the finite-difference target.
double naive_objective(const ReQUNetwork& net, const Batch& batch, double lambda) {
  double total = 0.0;
  const auto d = static_cast<std::size_t>(batch.x.rows());
  for (Eigen::Index j = 0; j < batch.y.size(); ++j) {
    std::vector<double> x(d);
    for (std::size_t i = 0; i < d; ++i) x[i] = batch.x(static_cast<Eigen::Index>(i), j);
    const ForwardTrace tr = forward_with_tangent(net, x, batch.xi(j));
    const double r = batch.y(j) - tr.value;
    const double tau = batch.xi(j);
    total += r * (tau - (r <= 0.0 ? 1.0 : 0.0)) + lambda * std::max(-tr.tangent, 0.0);
  }
  return total / static_cast<double>(batch.y.size());
}

Batch random_batch(std::mt19937_64& gen, std::size_t d, std::size_t m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Batch b;
  b.x.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m));
  b.y.resize(static_cast<Eigen::Index>(m));
  b.xi.resize(static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < b.x.size(); ++i) b.x.data()[i] = u(gen);
  for (Eigen::Index j = 0; j < b.y.size(); ++j) {
    b.y(j) = 2.0 * u(gen) - 1.0;
    b.xi(j) = 0.02 + 0.96 * u(gen);
  }
  return b;
}

}  // namespace

TEST_CASE("objective value matches its definition") {
  std::mt19937_64 gen(19);
  const ReQUNetwork net = random_network({2, 6, 6, 1}, gen);
  const Batch b = random_batch(gen, 1, 9);
  for (double lambda : {0.0, 1.0, 10.0}) {
    const Objective obj = objective_gradient(net, b, lambda);
    CHECK(obj.loss == doctest::Approx(naive_objective(net, b, lambda)).epsilon(1e-13));
    CHECK(obj.loss == doctest::Approx(obj.risk + lambda * obj.penalty).epsilon(1e-14));
    CHECK(obj.gradients.all_finite());
  }
}

TEST_CASE("objective gradient against central differences") {
  std::mt19937_64 gen(77);
  const double h = 1e-6;
  double worst = 0.0;
  std::size_t compared = 0;
  for (int k = 0; k < 10; ++k) {
    ReQUNetwork net = random_network({2, 6, 6, 1}, gen);
    Batch b = random_batch(gen, 1, 4);
    // Move responses away from the network so residual kinks are far.
    for (Eigen::Index j = 0; j < b.y.size(); ++j) {
      const std::vector<double> in{b.x(0, j), b.xi(j)};
      b.y(j) = naive_forward(net, in) + (j % 2 == 0 ? 0.5 : -0.5);
    }
    for (double lambda : {0.0, 1.0, 10.0}) {
      const Objective obj = objective_gradient(net, b, lambda);
      const std::vector<double> analytic = obj.gradients.flat();
      std::size_t idx = 0;
      for (std::size_t l = 0; l < net.num_layers(); ++l) {
        auto perturb = [&](double& slot) {
          const double saved = slot;
          slot = saved + h;
          const double up = naive_objective(net, b, lambda);
          slot = saved - h;
          const double down = naive_objective(net, b, lambda);
          slot = saved;
          double kink = INFINITY;
          for (Eigen::Index j = 0; j < b.y.size(); ++j) {
            const std::vector<double> in{b.x(0, j), b.xi(j)};
            kink = std::min(kink, min_abs_preactivation(net, in));
            std::vector<double> xs{b.x(0, j)};
            kink = std::min(kink, std::abs(forward_with_tangent(net, xs, b.xi(j)).tangent));
          }
          const double fd = (up - down) / (2.0 * h);
          const double a = analytic[idx++];
          if (kink < 1e-8) return;
          const double err = std::abs(a - fd) / std::max(1.0, std::abs(fd));
          worst = std::max(worst, err);
          ++compared;
        };
        for (Eigen::Index r = 0; r < net.weights()[l].rows(); ++r) {
          for (Eigen::Index c = 0; c < net.weights()[l].cols(); ++c) perturb(net.weights()[l](r, c));
        }
        for (Eigen::Index r = 0; r < net.biases()[l].size(); ++r) perturb(net.biases()[l](r));
      }
      CHECK(idx == analytic.size());
    }
  }
  CHECK(compared > 0);
  CHECK(worst <= 1e-5);
}

TEST_CASE("objective edge cases") {
  std::mt19937_64 gen(4);
  const ReQUNetwork net = random_network({2, 4, 1}, gen);
  Batch empty;
  empty.x.resize(1, 0);
  CHECK_THROWS_AS(objective_gradient(net, empty, 1.0), UsageError);

  // zero residual: loss 0 and the output-bias gradient is -(xi - 1)
  Batch one;
  one.x = Matrix::Constant(1, 1, 0.3);
  one.xi = Vector::Constant(1, 0.4);
  const std::vector<double> in{0.3, 0.4};
  one.y = Vector::Constant(1, forward(net, in));
  const Objective obj = objective_gradient(net, one, 0.0);
  CHECK(obj.loss == 0.0);
  CHECK(obj.gradients.biases.back()(0) == doctest::Approx(0.6));

  // penalty lower bound when every tangent is negative
  const ReQUNetwork neg = dqrp::testing::minus_tau_network(1);
  Batch b = random_batch(gen, 1, 6);
  const Objective big = objective_gradient(neg, b, 50.0);
  CHECK(big.penalty == doctest::Approx(1.0));
  CHECK(big.loss >= 50.0 * 1.0);
}
