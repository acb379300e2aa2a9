#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dqrp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Layer widths (p0, p1, ..., pD, 1) of a ReQU perceptron.
///
/// p0 is the input dimension d+1 (covariates followed by the quantile level),
/// the last entry is the scalar output. At least one hidden layer is required.
class NetworkShape {
 public:
  NetworkShape() = default;
  explicit NetworkShape(std::vector<std::size_t> widths);

  /// Shape (d+1, hidden..., 1) for a problem with `covariate_dim` covariates.
  static NetworkShape for_covariates(std::size_t covariate_dim,
                                     const std::vector<std::size_t>& hidden);

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t input_dim() const noexcept { return widths_.front(); }
  std::size_t num_layers() const noexcept { return widths_.size() - 1; }

  /// Number of hidden layers D.
  std::size_t depth() const noexcept { return widths_.size() - 2; }
  /// max(p1, ..., pD).
  std::size_t width() const noexcept;
  /// p1 + ... + pD.
  std::size_t neurons() const noexcept;
  /// sum_{i=0}^{D} p_{i+1} (p_i + 1).
  std::size_t size() const noexcept;

  bool operator==(const NetworkShape&) const = default;

 private:
  std::vector<std::size_t> widths_;
};

struct NetworkCounts {
  std::size_t depth = 0;
  std::size_t width = 0;
  std::size_t neurons = 0;
  std::size_t size = 0;
};

/// f(u) = L_D . s2 . L_{D-1} . ... . s2 . L_0 (u), s2(z) = max(z, 0)^2,
/// L_i(u) = W_i u + b_i. The output layer is affine.
class ReQUNetwork {
 public:
  ReQUNetwork() = default;
  /// All-zero parameters.
  explicit ReQUNetwork(NetworkShape shape);
  /// Throws ShapeError when the matrices do not match `shape`.
  ReQUNetwork(NetworkShape shape, std::vector<Matrix> weights, std::vector<Vector> biases);

  const NetworkShape& shape() const noexcept { return shape_; }
  std::size_t input_dim() const noexcept { return shape_.input_dim(); }
  std::size_t num_layers() const noexcept { return weights_.size(); }

  const std::vector<Matrix>& weights() const noexcept { return weights_; }
  const std::vector<Vector>& biases() const noexcept { return biases_; }
  std::vector<Matrix>& weights() noexcept { return weights_; }
  std::vector<Vector>& biases() noexcept { return biases_; }

  /// Parameters in layer order, each layer's weights row-major then its bias.
  std::vector<double> flat_parameters() const;

  bool operator==(const ReQUNetwork& other) const;

 private:
  NetworkShape shape_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

/// Cached forward pass for one input, with tangents along the tau coordinate.
struct ForwardTrace {
  std::vector<Vector> pre_activations;  ///< z_l, one per hidden layer
  std::vector<Vector> activations;      ///< a_l = s2(z_l)
  std::vector<Vector> tangents;         ///< t_l = d a_l / d tau
  double value = 0.0;                   ///< f
  double tangent = 0.0;                 ///< g = df / d tau
};

/// d(objective)/d(theta), shaped like the network parameters.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static Gradients zeros_like(const ReQUNetwork& net);
  bool all_finite() const;
  std::vector<double> flat() const;
};

/// Training triples stored column-wise: x is d x m, y and xi have length m.
struct Batch {
  Matrix x;
  Vector y;
  Vector xi;

  std::size_t size() const noexcept { return static_cast<std::size_t>(y.size()); }
};

struct Objective {
  double loss = 0.0;     ///< risk + lambda * penalty
  double risk = 0.0;     ///< mean check loss
  double penalty = 0.0;  ///< mean max(-df/dtau, 0)
  Gradients gradients;
};

/// Glorot-uniform weights on [-sqrt(6/(p_i + p_{i+1})), +sqrt(...)], zero biases.
ReQUNetwork init_network(const NetworkShape& shape, std::uint64_t seed);

double forward(const ReQUNetwork& net, std::span<const double> input);

/// Columns of `inputs` are samples (p0 x n); returns the n outputs.
Vector forward_batch(const ReQUNetwork& net, const Matrix& inputs);

ForwardTrace forward_with_tangent(const ReQUNetwork& net, std::span<const double> x,
                                  double tau);

struct ValueAndTangent {
  Vector value;
  Vector tangent;
};

/// Batched f and df/dtau; the last row of `inputs` is tau.
ValueAndTangent forward_with_tangent_batch(const ReQUNetwork& net, const Matrix& inputs);

/// Stacks covariates (d x m) and quantile levels (m) into the p0 x m input block.
Matrix stack_inputs(const Matrix& x, const Vector& tau);

/// Mean penalized check loss over the batch and its exact subgradient.
///
/// The reverse sweep runs over the joint value + tangent graph, so the penalty
/// term differentiates through s2'(z) = 2 relu(z) and s2''(z) = 2 [z > 0].
/// Conventions at kinks: check-loss slope (xi - 1) at residual 0, penalty
/// slope 0 at g = 0, relu'(0) = 0.
Objective objective_gradient(const ReQUNetwork& net, const Batch& batch, double lambda);

NetworkCounts network_counts(const ReQUNetwork& net);

}  // namespace dqrp
