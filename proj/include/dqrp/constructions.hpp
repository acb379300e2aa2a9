#pragma once

#include "dqrp/network.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dqrp {

enum class Activation { ReLU, ReQU };

struct MixedLayer {
  Matrix weights;
  Vector bias;
  /// One tag per output unit; empty for the affine output layer.
  std::vector<Activation> activations;
};

/// Layered network with per-unit ReLU / ReQU tags. Only the final layer is
/// affine; a network made of the output layer alone is a constant/affine map.
class MixedNetwork {
 public:
  MixedNetwork() = default;
  /// Throws ShapeError on inconsistent layer sizes or a non-scalar output.
  MixedNetwork(std::size_t input_dim, std::vector<MixedLayer> layers);

  std::size_t input_dim() const noexcept { return input_dim_; }
  const std::vector<MixedLayer>& layers() const noexcept { return layers_; }
  std::vector<MixedLayer>& layers() noexcept { return layers_; }
  std::size_t hidden_layers() const noexcept { return layers_.size() - 1; }

  double evaluate(std::span<const double> input) const;
  /// Columns are inputs.
  Vector evaluate_batch(const Matrix& inputs) const;
  bool pure_requ() const;

 private:
  std::size_t input_dim_ = 0;
  std::vector<MixedLayer> layers_;
};

MixedNetwork to_mixed(const ReQUNetwork& net);
/// Throws UsageError unless every hidden unit is ReQU.
ReQUNetwork to_requ(const MixedNetwork& net);

/// Multivariate polynomial: exponent multi-index -> coefficient.
class Polynomial {
 public:
  using Exponent = std::vector<unsigned>;

  explicit Polynomial(std::size_t dim = 1);
  /// Univariate sum_i coeffs[i] x^i.
  static Polynomial univariate(const std::vector<double>& coeffs);

  std::size_t dim() const noexcept { return dim_; }
  /// Adds `c` to the coefficient of the monomial. Throws ShapeError on a bad exponent length.
  void add_term(const Exponent& e, double c);
  double coefficient(const Exponent& e) const;
  const std::map<Exponent, double>& terms() const noexcept { return terms_; }
  /// Max total exponent over nonzero coefficients (0 for the zero polynomial).
  unsigned degree() const;
  /// Largest exponent of variable v over nonzero terms.
  unsigned degree_in(std::size_t v) const;
  bool is_zero() const;
  double evaluate(std::span<const double> x) const;

 private:
  std::size_t dim_;
  std::map<Exponent, double> terms_;
};

struct SizeReport {
  std::size_t depth = 0;       ///< hidden layers
  std::size_t width = 0;       ///< widest hidden layer
  std::size_t neurons = 0;     ///< hidden units
  std::size_t parameters = 0;  ///< nonzero weights and biases

  bool operator==(const SizeReport&) const = default;
};

/// Counts by walking every layer; parameters are the nonzero entries.
SizeReport size_report(const MixedNetwork& net);

/// Deliberate gadget corruption used to check that verification detects faults.
struct ConstructionFaults {
  bool corrupt_product = false;
};

/// x^2 = s2(x) + s2(-x)
MixedNetwork square_gadget();
/// xy = (s2(x+y) + s2(-x-y) - s2(x-y) - s2(-x+y)) / 4
MixedNetwork product_gadget(const ConstructionFaults& faults = {});
/// x = (s2(x+1) + s2(-x-1) - s2(x-1) - s2(-x+1)) / 4
MixedNetwork identity_gadget();

/// Exact ReQU network for a univariate polynomial by Horner's rule
/// b_k = a_{N-k} + x b_{k-1}, one product layer per step. Degree 0 gives a
/// bias-only affine network. Throws ShapeError unless p.dim() == 1.
MixedNetwork construct_univariate_poly(const Polynomial& p, const ConstructionFaults& faults = {});

/// Exact ReQU network for a d-variate polynomial: Horner in x1 with
/// coefficients q_i(x2..xd) built recursively and scheduled to finish at the
/// layer where each is consumed. Variable carries are shared. d == 1
/// delegates to the univariate construction.
MixedNetwork construct_multivariate_poly(const Polynomial& p, const ConstructionFaults& faults = {});

/// ReLU-ReQU network computing (x, tau) -> df/dtau exactly. Each hidden layer
/// of `net` becomes three layers carrying (s1(+-f_j), s1(+-df_j)) and
/// implementing df_j = 2 s1(z_j) * sum_i w_ji df_i with product gadgets.
MixedNetwork compile_derivative_network(const ReQUNetwork& net, const ConstructionFaults& faults = {});
/// Throws UsageError when `net` has a non-ReQU hidden unit.
MixedNetwork compile_derivative_network(const MixedNetwork& net, const ConstructionFaults& faults = {});

struct BoundReport {
  std::size_t depth = 0;
  std::size_t width = 0;
  std::size_t neurons = 0;
  std::size_t parameters = 0;
};

/// (2N-1, 4, 5N-1, 8N)
BoundReport univariate_bounds(unsigned degree);
/// (2N-1, 12 N^{d-1}, 15 N^d, 24 N^d)
BoundReport multivariate_bounds(unsigned degree, std::size_t dim);
/// (3D+3, 10W, 17U, 23S) for the source network.
BoundReport derivative_bounds(const ReQUNetwork& net);

/// Field-wise comparison; returns the names of violated fields.
std::vector<std::string> bound_violations(const SizeReport& size, const BoundReport& bound);

/// Random polynomial with coefficients in [-1, 1] on every monomial of total degree <= N.
Polynomial random_polynomial(std::size_t dim, unsigned degree, std::uint64_t seed);

struct VerificationRow {
  std::string name;
  std::string check;  ///< "exactness" or "size"
  bool passed = false;
  std::string detail;
  SizeReport size;
  BoundReport bound;
};

struct VerifyOptions {
  ConstructionFaults faults;
  std::uint64_t seed = 0;
  std::size_t univariate_cases = 50;
  std::size_t multivariate_cases = 20;
  std::size_t derivative_cases = 20;
  std::size_t points = 1000;
};

/// Gadget identities, polynomial exactness on [-2, 2]^d, derivative-network
/// agreement with the analytic tangent, and size bounds for every construction.
std::vector<VerificationRow> verify_constructions(const VerifyOptions& options = {});

}  // namespace dqrp
