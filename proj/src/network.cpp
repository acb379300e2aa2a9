#include "dqrp/network.hpp"

#include "dqrp/error.hpp"
#include "dqrp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dqrp {

namespace {

// Elementwise s2, s2' = 2 relu and the [z > 0] indicator used by s2''.
Matrix requ(const Matrix& z) { return z.cwiseMax(0.0).cwiseAbs2(); }
Matrix requ_slope(const Matrix& z) { return 2.0 * z.cwiseMax(0.0); }
Matrix positive_part_indicator(const Matrix& z) {
  return (z.array() > 0.0).cast<double>().matrix();
}

void check_input_rows(const ReQUNetwork& net, Eigen::Index rows) {
  if (static_cast<std::size_t>(rows) != net.input_dim()) {
    throw ShapeError("network expects inputs of dimension " + std::to_string(net.input_dim()) +
                     ", got " + std::to_string(rows));
  }
}

}  // namespace

NetworkShape::NetworkShape(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 3) {
    throw ConfigError("a network shape needs an input, at least one hidden layer and an output");
  }
  if (std::any_of(widths_.begin(), widths_.end(), [](std::size_t w) { return w == 0; })) {
    throw ConfigError("every layer width must be at least 1");
  }
  if (widths_.back() != 1) {
    throw ConfigError("the output layer must have width 1");
  }
}

NetworkShape NetworkShape::for_covariates(std::size_t covariate_dim,
                                          const std::vector<std::size_t>& hidden) {
  std::vector<std::size_t> widths;
  widths.reserve(hidden.size() + 2);
  widths.push_back(covariate_dim + 1);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  return NetworkShape(std::move(widths));
}

std::size_t NetworkShape::width() const noexcept {
  return *std::max_element(widths_.begin() + 1, widths_.end() - 1);
}

std::size_t NetworkShape::neurons() const noexcept {
  std::size_t total = 0;
  for (std::size_t i = 1; i + 1 < widths_.size(); ++i) total += widths_[i];
  return total;
}

std::size_t NetworkShape::size() const noexcept {
  std::size_t total = 0;
  for (std::size_t i = 0; i + 1 < widths_.size(); ++i) total += widths_[i + 1] * (widths_[i] + 1);
  return total;
}

ReQUNetwork::ReQUNetwork(NetworkShape shape) : shape_(std::move(shape)) {
  const auto& w = shape_.widths();
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    const auto rows = static_cast<Eigen::Index>(w[i + 1]);
    const auto cols = static_cast<Eigen::Index>(w[i]);
    weights_.push_back(Matrix::Zero(rows, cols));
    biases_.push_back(Vector::Zero(rows));
  }
}

ReQUNetwork::ReQUNetwork(NetworkShape shape, std::vector<Matrix> weights,
                         std::vector<Vector> biases)
    : shape_(std::move(shape)), weights_(std::move(weights)), biases_(std::move(biases)) {
  const auto& w = shape_.widths();
  if (weights_.size() != w.size() - 1 || biases_.size() != w.size() - 1) {
    throw ShapeError("layer count does not match the network shape");
  }
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    if (static_cast<std::size_t>(weights_[i].rows()) != w[i + 1] ||
        static_cast<std::size_t>(weights_[i].cols()) != w[i] ||
        static_cast<std::size_t>(biases_[i].size()) != w[i + 1]) {
      throw ShapeError("layer " + std::to_string(i) + " does not match the network shape");
    }
  }
}

std::vector<double> ReQUNetwork::flat_parameters() const {
  std::vector<double> out;
  out.reserve(shape_.size());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) out.push_back(weights_[l](r, c));
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) out.push_back(biases_[l](r));
  }
  return out;
}

bool ReQUNetwork::operator==(const ReQUNetwork& other) const {
  if (!(shape_ == other.shape_)) return false;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (weights_[l] != other.weights_[l] || biases_[l] != other.biases_[l]) return false;
  }
  return true;
}

Gradients Gradients::zeros_like(const ReQUNetwork& net) {
  Gradients g;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    g.weights.push_back(Matrix::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    g.biases.push_back(Vector::Zero(net.biases()[l].size()));
  }
  return g;
}

bool Gradients::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

std::vector<double> Gradients::flat() const {
  std::vector<double> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights[l].cols(); ++c) out.push_back(weights[l](r, c));
    }
    for (Eigen::Index r = 0; r < biases[l].size(); ++r) out.push_back(biases[l](r));
  }
  return out;
}

ReQUNetwork init_network(const NetworkShape& shape, std::uint64_t seed) {
  ReQUNetwork net(shape);
  CounterRng rng(derive_seed(seed, "init"));
  const auto& w = shape.widths();
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w[l] + w[l + 1]));
    Matrix& weights = net.weights()[l];
    // Row-major fill so the stream order matches the serialized layout.
    for (Eigen::Index r = 0; r < weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < weights.cols(); ++c) weights(r, c) = rng.uniform(-bound, bound);
    }
  }
  return net;
}

double forward(const ReQUNetwork& net, std::span<const double> input) {
  check_input_rows(net, static_cast<Eigen::Index>(input.size()));
  Vector a = Eigen::Map<const Vector>(input.data(), static_cast<Eigen::Index>(input.size()));
  const std::size_t last = net.num_layers() - 1;
  for (std::size_t l = 0; l < last; ++l) {
    a = requ(net.weights()[l] * a + net.biases()[l]);
  }
  return (net.weights()[last] * a + net.biases()[last])(0);
}

Vector forward_batch(const ReQUNetwork& net, const Matrix& inputs) {
  check_input_rows(net, inputs.rows());
  Matrix a = inputs;
  const std::size_t last = net.num_layers() - 1;
  for (std::size_t l = 0; l < last; ++l) {
    Matrix z = net.weights()[l] * a;
    z.colwise() += net.biases()[l];
    a = requ(z);
  }
  Matrix out = net.weights()[last] * a;
  out.array() += net.biases()[last](0);
  return out.row(0).transpose();
}

ForwardTrace forward_with_tangent(const ReQUNetwork& net, std::span<const double> x, double tau) {
  check_input_rows(net, static_cast<Eigen::Index>(x.size() + 1));
  Vector input(static_cast<Eigen::Index>(x.size() + 1));
  for (std::size_t i = 0; i < x.size(); ++i) input(static_cast<Eigen::Index>(i)) = x[i];
  input(input.size() - 1) = tau;

  ForwardTrace trace;
  const std::size_t last = net.num_layers() - 1;
  Vector a = input;
  Vector t = Vector::Zero(input.size());
  t(t.size() - 1) = 1.0;
  for (std::size_t l = 0; l < last; ++l) {
    Vector z = net.weights()[l] * a + net.biases()[l];
    Vector dz = net.weights()[l] * t;
    t = (2.0 * z.cwiseMax(0.0)).cwiseProduct(dz);
    a = z.cwiseMax(0.0).cwiseAbs2();
    trace.pre_activations.push_back(z);
    trace.activations.push_back(a);
    trace.tangents.push_back(t);
  }
  trace.value = (net.weights()[last] * a + net.biases()[last])(0);
  trace.tangent = (net.weights()[last] * t)(0);
  return trace;
}

ValueAndTangent forward_with_tangent_batch(const ReQUNetwork& net, const Matrix& inputs) {
  check_input_rows(net, inputs.rows());
  const std::size_t last = net.num_layers() - 1;
  const Eigen::Index tau_col = inputs.rows() - 1;

  Matrix a = inputs;
  Matrix t;
  for (std::size_t l = 0; l < last; ++l) {
    const Matrix& w = net.weights()[l];
    Matrix z = w * a;
    z.colwise() += net.biases()[l];
    Matrix dz;
    if (l == 0) {
      dz = w.col(tau_col).replicate(1, inputs.cols());
    } else {
      dz = w * t;
    }
    t = requ_slope(z).cwiseProduct(dz);
    a = requ(z);
  }
  ValueAndTangent out;
  out.value = (net.weights()[last] * a).row(0).transpose();
  out.value.array() += net.biases()[last](0);
  out.tangent = (net.weights()[last] * t).row(0).transpose();
  return out;
}

Matrix stack_inputs(const Matrix& x, const Vector& tau) {
  if (x.cols() != tau.size()) {
    throw ShapeError("covariate and quantile-level counts differ");
  }
  Matrix inputs(x.rows() + 1, x.cols());
  inputs.topRows(x.rows()) = x;
  inputs.row(x.rows()) = tau.transpose();
  return inputs;
}

Objective objective_gradient(const ReQUNetwork& net, const Batch& batch, double lambda) {
  const Eigen::Index m = static_cast<Eigen::Index>(batch.size());
  if (m == 0) {
    throw UsageError("objective_gradient needs a nonempty batch");
  }
  if (batch.x.cols() != m || batch.xi.size() != m) {
    throw ShapeError("batch columns, responses and quantile levels disagree in length");
  }
  if (lambda < 0.0) {
    throw UsageError("lambda must be nonnegative");
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!(batch.xi(j) > 0.0 && batch.xi(j) < 1.0)) {
      throw DomainError("quantile levels must lie in (0, 1)");
    }
  }
  const Matrix inputs = stack_inputs(batch.x, batch.xi);
  check_input_rows(net, inputs.rows());

  const std::size_t hidden = net.num_layers() - 1;
  const Eigen::Index tau_col = inputs.rows() - 1;

  // Forward over values and tau-tangents, caching z, dz, a, da per hidden layer.
  std::vector<Matrix> z(hidden), dz(hidden), act(hidden), dact(hidden);
  for (std::size_t l = 0; l < hidden; ++l) {
    const Matrix& w = net.weights()[l];
    const Matrix& prev = l == 0 ? inputs : act[l - 1];
    z[l] = w * prev;
    z[l].colwise() += net.biases()[l];
    if (l == 0) {
      dz[l] = w.col(tau_col).replicate(1, m);
    } else {
      dz[l] = w * dact[l - 1];
    }
    act[l] = requ(z[l]);
    dact[l] = requ_slope(z[l]).cwiseProduct(dz[l]);
  }
  const Matrix& w_out = net.weights()[hidden];
  const Eigen::RowVectorXd f = (w_out * act[hidden - 1]).row(0).array() + net.biases()[hidden](0);
  const Eigen::RowVectorXd g = (w_out * dact[hidden - 1]).row(0);

  // Loss and the adjoints of f and g (already divided by m).
  Objective out;
  const double inv_m = 1.0 / static_cast<double>(m);
  Eigen::RowVectorXd f_bar(m), g_bar(m);
  double risk = 0.0;
  double penalty = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double tau = batch.xi(j);
    const double r = batch.y(j) - f(j);
    const double slope = r <= 0.0 ? tau - 1.0 : tau;
    risk += r * slope;
    f_bar(j) = -slope * inv_m;
    if (g(j) < 0.0) {
      penalty += -g(j);
      g_bar(j) = -lambda * inv_m;
    } else {
      g_bar(j) = 0.0;
    }
  }
  out.risk = risk * inv_m;
  out.penalty = penalty * inv_m;
  out.loss = out.risk + lambda * out.penalty;

  Gradients grads = Gradients::zeros_like(net);
  grads.weights[hidden] = f_bar * act[hidden - 1].transpose() + g_bar * dact[hidden - 1].transpose();
  grads.biases[hidden](0) = f_bar.sum();

  Matrix a_bar = w_out.transpose() * f_bar;   // adjoint of a_l
  Matrix da_bar = w_out.transpose() * g_bar;  // adjoint of da_l
  for (std::size_t li = hidden; li-- > 0;) {
    const Matrix slope = requ_slope(z[li]);
    // da = s2'(z) * dz: contributes to dz_bar and, through s2''(z) = 2 [z > 0], to z_bar.
    const Matrix dz_bar = da_bar.cwiseProduct(slope);
    Matrix z_bar = a_bar.cwiseProduct(slope) +
                   2.0 * da_bar.cwiseProduct(dz[li]).cwiseProduct(positive_part_indicator(z[li]));
    const Matrix& prev = li == 0 ? inputs : act[li - 1];
    grads.weights[li].noalias() = z_bar * prev.transpose();
    grads.biases[li] = z_bar.rowwise().sum();
    if (li == 0) {
      grads.weights[li].col(tau_col) += dz_bar.rowwise().sum();
    } else {
      grads.weights[li].noalias() += dz_bar * dact[li - 1].transpose();
      const Matrix& w = net.weights()[li];
      a_bar = w.transpose() * z_bar;
      da_bar = w.transpose() * dz_bar;
    }
  }
  out.gradients = std::move(grads);
  return out;
}

NetworkCounts network_counts(const ReQUNetwork& net) {
  const auto& s = net.shape();
  return {s.depth(), s.width(), s.neurons(), s.size()};
}

}  // namespace dqrp
