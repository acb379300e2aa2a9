#include "dqrp/constructions.hpp"

#include "dqrp/error.hpp"
#include "dqrp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

namespace dqrp {

// ---------------------------------------------------------------------------
// MixedNetwork

MixedNetwork::MixedNetwork(std::size_t input_dim, std::vector<MixedLayer> layers)
    : input_dim_(input_dim), layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("a network needs at least an output layer");
  std::size_t prev = input_dim_;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const MixedLayer& layer = layers_[l];
    const bool output = l + 1 == layers_.size();
    if (static_cast<std::size_t>(layer.weights.cols()) != prev ||
        layer.bias.size() != layer.weights.rows()) {
      throw ShapeError("layer " + std::to_string(l) + " has inconsistent dimensions");
    }
    if (output) {
      if (layer.weights.rows() != 1) throw ShapeError("the output layer must be scalar");
      if (!layer.activations.empty()) throw ShapeError("the output layer must be affine");
    } else if (layer.activations.size() != static_cast<std::size_t>(layer.weights.rows())) {
      throw ShapeError("layer " + std::to_string(l) + " needs one activation per unit");
    }
    prev = static_cast<std::size_t>(layer.weights.rows());
  }
}

Vector MixedNetwork::evaluate_batch(const Matrix& inputs) const {
  if (static_cast<std::size_t>(inputs.rows()) != input_dim_) {
    throw ShapeError("network expects inputs of dimension " + std::to_string(input_dim_));
  }
  Matrix a = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const MixedLayer& layer = layers_[l];
    Matrix z = layer.weights * a;
    z.colwise() += layer.bias;
    if (l + 1 < layers_.size()) {
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        if (layer.activations[static_cast<std::size_t>(r)] == Activation::ReQU) {
          z.row(r) = z.row(r).cwiseMax(0.0).cwiseAbs2();
        } else {
          z.row(r) = z.row(r).cwiseMax(0.0);
        }
      }
    }
    a = std::move(z);
  }
  return a.row(0).transpose();
}

double MixedNetwork::evaluate(std::span<const double> input) const {
  Matrix in(static_cast<Eigen::Index>(input.size()), 1);
  for (std::size_t i = 0; i < input.size(); ++i) in(static_cast<Eigen::Index>(i), 0) = input[i];
  return evaluate_batch(in)(0);
}

bool MixedNetwork::pure_requ() const {
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    for (Activation a : layers_[l].activations) {
      if (a != Activation::ReQU) return false;
    }
  }
  return true;
}

MixedNetwork to_mixed(const ReQUNetwork& net) {
  std::vector<MixedLayer> layers;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    MixedLayer layer{net.weights()[l], net.biases()[l], {}};
    if (l + 1 < net.num_layers()) {
      layer.activations.assign(static_cast<std::size_t>(layer.weights.rows()), Activation::ReQU);
    }
    layers.push_back(std::move(layer));
  }
  return MixedNetwork(net.input_dim(), std::move(layers));
}

ReQUNetwork to_requ(const MixedNetwork& net) {
  if (!net.pure_requ()) throw UsageError("network has non-ReQU hidden units");
  if (net.hidden_layers() == 0) throw UsageError("network has no hidden layer");
  std::vector<std::size_t> widths{net.input_dim()};
  std::vector<Matrix> w;
  std::vector<Vector> b;
  for (const auto& layer : net.layers()) {
    widths.push_back(static_cast<std::size_t>(layer.weights.rows()));
    w.push_back(layer.weights);
    b.push_back(layer.bias);
  }
  return ReQUNetwork(NetworkShape(widths), std::move(w), std::move(b));
}

SizeReport size_report(const MixedNetwork& net) {
  SizeReport r;
  r.depth = net.hidden_layers();
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const MixedLayer& layer = net.layers()[l];
    if (l + 1 < net.layers().size()) {
      const auto units = static_cast<std::size_t>(layer.weights.rows());
      r.width = std::max(r.width, units);
      r.neurons += units;
    }
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) r.parameters += layer.weights.data()[i] != 0.0;
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) r.parameters += layer.bias(i) != 0.0;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Polynomial

Polynomial::Polynomial(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ShapeError("a polynomial needs at least one variable");
}

Polynomial Polynomial::univariate(const std::vector<double>& coeffs) {
  Polynomial p(1);
  for (std::size_t i = 0; i < coeffs.size(); ++i) p.add_term({static_cast<unsigned>(i)}, coeffs[i]);
  return p;
}

void Polynomial::add_term(const Exponent& e, double c) {
  if (e.size() != dim_) throw ShapeError("exponent length does not match the polynomial dimension");
  if (c == 0.0) return;
  const double v = (terms_[e] += c);
  if (v == 0.0) terms_.erase(e);
}

double Polynomial::coefficient(const Exponent& e) const {
  const auto it = terms_.find(e);
  return it == terms_.end() ? 0.0 : it->second;
}

unsigned Polynomial::degree() const {
  unsigned deg = 0;
  for (const auto& [e, c] : terms_) {
    unsigned total = 0;
    for (unsigned k : e) total += k;
    deg = std::max(deg, total);
  }
  return deg;
}

unsigned Polynomial::degree_in(std::size_t v) const {
  unsigned deg = 0;
  for (const auto& [e, c] : terms_) deg = std::max(deg, e.at(v));
  return deg;
}

bool Polynomial::is_zero() const { return terms_.empty(); }

double Polynomial::evaluate(std::span<const double> x) const {
  if (x.size() != dim_) throw ShapeError("point dimension does not match the polynomial");
  double s = 0.0;
  for (const auto& [e, c] : terms_) {
    double m = c;
    for (std::size_t i = 0; i < dim_; ++i) m *= std::pow(x[i], static_cast<double>(e[i]));
    s += m;
  }
  return s;
}

Polynomial random_polynomial(std::size_t dim, unsigned degree, std::uint64_t seed) {
  Polynomial p(dim);
  CounterRng rng(derive_seed(seed, "polynomial"));
  Polynomial::Exponent e(dim, 0);
  // Enumerate multi-indices of total degree <= N in lexicographic order.
  std::function<void(std::size_t, unsigned)> rec = [&](std::size_t v, unsigned left) {
    if (v == dim) {
      p.add_term(e, rng.uniform(-1.0, 1.0));
      return;
    }
    for (unsigned k = 0; k <= left; ++k) {
      e[v] = k;
      rec(v + 1, left - k);
    }
    e[v] = 0;
  };
  rec(0, degree);
  // Guarantee the requested degree.
  Polynomial::Exponent top(dim, 0);
  top[0] = degree;
  if (p.coefficient(top) == 0.0) p.add_term(top, 1.0);
  return p;
}

// ---------------------------------------------------------------------------
// Layered builder: affine expressions over the units of one layer.

namespace {

constexpr int kAnyLayer = -1;

struct Expr {
  int layer = kAnyLayer;  // 0 = raw inputs, l >= 1 = hidden layer l
  std::map<std::size_t, double> terms;
  double constant = 0.0;

  bool is_constant() const { return terms.empty(); }
};

Expr constant_expr(double c) {
  Expr e;
  e.constant = c;
  return e;
}

Expr scaled(const Expr& a, double c) {
  Expr out = a;
  for (auto& [k, v] : out.terms) v *= c;
  out.constant *= c;
  if (c == 0.0) {
    out.terms.clear();
    out.layer = kAnyLayer;
  }
  return out;
}

Expr sum(const Expr& a, const Expr& b) {
  if (a.layer != kAnyLayer && b.layer != kAnyLayer && a.layer != b.layer && !a.is_constant() &&
      !b.is_constant()) {
    throw UsageError("internal: adding expressions from different layers");
  }
  Expr out = a.is_constant() ? b : a;
  const Expr& rest = a.is_constant() ? a : b;
  for (const auto& [k, v] : rest.terms) {
    const double nv = (out.terms[k] += v);
    if (nv == 0.0) out.terms.erase(k);
  }
  out.constant = a.constant + b.constant;
  if (out.terms.empty()) out.layer = kAnyLayer;
  return out;
}

struct Unit {
  Expr pre;
  Activation act;
};

class LayeredBuilder {
 public:
  LayeredBuilder(std::size_t input_dim, ConstructionFaults faults)
      : input_dim_(input_dim), faults_(faults) {}

  Expr input(std::size_t v) const {
    Expr e;
    e.layer = 0;
    e.terms[v] = 1.0;
    return e;
  }

  // Variable v expressed over layer `l` (the inputs when l == 0).
  Expr var_at(std::size_t v, int l) {
    if (l == 0) return input(v);
    const auto key = std::make_pair(v, l);
    const auto it = carries_.find(key);
    if (it != carries_.end()) return it->second;
    const Expr e = identity(var_at(v, l - 1), l);
    carries_.emplace(key, e);
    return e;
  }

  // x = (s2(x+1) + s2(-x-1) - s2(x-1) - s2(-x+1)) / 4 on units of layer l.
  Expr identity(const Expr& x, int l) {
    const Expr one = constant_expr(1.0);
    const std::size_t a = add_unit(l, sum(x, one), Activation::ReQU);
    const std::size_t b = add_unit(l, scaled(sum(x, one), -1.0), Activation::ReQU);
    const std::size_t c = add_unit(l, sum(x, scaled(one, -1.0)), Activation::ReQU);
    const std::size_t d = add_unit(l, scaled(sum(x, scaled(one, -1.0)), -1.0), Activation::ReQU);
    Expr out;
    out.layer = l;
    out.terms = {{a, 0.25}, {b, 0.25}, {c, -0.25}, {d, -0.25}};
    return out;
  }

  // xy = (s2(x+y) + s2(-x-y) - s2(x-y) - s2(-x+y)) / 4 on units of layer l.
  Expr product(const Expr& x, const Expr& y, int l) {
    const Expr p = sum(x, y);
    const Expr m = sum(x, scaled(y, -1.0));
    const std::size_t a = add_unit(l, p, Activation::ReQU);
    const std::size_t b = add_unit(l, scaled(p, -1.0), Activation::ReQU);
    const std::size_t c = add_unit(l, m, Activation::ReQU);
    const std::size_t d = add_unit(l, scaled(m, -1.0), Activation::ReQU);
    Expr out;
    out.layer = l;
    out.terms = {{a, faults_.corrupt_product ? 0.3 : 0.25}, {b, 0.25}, {c, -0.25}, {d, -0.25}};
    return out;
  }

  // Polynomial p as an expression over layer L (requires deg p <= L).
  Expr build(const Polynomial& p, int L) {
    if (p.degree() == 0) return constant_expr(p.coefficient(Polynomial::Exponent(p.dim(), 0)));
    if (p.degree() == 1) {
      const Expr c0 = constant_expr(p.coefficient(Polynomial::Exponent(p.dim(), 0)));
      Expr linear;
      std::size_t used = 0;
      for (std::size_t v = 0; v < p.dim(); ++v) {
        Polynomial::Exponent e(p.dim(), 0);
        e[v] = 1;
        const double c = p.coefficient(e);
        if (c != 0.0) {
          linear = sum(linear, scaled(input(v), c));
          ++used;
        }
      }
      if (used == 1 || L == 0) {
        // A single variable: reuse its shared carry chain.
        Expr out = c0;
        for (const auto& [v, c] : linear.terms) out = sum(out, scaled(var_at(v, L), c));
        return out;
      }
      // Several variables: carry the combination as one chain.
      for (int l = 1; l <= L; ++l) linear = identity(linear, l);
      return sum(linear, c0);
    }
    std::size_t v = 0;
    while (p.degree_in(v) == 0) ++v;
    const unsigned n = p.degree_in(v);
    // p = sum_i q_i(other variables) x_v^i
    std::vector<Polynomial> q(n + 1, Polynomial(p.dim()));
    for (const auto& [e, c] : p.terms()) {
      Polynomial::Exponent rest = e;
      rest[v] = 0;
      q[e[v]].add_term(rest, c);
    }
    const int start = L - static_cast<int>(n);
    Expr b = build(q[n], start);
    for (unsigned i = 1; i <= n; ++i) {
      const int l = start + static_cast<int>(i);
      Expr step;
      if (b.is_constant()) {
        step = scaled(var_at(v, l), b.constant);
      } else {
        step = product(var_at(v, l - 1), b, l);
      }
      b = sum(build(q[n - i], l), step);
    }
    return b;
  }

  MixedNetwork finish(const Expr& out) const {
    const int depth = static_cast<int>(units_.size());
    if (!out.is_constant() && out.layer != depth) {
      throw UsageError("internal: output expression is not on the last layer");
    }
    std::vector<MixedLayer> layers;
    std::size_t prev = input_dim_;
    for (const auto& units : units_) {
      MixedLayer layer;
      layer.weights = Matrix::Zero(static_cast<Eigen::Index>(units.size()), static_cast<Eigen::Index>(prev));
      layer.bias = Vector::Zero(static_cast<Eigen::Index>(units.size()));
      for (std::size_t r = 0; r < units.size(); ++r) {
        for (const auto& [k, c] : units[r].pre.terms) {
          layer.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = c;
        }
        layer.bias(static_cast<Eigen::Index>(r)) = units[r].pre.constant;
        layer.activations.push_back(units[r].act);
      }
      prev = units.size();
      layers.push_back(std::move(layer));
    }
    MixedLayer output;
    output.weights = Matrix::Zero(1, static_cast<Eigen::Index>(prev));
    output.bias = Vector::Constant(1, out.constant);
    for (const auto& [k, c] : out.terms) output.weights(0, static_cast<Eigen::Index>(k)) = c;
    layers.push_back(std::move(output));
    return MixedNetwork(input_dim_, std::move(layers));
  }

 private:
  std::size_t add_unit(int l, Expr pre, Activation act) {
    if (!pre.is_constant() && pre.layer != l - 1) {
      throw UsageError("internal: unit input is not on the previous layer");
    }
    while (static_cast<int>(units_.size()) < l) units_.emplace_back();
    auto& layer = units_[static_cast<std::size_t>(l - 1)];
    layer.push_back(Unit{std::move(pre), act});
    return layer.size() - 1;
  }

  std::size_t input_dim_;
  ConstructionFaults faults_;
  std::vector<std::vector<Unit>> units_;
  std::map<std::pair<std::size_t, int>, Expr> carries_;
};

MixedNetwork single_layer(std::size_t input_dim, Matrix w, Vector b, std::vector<Activation> acts,
                          Eigen::RowVectorXd out_w, double out_b) {
  std::vector<MixedLayer> layers;
  layers.push_back(MixedLayer{std::move(w), std::move(b), std::move(acts)});
  layers.push_back(MixedLayer{out_w, Vector::Constant(1, out_b), {}});
  return MixedNetwork(input_dim, std::move(layers));
}

}  // namespace

MixedNetwork square_gadget() {
  Matrix w(2, 1);
  w << 1.0, -1.0;
  Eigen::RowVectorXd out(2);
  out << 1.0, 1.0;
  return single_layer(1, w, Vector::Zero(2), {Activation::ReQU, Activation::ReQU}, out, 0.0);
}

MixedNetwork product_gadget(const ConstructionFaults& faults) {
  Matrix w(4, 2);
  w << 1, 1, -1, -1, 1, -1, -1, 1;
  Eigen::RowVectorXd out(4);
  out << (faults.corrupt_product ? 0.3 : 0.25), 0.25, -0.25, -0.25;
  return single_layer(2, w, Vector::Zero(4), std::vector<Activation>(4, Activation::ReQU), out, 0.0);
}

MixedNetwork identity_gadget() {
  Matrix w(4, 1);
  w << 1, -1, 1, -1;
  Vector b(4);
  b << 1, -1, -1, 1;
  Eigen::RowVectorXd out(4);
  out << 0.25, 0.25, -0.25, -0.25;
  return single_layer(1, w, b, std::vector<Activation>(4, Activation::ReQU), out, 0.0);
}

MixedNetwork construct_univariate_poly(const Polynomial& p, const ConstructionFaults& faults) {
  if (p.dim() != 1) throw ShapeError("construct_univariate_poly expects a univariate polynomial");
  LayeredBuilder builder(1, faults);
  const Expr out = builder.build(p, static_cast<int>(p.degree()));
  return builder.finish(out);
}

MixedNetwork construct_multivariate_poly(const Polynomial& p, const ConstructionFaults& faults) {
  if (p.dim() < 2) return construct_univariate_poly(p, faults);
  LayeredBuilder builder(p.dim(), faults);
  const Expr out = builder.build(p, static_cast<int>(p.degree()));
  return builder.finish(out);
}

// ---------------------------------------------------------------------------
// Derivative network

MixedNetwork compile_derivative_network(const ReQUNetwork& net, const ConstructionFaults& faults) {
  const std::size_t hidden = net.num_layers() - 1;
  const auto tau = static_cast<Eigen::Index>(net.input_dim() - 1);
  const double quarter_a = faults.corrupt_product ? 0.6 : 0.5;  // 2xy = (..)/2
  std::vector<MixedLayer> layers;

  // Each block ends with 4d units ordered
  // (s1(f_1), s1(-f_1), ..., s1(f_d), s1(-f_d), s1(g_1), s1(-g_1), ...), g = df/dtau.
  auto closing_layer = [&](Eigen::Index d, Eigen::Index prev_units,
                           const std::function<void(Eigen::Index, Eigen::RowVectorXd&)>& f_row,
                           const std::function<void(Eigen::Index, Eigen::RowVectorXd&)>& g_row) {
    MixedLayer layer;
    layer.weights = Matrix::Zero(4 * d, prev_units);
    layer.bias = Vector::Zero(4 * d);
    layer.activations.assign(static_cast<std::size_t>(4 * d), Activation::ReLU);
    for (Eigen::Index j = 0; j < d; ++j) {
      Eigen::RowVectorXd fr = Eigen::RowVectorXd::Zero(prev_units);
      Eigen::RowVectorXd gr = Eigen::RowVectorXd::Zero(prev_units);
      f_row(j, fr);
      g_row(j, gr);
      layer.weights.row(2 * j) = fr;
      layer.weights.row(2 * j + 1) = -fr;
      layer.weights.row(2 * d + 2 * j) = gr;
      layer.weights.row(2 * d + 2 * j + 1) = -gr;
    }
    return layer;
  };

  // Block 1 from the raw input, wired as (f_j, |w_{j,tau}|, s1(z_j)).
  {
    const Matrix& w = net.weights()[0];
    const Vector& b = net.biases()[0];
    const Eigen::Index d = w.rows();
    const Eigen::Index d0 = w.cols();

    MixedLayer l1;
    l1.weights = Matrix::Zero(3 * d, d0);
    l1.bias = Vector::Zero(3 * d);
    for (Eigen::Index j = 0; j < d; ++j) {
      l1.weights.row(j) = w.row(j);
      l1.bias(j) = b(j);
      l1.bias(d + j) = std::abs(w(j, tau));
      l1.weights.row(2 * d + j) = w.row(j);
      l1.bias(2 * d + j) = b(j);
    }
    l1.activations.assign(static_cast<std::size_t>(d), Activation::ReQU);
    l1.activations.resize(static_cast<std::size_t>(3 * d), Activation::ReLU);

    // (s1(f_j), s1(-f_j)) then s2(+-u +- s) with u = sign(w) |w|, s = s1(z_j).
    MixedLayer l2;
    l2.weights = Matrix::Zero(6 * d, 3 * d);
    l2.bias = Vector::Zero(6 * d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double sign = w(j, tau) < 0.0 ? -1.0 : 1.0;
      l2.weights(2 * j, j) = 1.0;
      l2.weights(2 * j + 1, j) = -1.0;
      const Eigen::Index base = 2 * d + 4 * j;
      const double su[4] = {1.0, -1.0, 1.0, -1.0};
      const double ss[4] = {1.0, -1.0, -1.0, 1.0};
      for (int k = 0; k < 4; ++k) {
        l2.weights(base + k, d + j) = su[k] * sign;
        l2.weights(base + k, 2 * d + j) = ss[k];
      }
    }
    l2.activations.assign(static_cast<std::size_t>(2 * d), Activation::ReLU);
    l2.activations.resize(static_cast<std::size_t>(6 * d), Activation::ReQU);

    MixedLayer l3 = closing_layer(
        d, 6 * d,
        [&](Eigen::Index j, Eigen::RowVectorXd& r) {
          r(2 * j) = 1.0;
          r(2 * j + 1) = -1.0;
        },
        [&](Eigen::Index j, Eigen::RowVectorXd& r) {
          const Eigen::Index base = 2 * d + 4 * j;
          r(base) = quarter_a;
          r(base + 1) = 0.5;
          r(base + 2) = -0.5;
          r(base + 3) = -0.5;
        });
    layers.push_back(std::move(l1));
    layers.push_back(std::move(l2));
    layers.push_back(std::move(l3));
  }

  // Blocks 2..D. Inputs F_i = A_{2i} - A_{2i+1}, G_i = A_{2p+2i} - A_{2p+2i+1}.
  // Layer 1 holds (s1(u_j), s1(-u_j), s1(z_j)) with u_j = sum_i w_ji G_i, layer 2
  // holds f_j = s2(s1(z_j)) and the product gadget for u_j s1(z_j).
  for (std::size_t k = 1; k < hidden; ++k) {
    const Matrix& w = net.weights()[k];
    const Vector& b = net.biases()[k];
    const Eigen::Index d = w.rows();
    const Eigen::Index p = w.cols();

    MixedLayer l1;
    l1.weights = Matrix::Zero(3 * d, 4 * p);
    l1.bias = Vector::Zero(3 * d);
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = 0; i < p; ++i) {
        l1.weights(j, 2 * p + 2 * i) = w(j, i);
        l1.weights(j, 2 * p + 2 * i + 1) = -w(j, i);
        l1.weights(d + j, 2 * p + 2 * i) = -w(j, i);
        l1.weights(d + j, 2 * p + 2 * i + 1) = w(j, i);
        l1.weights(2 * d + j, 2 * i) = w(j, i);
        l1.weights(2 * d + j, 2 * i + 1) = -w(j, i);
      }
      l1.bias(2 * d + j) = b(j);
    }
    l1.activations.assign(static_cast<std::size_t>(3 * d), Activation::ReLU);

    MixedLayer l2;
    l2.weights = Matrix::Zero(5 * d, 3 * d);
    l2.bias = Vector::Zero(5 * d);
    for (Eigen::Index j = 0; j < d; ++j) {
      l2.weights(j, 2 * d + j) = 1.0;
      const Eigen::Index base = d + 4 * j;
      const double su[4] = {1.0, -1.0, 1.0, -1.0};
      const double ss[4] = {1.0, -1.0, -1.0, 1.0};
      for (int m = 0; m < 4; ++m) {
        l2.weights(base + m, j) = su[m];
        l2.weights(base + m, d + j) = -su[m];
        l2.weights(base + m, 2 * d + j) = ss[m];
      }
    }
    l2.activations.assign(static_cast<std::size_t>(5 * d), Activation::ReQU);

    MixedLayer l3 = closing_layer(
        d, 5 * d, [&](Eigen::Index j, Eigen::RowVectorXd& r) { r(j) = 1.0; },
        [&](Eigen::Index j, Eigen::RowVectorXd& r) {
          const Eigen::Index base = d + 4 * j;
          r(base) = quarter_a;
          r(base + 1) = 0.5;
          r(base + 2) = -0.5;
          r(base + 3) = -0.5;
        });
    layers.push_back(std::move(l1));
    layers.push_back(std::move(l2));
    layers.push_back(std::move(l3));
  }

  // df/dtau = sum_i w_i G_i.
  {
    const Matrix& w = net.weights()[hidden];
    const Eigen::Index p = w.cols();
    MixedLayer out;
    out.weights = Matrix::Zero(1, 4 * p);
    out.bias = Vector::Zero(1);
    for (Eigen::Index i = 0; i < p; ++i) {
      out.weights(0, 2 * p + 2 * i) = w(0, i);
      out.weights(0, 2 * p + 2 * i + 1) = -w(0, i);
    }
    layers.push_back(std::move(out));
  }
  return MixedNetwork(net.input_dim(), std::move(layers));
}

MixedNetwork compile_derivative_network(const MixedNetwork& net, const ConstructionFaults& faults) {
  if (!net.pure_requ()) {
    throw UsageError("the derivative compiler accepts pure ReQU networks only");
  }
  return compile_derivative_network(to_requ(net), faults);
}

// ---------------------------------------------------------------------------
// Bounds

BoundReport univariate_bounds(unsigned degree) {
  const std::size_t n = degree;
  return {2 * n - 1, 4, 5 * n - 1, 8 * n};
}

BoundReport multivariate_bounds(unsigned degree, std::size_t dim) {
  const auto n = static_cast<double>(degree);
  const auto d = static_cast<double>(dim);
  return {2 * static_cast<std::size_t>(degree) - 1,
          static_cast<std::size_t>(12.0 * std::pow(n, d - 1.0)),
          static_cast<std::size_t>(15.0 * std::pow(n, d)),
          static_cast<std::size_t>(24.0 * std::pow(n, d))};
}

BoundReport derivative_bounds(const ReQUNetwork& net) {
  const NetworkCounts c = network_counts(net);
  return {3 * c.depth + 3, 10 * c.width, 17 * c.neurons, 23 * c.size};
}

std::vector<std::string> bound_violations(const SizeReport& size, const BoundReport& bound) {
  std::vector<std::string> out;
  if (size.depth > bound.depth) out.emplace_back("depth");
  if (size.width > bound.width) out.emplace_back("width");
  if (size.neurons > bound.neurons) out.emplace_back("neurons");
  if (size.parameters > bound.parameters) out.emplace_back("parameters");
  return out;
}

// ---------------------------------------------------------------------------
// Verification suite

namespace {

std::string within(std::size_t violated, std::size_t total, const std::string& what) {
  if (violated == 0) return "all " + std::to_string(total) + " within bounds";
  return std::to_string(violated) + "/" + std::to_string(total) + " exceed: " + what;
}

std::string num(double v) {
  std::ostringstream out;
  out << std::setprecision(3) << v;
  return out.str();
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

// Worst relative error of `net` against p on `points` uniform draws in [-2, 2]^d.
double poly_error(const MixedNetwork& net, const Polynomial& p, std::size_t points, CounterRng& rng) {
  Matrix x(static_cast<Eigen::Index>(p.dim()), static_cast<Eigen::Index>(points));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-2.0, 2.0);
  const Vector got = net.evaluate_batch(x);
  double worst = 0.0;
  std::vector<double> pt(p.dim());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (std::size_t i = 0; i < p.dim(); ++i) pt[i] = x(static_cast<Eigen::Index>(i), j);
    const double want = p.evaluate(pt);
    worst = std::max(worst, std::abs(got(j) - want) / (1.0 + std::abs(want)));
  }
  return worst;
}

}  // namespace

std::vector<VerificationRow> verify_constructions(const VerifyOptions& options) {
  std::vector<VerificationRow> rows;
  const ConstructionFaults& faults = options.faults;

  auto gadget_row = [&](const std::string& name, bool ok, const std::string& detail,
                        const MixedNetwork& net, BoundReport bound) {
    VerificationRow r{name, "exactness", ok, detail, size_report(net), bound};
    rows.push_back(r);
  };
  {
    const MixedNetwork sq = square_gadget();
    const std::vector<double> m3{-3.0};
    const MixedNetwork pr = product_gadget(faults);
    const std::vector<double> pt{2.0, -3.0};
    const MixedNetwork id = identity_gadget();
    const std::vector<double> x3{0.3};
    const SizeReport ssq = size_report(sq), spr = size_report(pr), sid = size_report(id);
    gadget_row("square gadget", sq.evaluate(m3) == 9.0 && ssq.neurons == 2,
               "s(-3) = " + num(sq.evaluate(m3)), sq, {1, 2, 2, 4});
    CounterRng prng(derive_seed(options.seed, "gadget-product"));
    double pworst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const std::vector<double> xy{prng.uniform(-10.0, 10.0), prng.uniform(-10.0, 10.0)};
      const double want = xy[0] * xy[1];
      pworst = std::max(pworst, std::abs(pr.evaluate(xy) - want) / (1.0 + std::abs(want)));
    }
    gadget_row("product gadget",
               std::abs(pr.evaluate(pt) + 6.0) <= 1e-15 && pworst <= 1e-12 && spr.neurons == 4,
               "p(2,-3) = " + num(pr.evaluate(pt)) + ", max rel err " + num(pworst),
               pr, {1, 4, 4, 12});
    gadget_row("identity gadget", std::abs(id.evaluate(x3) - 0.3) <= 1e-15 && sid.neurons == 4,
               "i(0.3) = " + num(id.evaluate(x3)), id, {1, 4, 4, 12});
    // product(x, 1) == identity(x)
    CounterRng rng(derive_seed(options.seed, "gadget-algebra"));
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const double x = rng.uniform(-10.0, 10.0);
      const std::vector<double> a{x, 1.0}, b{x};
      worst = std::max(worst, std::abs(pr.evaluate(a) - id.evaluate(b)) / (1.0 + std::abs(x)));
    }
    gadget_row("product(x,1) = identity(x)", worst <= 1e-12, "max rel diff " + num(worst),
               pr, {1, 4, 4, 12});
  }

  // Univariate: grouped by degree.
  {
    CounterRng pts(derive_seed(options.seed, "univariate-points"));
    const unsigned max_deg = 8;
    std::vector<double> worst(max_deg + 1, 0.0);
    std::vector<std::size_t> count(max_deg + 1, 0), violated(max_deg + 1, 0);
    std::vector<SizeReport> largest(max_deg + 1);
    std::vector<std::string> what(max_deg + 1);
    for (std::size_t c = 0; c < options.univariate_cases; ++c) {
      const unsigned deg = 1 + static_cast<unsigned>(c % max_deg);
      const Polynomial p = random_polynomial(1, deg, derive_seed(options.seed, "univariate", c));
      const MixedNetwork net = construct_univariate_poly(p, faults);
      worst[deg] = std::max(worst[deg], poly_error(net, p, options.points, pts));
      ++count[deg];
      const SizeReport s = size_report(net);
      const auto v = bound_violations(s, univariate_bounds(deg));
      if (!v.empty()) {
        ++violated[deg];
        what[deg] = join(v);
      }
      if (s.parameters >= largest[deg].parameters) largest[deg] = s;
    }
    for (unsigned deg = 1; deg <= max_deg; ++deg) {
      if (count[deg] == 0) continue;
      const std::string name = "univariate N=" + std::to_string(deg);
      rows.push_back({name, "exactness", worst[deg] <= 1e-9,
                      std::to_string(count[deg]) + " polys, max rel err " + num(worst[deg]),
                      largest[deg], univariate_bounds(deg)});
      rows.push_back({name, "size", violated[deg] == 0,
                      within(violated[deg], count[deg], what[deg]),
                      largest[deg], univariate_bounds(deg)});
    }
  }

  // Multivariate: trivariate, degree 1..3.
  {
    CounterRng pts(derive_seed(options.seed, "multivariate-points"));
    const unsigned max_deg = 3;
    const std::size_t dim = 3;
    std::vector<double> worst(max_deg + 1, 0.0);
    std::vector<std::size_t> count(max_deg + 1, 0), violated(max_deg + 1, 0);
    std::vector<SizeReport> largest(max_deg + 1);
    std::vector<std::string> what(max_deg + 1);
    for (std::size_t c = 0; c < options.multivariate_cases; ++c) {
      const unsigned deg = 1 + static_cast<unsigned>(c % max_deg);
      const Polynomial p = random_polynomial(dim, deg, derive_seed(options.seed, "multivariate", c));
      const MixedNetwork net = construct_multivariate_poly(p, faults);
      worst[deg] = std::max(worst[deg], poly_error(net, p, options.points, pts));
      ++count[deg];
      const SizeReport s = size_report(net);
      const auto v = bound_violations(s, multivariate_bounds(deg, dim));
      if (!v.empty()) {
        ++violated[deg];
        what[deg] = join(v);
      }
      if (s.parameters >= largest[deg].parameters) largest[deg] = s;
    }
    for (unsigned deg = 1; deg <= max_deg; ++deg) {
      if (count[deg] == 0) continue;
      const std::string name = "trivariate N=" + std::to_string(deg);
      rows.push_back({name, "exactness", worst[deg] <= 1e-9,
                      std::to_string(count[deg]) + " polys, max rel err " + num(worst[deg]),
                      largest[deg], multivariate_bounds(deg, dim)});
      rows.push_back({name, "size", violated[deg] == 0,
                      within(violated[deg], count[deg], what[deg]),
                      largest[deg], multivariate_bounds(deg, dim)});
    }
  }

  // Derivative networks.
  {
    CounterRng rng(derive_seed(options.seed, "derivative"));
    double worst = 0.0;
    std::size_t violated = 0;
    std::string what;
    SizeReport largest;
    BoundReport largest_bound;
    for (std::size_t c = 0; c < options.derivative_cases; ++c) {
      const std::size_t d = 1 + rng.below(3);
      const std::size_t depth = 1 + rng.below(3);
      std::vector<std::size_t> widths{d + 1};
      for (std::size_t i = 0; i < depth; ++i) widths.push_back(1 + rng.below(16));
      widths.push_back(1);
      ReQUNetwork net{NetworkShape(widths)};
      for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(widths[l]));
        for (Eigen::Index i = 0; i < net.weights()[l].size(); ++i) {
          net.weights()[l].data()[i] = rng.uniform(-1.0, 1.0) * scale * 1.5;
        }
        for (Eigen::Index i = 0; i < net.biases()[l].size(); ++i) net.biases()[l](i) = rng.uniform(-0.5, 0.5);
      }
      const MixedNetwork dnet = compile_derivative_network(net, faults);
      Matrix inputs(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(options.points));
      for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = rng.uniform_open();
      const Vector got = dnet.evaluate_batch(inputs);
      const Vector want = forward_with_tangent_batch(net, inputs).tangent;
      worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
      const SizeReport s = size_report(dnet);
      const BoundReport b = derivative_bounds(net);
      const auto v = bound_violations(s, b);
      if (!v.empty()) {
        ++violated;
        what = join(v);
      }
      if (s.parameters >= largest.parameters) {
        largest = s;
        largest_bound = b;
      }
    }
    rows.push_back({"derivative network", "exactness", worst <= 1e-9,
                    std::to_string(options.derivative_cases) + " nets, max abs err " + num(worst),
                    largest, largest_bound});
    rows.push_back({"derivative network", "size", violated == 0,
                    within(violated, options.derivative_cases, what),
                    largest, largest_bound});
  }
  return rows;
}

}  // namespace dqrp
