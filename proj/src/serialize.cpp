#include "dqrp/serialize.hpp"

#include "dqrp/error.hpp"
#include "dqrp/format.hpp"

#include <nlohmann/json.hpp>

namespace dqrp {

namespace {

using json = nlohmann::ordered_json;

constexpr int kVersion = 1;
constexpr const char* kFormat = "dqrp-network";

json layer_json(const Matrix& w, const Vector& b) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < w.cols(); ++c) row.push_back(w(r, c));
    rows.push_back(std::move(row));
  }
  json bias = json::array();
  for (Eigen::Index i = 0; i < b.size(); ++i) bias.push_back(b(i));
  return json{{"weights", std::move(rows)}, {"bias", std::move(bias)}};
}

json header(const char* kind, std::vector<std::size_t> widths) {
  return json{{"format", kFormat}, {"version", kVersion}, {"kind", kind}, {"widths", std::move(widths)}};
}

struct Parsed {
  std::string kind;
  std::vector<std::size_t> widths;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  std::vector<std::vector<Activation>> activations;
};

Parsed parse(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("network document is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kFormat) throw ParseError("not a dqrp network document");
    const int version = doc.at("version").get<int>();
    if (version != kVersion) {
      throw ParseError("unsupported network document version " + std::to_string(version));
    }
    Parsed p;
    p.kind = doc.at("kind").get<std::string>();
    if (p.kind != "requ" && p.kind != "mixed") throw ParseError("unknown network kind '" + p.kind + "'");
    p.widths = doc.at("widths").get<std::vector<std::size_t>>();
    const json& layers = doc.at("layers");
    if (p.widths.size() != layers.size() + 1) throw ShapeError("widths and layers disagree");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const json& layer = layers[l];
      const auto rows = static_cast<Eigen::Index>(p.widths[l + 1]);
      const auto cols = static_cast<Eigen::Index>(p.widths[l]);
      const json& w = layer.at("weights");
      const json& b = layer.at("bias");
      if (static_cast<Eigen::Index>(w.size()) != rows || static_cast<Eigen::Index>(b.size()) != rows) {
        throw ShapeError("layer " + std::to_string(l) + " does not match the declared widths");
      }
      Matrix m(rows, cols);
      Vector v(rows);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = w[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(row.size()) != cols) {
          throw ShapeError("layer " + std::to_string(l) + " has a ragged weight row");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
        v(r) = b[static_cast<std::size_t>(r)].get<double>();
      }
      std::vector<Activation> acts;
      if (layer.contains("activations")) {
        for (const auto& a : layer["activations"]) {
          const std::string s = a.get<std::string>();
          if (s == "requ") {
            acts.push_back(Activation::ReQU);
          } else if (s == "relu") {
            acts.push_back(Activation::ReLU);
          } else {
            throw ParseError("unknown activation '" + s + "'");
          }
        }
      } else if (l + 1 < layers.size()) {
        acts.assign(static_cast<std::size_t>(rows), Activation::ReQU);
      }
      p.weights.push_back(std::move(m));
      p.biases.push_back(std::move(v));
      p.activations.push_back(std::move(acts));
    }
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed network document: ") + e.what());
  }
}

}  // namespace

std::string network_to_json(const ReQUNetwork& net) {
  json doc = header("requ", net.shape().widths());
  json layers = json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) layers.push_back(layer_json(net.weights()[l], net.biases()[l]));
  doc["layers"] = std::move(layers);
  return doc.dump(1) + "\n";
}

std::string network_to_json(const MixedNetwork& net) {
  std::vector<std::size_t> widths{net.input_dim()};
  for (const auto& layer : net.layers()) widths.push_back(static_cast<std::size_t>(layer.weights.rows()));
  json doc = header("mixed", widths);
  json layers = json::array();
  for (const auto& layer : net.layers()) {
    json j = layer_json(layer.weights, layer.bias);
    if (!layer.activations.empty()) {
      json acts = json::array();
      for (Activation a : layer.activations) acts.push_back(a == Activation::ReQU ? "requ" : "relu");
      j["activations"] = std::move(acts);
    }
    layers.push_back(std::move(j));
  }
  doc["layers"] = std::move(layers);
  return doc.dump(1) + "\n";
}

ReQUNetwork network_from_json(std::string_view text) {
  Parsed p = parse(text);
  if (p.kind != "requ") {
    for (std::size_t l = 0; l + 1 < p.activations.size(); ++l) {
      for (Activation a : p.activations[l]) {
        if (a != Activation::ReQU) throw UsageError("document describes a mixed ReLU-ReQU network");
      }
    }
  }
  return ReQUNetwork(NetworkShape(p.widths), std::move(p.weights), std::move(p.biases));
}

MixedNetwork mixed_network_from_json(std::string_view text) {
  Parsed p = parse(text);
  std::vector<MixedLayer> layers;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    layers.push_back(MixedLayer{std::move(p.weights[l]), std::move(p.biases[l]), std::move(p.activations[l])});
  }
  return MixedNetwork(p.widths.front(), std::move(layers));
}

void save_network(const std::string& path, const ReQUNetwork& net) { write_text_file(path, network_to_json(net)); }

ReQUNetwork load_network(const std::string& path) { return network_from_json(read_text_file(path)); }

}  // namespace dqrp
