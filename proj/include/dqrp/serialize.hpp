#pragma once

#include "dqrp/constructions.hpp"
#include "dqrp/network.hpp"

#include <string>
#include <string_view>

namespace dqrp {

/// Versioned JSON document: {"format": "dqrp-network", "version": 1, "kind",
/// "widths", "layers": [{"weights": rows, "bias", "activations"?}]}.
/// Doubles are written as shortest round-trip decimals, so reloading is exact.
std::string network_to_json(const ReQUNetwork& net);
std::string network_to_json(const MixedNetwork& net);

/// Throws ParseError on malformed documents or version mismatch, ShapeError on
/// inconsistent layer sizes.
ReQUNetwork network_from_json(std::string_view text);
/// Accepts both "requ" and "mixed" documents.
MixedNetwork mixed_network_from_json(std::string_view text);

void save_network(const std::string& path, const ReQUNetwork& net);
ReQUNetwork load_network(const std::string& path);

}  // namespace dqrp
