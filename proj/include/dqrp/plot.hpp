#pragma once

#include "dqrp/network.hpp"
#include "dqrp/simdata.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dqrp {

struct PlotOptions {
  std::vector<double> taus{0.05, 0.25, 0.5, 0.75, 0.95};
  std::size_t width = 720;
  std::size_t height = 480;
  std::size_t grid_points = 200;  ///< samples per curve
  std::string title;
};

/// Scatter of the data with one solid curve per tau for the network and, when
/// `oracle` is set, one dashed curve per tau for the true quantile. One color
/// per tau. The x axis is in original units when the data carry a scaling.
/// Throws UsageError for multivariate or empty data.
std::string quantile_plot_svg(const Dataset& data, const ReQUNetwork& net,
                              const std::optional<ModelSpec>& oracle, const PlotOptions& options = {});

struct SweepPoint {
  double lambda = 0.0;
  double risk = 0.0;
  double penalty = 0.0;
};

/// Risk and penalty against lambda in two stacked panels with a vertical
/// dashed marker at `marker`. Throws UsageError on an empty sweep.
std::string sweep_plot_svg(const std::vector<SweepPoint>& points, double marker,
                           const PlotOptions& options = {});

/// Color assigned to the i-th curve.
std::string curve_color(std::size_t i);

}  // namespace dqrp
