#include "dqrp/plot.hpp"

#include "dqrp/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <tuple>

namespace dqrp {

namespace {

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = INFINITY;
  double hi = -INFINITY;

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(lo <= hi)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
};

// Plot area inside an SVG canvas.
struct Frame {
  double left, top, width, height;
  Range x, y;

  double px(double v) const { return left + (v - x.lo) / (x.hi - x.lo) * width; }
  double py(double v) const { return top + height - (v - y.lo) / (y.hi - y.lo) * height; }
};

std::vector<double> ticks(const Range& r, int target = 5) {
  const double span = r.hi - r.lo;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(r.lo / step) * step; t <= r.hi + 1e-9 * step; t += step) {
    out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  }
  return out;
}

void axes(std::ostringstream& svg, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  svg << "<rect x=\"" << fmt(f.left) << "\" y=\"" << fmt(f.top) << "\" width=\"" << fmt(f.width)
      << "\" height=\"" << fmt(f.height) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (double t : ticks(f.x)) {
    svg << "<text class=\"tick\" x=\"" << fmt(f.px(t)) << "\" y=\"" << fmt(f.top + f.height + 16)
        << "\" text-anchor=\"middle\">" << fmt(t) << "</text>\n";
  }
  for (double t : ticks(f.y)) {
    svg << "<text class=\"tick\" x=\"" << fmt(f.left - 6) << "\" y=\"" << fmt(f.py(t) + 4)
        << "\" text-anchor=\"end\">" << fmt(t) << "</text>\n";
  }
  svg << "<text x=\"" << fmt(f.left + f.width / 2) << "\" y=\"" << fmt(f.top + f.height + 34)
      << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
  svg << "<text x=\"" << fmt(f.left - 44) << "\" y=\"" << fmt(f.top + f.height / 2)
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 " << fmt(f.left - 44) << " "
      << fmt(f.top + f.height / 2) << ")\">" << escape(ylabel) << "</text>\n";
}

void polyline(std::ostringstream& svg, const Frame& f, const std::vector<double>& xs,
              const std::vector<double>& ys, const std::string& color, bool dashed,
              const std::string& cls, const std::string& label) {
  svg << "<polyline class=\"" << cls << "\" data-label=\"" << escape(label) << "\" fill=\"none\" stroke=\""
      << color << "\" stroke-width=\"2\"";
  if (dashed) svg << " stroke-dasharray=\"6 4\"";
  svg << " points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(ys[i])) continue;
    svg << fmt(f.px(xs[i])) << "," << fmt(f.py(ys[i])) << (i + 1 < xs.size() ? " " : "");
  }
  svg << "\"/>\n";
}

std::string open_svg(const PlotOptions& o) {
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << o.width << "\" height=\"" << o.height
      << "\" viewBox=\"0 0 " << o.width << " " << o.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<style>.tick{font-size:10px;fill:#333}</style>\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!o.title.empty()) {
    svg << "<text x=\"" << o.width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">"
        << escape(o.title) << "</text>\n";
  }
  return svg.str();
}

}  // namespace

std::string curve_color(std::size_t i) {
  static constexpr std::array<const char*, 8> palette{"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                                      "#66a61e", "#e6ab02", "#a6761d", "#666666"};
  return palette[i % palette.size()];
}

std::string quantile_plot_svg(const Dataset& data, const ReQUNetwork& net,
                              const std::optional<ModelSpec>& oracle, const PlotOptions& options) {
  if (data.size() == 0) throw UsageError("cannot plot an empty dataset");
  if (data.dim() != 1) throw UsageError("quantile plots support univariate covariates only");
  if (oracle && oracle->dim != 1) throw UsageError("quantile plots support univariate models only");
  if (net.input_dim() != 2) throw ShapeError("network input dimension does not match the data");
  if (options.grid_points < 2) throw UsageError("a curve needs at least two grid points");

  const bool scaled = !data.scaling.empty();
  auto to_axis = [&](double u) { return scaled ? data.scaling[0].invert(u) : u; };

  // Curves span the covariate range of the data (in network units).
  double ulo = data.x.col(0).minCoeff(), uhi = data.x.col(0).maxCoeff();
  if (oracle) {
    ulo = 0.0;
    uhi = 1.0;
  }
  const std::size_t g = options.grid_points;
  std::vector<double> grid(g), axis(g);
  for (std::size_t i = 0; i < g; ++i) {
    grid[i] = ulo + (uhi - ulo) * static_cast<double>(i) / static_cast<double>(g - 1);
    axis[i] = to_axis(grid[i]);
  }

  std::vector<std::vector<double>> fitted, truth;
  Range xr, yr;
  for (double a : axis) xr.add(a);
  for (std::size_t i = 0; i < data.size(); ++i) {
    xr.add(to_axis(data.x(static_cast<Eigen::Index>(i), 0)));
    yr.add(data.y(static_cast<Eigen::Index>(i)));
  }
  for (double tau : options.taus) {
    Matrix in(2, static_cast<Eigen::Index>(g));
    for (std::size_t i = 0; i < g; ++i) {
      in(0, static_cast<Eigen::Index>(i)) = grid[i];
      in(1, static_cast<Eigen::Index>(i)) = tau;
    }
    const Vector v = forward_batch(net, in);
    fitted.emplace_back(v.data(), v.data() + v.size());
    for (double y : fitted.back()) yr.add(y);
    if (oracle) {
      std::vector<double> t(g);
      for (std::size_t i = 0; i < g; ++i) {
        const std::array<double, 1> x{grid[i]};
        t[i] = oracle_quantile(*oracle, x, tau);
        yr.add(t[i]);
      }
      truth.push_back(std::move(t));
    }
  }
  xr.pad();
  yr.pad();

  const double w = static_cast<double>(options.width), h = static_cast<double>(options.height);
  Frame f{70.0, 30.0, w - 180.0, h - 80.0, xr, yr};
  std::ostringstream svg;
  svg << open_svg(options);
  axes(svg, f, data.covariate_names.empty() ? "x" : data.covariate_names[0], data.response_name);

  svg << "<g class=\"data\" fill=\"#999\" fill-opacity=\"0.5\">\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    svg << "<circle cx=\"" << fmt(f.px(to_axis(data.x(static_cast<Eigen::Index>(i), 0)))) << "\" cy=\""
        << fmt(f.py(data.y(static_cast<Eigen::Index>(i)))) << "\" r=\"2\"/>\n";
  }
  svg << "</g>\n";

  for (std::size_t k = 0; k < options.taus.size(); ++k) {
    const std::string label = "tau=" + fmt(options.taus[k]);
    if (oracle) polyline(svg, f, axis, truth[k], curve_color(k), true, "oracle", label);
    polyline(svg, f, axis, fitted[k], curve_color(k), false, "estimate", label);
  }

  // Legend
  const double lx = f.left + f.width + 14.0;
  for (std::size_t k = 0; k < options.taus.size(); ++k) {
    const double ly = f.top + 10.0 + 18.0 * static_cast<double>(k);
    svg << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(lx + 22) << "\" y2=\"" << fmt(ly)
        << "\" stroke=\"" << curve_color(k) << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << fmt(lx + 28) << "\" y=\"" << fmt(ly + 4) << "\">tau=" << fmt(options.taus[k])
        << "</text>\n";
  }
  if (oracle) {
    const double ly = f.top + 10.0 + 18.0 * static_cast<double>(options.taus.size()) + 8.0;
    svg << "<text x=\"" << fmt(lx) << "\" y=\"" << fmt(ly) << "\" font-size=\"10\">dashed: truth</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string sweep_plot_svg(const std::vector<SweepPoint>& points, double marker, const PlotOptions& options) {
  if (points.empty()) throw UsageError("cannot plot an empty lambda sweep");
  std::vector<double> xs, risk, penalty;
  Range xr, rr, pr;
  for (const auto& p : points) {
    xs.push_back(p.lambda);
    risk.push_back(p.risk);
    penalty.push_back(p.penalty);
    xr.add(p.lambda);
    rr.add(p.risk);
    pr.add(p.penalty);
  }
  xr.add(marker);
  xr.pad();
  rr.pad();
  pr.pad();

  const double w = static_cast<double>(options.width), h = static_cast<double>(options.height);
  const double panel = (h - 110.0) / 2.0;
  Frame top{70.0, 30.0, w - 100.0, panel, xr, rr};
  Frame bottom{70.0, 30.0 + panel + 45.0, w - 100.0, panel, xr, pr};

  std::ostringstream svg;
  svg << open_svg(options);
  for (const auto& [frame, ys, name] : {std::tuple{top, risk, "risk"}, std::tuple{bottom, penalty, "penalty"}}) {
    axes(svg, frame, "lambda", name);
    polyline(svg, frame, xs, ys, "#1b9e77", false, name, name);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      svg << "<circle cx=\"" << fmt(frame.px(xs[i])) << "\" cy=\"" << fmt(frame.py(ys[i]))
          << "\" r=\"3\" fill=\"#1b9e77\"/>\n";
    }
    svg << "<line class=\"marker\" x1=\"" << fmt(frame.px(marker)) << "\" y1=\"" << fmt(frame.top) << "\" x2=\""
        << fmt(frame.px(marker)) << "\" y2=\"" << fmt(frame.top + frame.height)
        << "\" stroke=\"#d95f02\" stroke-dasharray=\"4 3\"/>\n";
  }
  svg << "<text x=\"" << fmt(top.px(marker) + 4) << "\" y=\"" << fmt(top.top + 12)
      << "\" fill=\"#d95f02\" font-size=\"10\">log n</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace dqrp
