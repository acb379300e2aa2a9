#include "dqrp/simdata.hpp"

#include "dqrp/error.hpp"
#include "dqrp/format.hpp"
#include "dqrp/rng.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace dqrp {

namespace {

constexpr double kPi = std::numbers::pi;

double dot8(const std::array<double, 8>& c, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < 8; ++i) s += c[i] * x[i];
  return s;
}

void require_probability(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("probability must lie in (0, 1)");
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  require_probability(p);
  // Acklam's coefficients.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  constexpr double p_high = 1.0 - p_low;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= p_high) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement. In the upper tail work with the complement to keep
  // the residual accurate.
  for (int it = 0; it < 2; ++it) {
    double e;
    if (p > 0.5) {
      e = -(0.5 * std::erfc(x / std::numbers::sqrt2) - (1.0 - p));
    } else {
      e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    }
    const double u = e * std::sqrt(2.0 * kPi) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
  }
  return x;
}

double student_t_cdf(double t, double nu) {
  if (!(nu > 0.0)) throw DomainError("degrees of freedom must be positive");
  if (std::isnan(t)) throw DomainError("t must not be NaN");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * boost::math::ibeta(0.5 * nu, 0.5, nu / (nu + t * t));
  return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double nu) {
  require_probability(p);
  if (!(nu >= 1.0)) throw DomainError("degrees of freedom must be at least 1");
  if (p == 0.5) return 0.0;
  // Solve in the lower half and reflect; the lower tail CDF is computed
  // without cancellation.
  const bool upper = p > 0.5;
  const double target = upper ? 1.0 - p : p;

  const double log_norm = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                          0.5 * std::log(nu * kPi);
  auto pdf = [&](double t) {
    return std::exp(log_norm - 0.5 * (nu + 1.0) * std::log1p(t * t / nu));
  };

  double hi = 0.0;
  double lo = std::min(normal_quantile(target), -1.0);
  while (student_t_cdf(lo, nu) > target) {
    hi = lo;
    lo *= 2.0;
  }
  double t = std::clamp(normal_quantile(target), lo, hi);
  for (int it = 0; it < 200; ++it) {
    const double f = student_t_cdf(t, nu) - target;
    if (f > 0.0) {
      hi = t;
    } else {
      lo = t;
    }
    double next = t - f / pdf(t);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-14 * std::max(1.0, std::abs(t))) {
      t = next;
      break;
    }
    t = next;
  }
  return upper ? -t : t;
}

ModelSpec ModelSpec::make(ModelKind kind, double nu) {
  if (!(nu >= 1.0)) throw ConfigError("degrees of freedom must be at least 1");
  ModelSpec m;
  m.kind = kind;
  m.dim = is_univariate(kind) ? 1 : 8;
  m.nu = nu;
  return m;
}

bool is_univariate(ModelKind kind) {
  switch (kind) {
    case ModelKind::UniLinear:
    case ModelKind::Wave:
    case ModelKind::Triangle:
    case ModelKind::Normal:
      return true;
    default:
      return false;
  }
}

std::string_view model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::UniLinear: return "linear";
    case ModelKind::Wave: return "wave";
    case ModelKind::Triangle: return "triangle";
    case ModelKind::MultiLinear: return "multi-linear";
    case ModelKind::SingleIndex: return "single-index";
    case ModelKind::Additive: return "additive";
    case ModelKind::Normal: return "normal";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  const std::string n = lower(name);
  for (ModelKind k : {ModelKind::UniLinear, ModelKind::Wave, ModelKind::Triangle,
                      ModelKind::MultiLinear, ModelKind::SingleIndex, ModelKind::Additive,
                      ModelKind::Normal}) {
    if (n == model_name(k)) return k;
  }
  if (n == "unilinear" || n == "uni-linear") return ModelKind::UniLinear;
  if (n == "multilinear") return ModelKind::MultiLinear;
  if (n == "singleindex") return ModelKind::SingleIndex;
  throw ConfigError("unknown model '" + std::string(name) +
                    "' (expected linear, wave, triangle, multi-linear, single-index, additive "
                    "or normal)");
}

double oracle_quantile(const ModelSpec& model, std::span<const double> x, double tau) {
  if (x.size() != model.dim) {
    throw UsageError("model " + std::string(model_name(model.kind)) + " expects " +
                     std::to_string(model.dim) + " covariates, got " + std::to_string(x.size()));
  }
  switch (model.kind) {
    case ModelKind::UniLinear:
      return 2.0 * x[0] + student_t_quantile(tau, model.nu);
    case ModelKind::Wave:
      return 2.0 * x[0] * std::sin(4.0 * kPi * x[0]) +
             std::abs(std::sin(kPi * x[0])) * normal_quantile(tau);
    case ModelKind::Triangle:
      return 4.0 * (1.0 - std::abs(x[0] - 0.5)) + std::exp(4.0 * x[0] - 2.0) * normal_quantile(tau);
    case ModelKind::MultiLinear:
      return 2.0 * dot8(kCoefA, x) + student_t_quantile(tau, model.nu);
    case ModelKind::SingleIndex:
      return std::exp(0.1 * dot8(kCoefA, x)) +
             std::abs(std::sin(kPi * dot8(kCoefB, x))) * normal_quantile(tau);
    case ModelKind::Additive:
      return 3.0 * x[0] + 4.0 * (x[1] - 0.5) * (x[1] - 0.5) + 2.0 * std::sin(kPi * x[2]) -
             5.0 * std::abs(x[3] - 0.5) +
             std::exp(0.1 * (dot8(kCoefB, x) - 0.5)) * normal_quantile(tau);
    case ModelKind::Normal:
      return normal_quantile(tau);
  }
  throw UsageError("unknown model kind");
}

double ColumnScaling::apply(double v) const noexcept {
  const double span = max - min;
  return span > 0.0 ? (v - min) / span : 0.0;
}

double ColumnScaling::invert(double u) const noexcept { return min + u * (max - min); }

Matrix Dataset::columns(std::span<const std::size_t> rows) const {
  Matrix out(x.cols(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = x.row(static_cast<Eigen::Index>(rows[j])).transpose();
  }
  return out;
}

Matrix sample_covariates(const ModelSpec& model, std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.dim));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.uniform_open();
  }
  return x;
}

Dataset generate(const ModelSpec& model, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw UsageError("cannot generate an empty dataset");
  Dataset data;
  data.x = sample_covariates(model, n, derive_seed(seed, "covariates"));
  data.y.resize(static_cast<Eigen::Index>(n));
  CounterRng latent(derive_seed(seed, "latent"));
  std::vector<double> row(model.dim);
  for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
    for (std::size_t j = 0; j < model.dim; ++j) row[j] = data.x(i, static_cast<Eigen::Index>(j));
    data.y(i) = oracle_quantile(model, row, latent.uniform_open());
  }
  for (std::size_t j = 0; j < model.dim; ++j) data.covariate_names.push_back("x" + std::to_string(j + 1));
  data.model = model;
  data.seed = seed;
  return data;
}

namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && std::isspace(static_cast<unsigned char>(c.front()))) c.remove_prefix(1);
    while (!c.empty() && std::isspace(static_cast<unsigned char>(c.back()))) c.remove_suffix(1);
    if (c.size() >= 2 && c.front() == '"' && c.back() == '"') c = c.substr(1, c.size() - 2);
  }
  return cells;
}

}  // namespace

Dataset parse_csv(std::string_view text, const std::vector<std::string>& covariates,
                  const std::string& response, bool scale, std::string_view source) {
  const std::string src(source);
  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t nl = text.find('\n', start);
      if (nl == std::string_view::npos) nl = text.size();
      std::string_view line = text.substr(start, nl - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines.push_back(line);
      start = nl + 1;
    }
  }
  while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string_view::npos) {
    lines.pop_back();
  }
  if (lines.empty()) throw ParseError(src + ": empty file");

  const auto header = split_csv_line(lines[0]);
  auto find_column = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ParseError(src + ": missing column '" + name + "'", 0, -1);
  };
  const std::size_t y_col = find_column(response);
  std::vector<std::size_t> x_cols;
  std::vector<std::string> x_names;
  if (covariates.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i != y_col && header[i] != "xi") {
        x_cols.push_back(i);
        x_names.emplace_back(header[i]);
      }
    }
  } else {
    for (const auto& name : covariates) {
      x_cols.push_back(find_column(name));
      x_names.push_back(name);
    }
  }
  if (x_cols.empty()) throw ParseError(src + ": no covariate columns");
  std::optional<std::size_t> xi_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "xi" && i != y_col &&
        std::find(x_cols.begin(), x_cols.end(), i) == x_cols.end()) {
      xi_col = i;
    }
  }

  const std::size_t n = lines.size() - 1;
  if (n == 0) throw ParseError(src + ": no data rows");
  Dataset data;
  data.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(x_cols.size()));
  data.y.resize(static_cast<Eigen::Index>(n));
  if (xi_col) data.xi = Vector(static_cast<Eigen::Index>(n));
  data.covariate_names = x_names;
  data.response_name = response;

  for (std::size_t r = 0; r < n; ++r) {
    const auto cells = split_csv_line(lines[r + 1]);
    const long row = static_cast<long>(r + 1);
    if (cells.size() != header.size()) {
      throw ParseError(src + ": row " + std::to_string(row) + " has " +
                           std::to_string(cells.size()) + " fields, header has " +
                           std::to_string(header.size()),
                       row, -1);
    }
    auto number = [&](std::size_t col) {
      const std::string_view cell = cells[col];
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() ||
          !std::isfinite(v)) {
        throw ParseError(src + ": row " + std::to_string(row) + ", column '" +
                             std::string(header[col]) + "' (" + std::to_string(col + 1) +
                             "): not a finite number: '" + std::string(cell) + "'",
                         row, static_cast<long>(col + 1));
      }
      return v;
    };
    const auto ri = static_cast<Eigen::Index>(r);
    for (std::size_t j = 0; j < x_cols.size(); ++j) data.x(ri, static_cast<Eigen::Index>(j)) = number(x_cols[j]);
    data.y(ri) = number(y_col);
    if (xi_col) (*data.xi)(ri) = number(*xi_col);
  }

  if (scale) {
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) {
      ColumnScaling s{data.x.col(j).minCoeff(), data.x.col(j).maxCoeff()};
      for (Eigen::Index i = 0; i < data.x.rows(); ++i) data.x(i, j) = s.apply(data.x(i, j));
      data.scaling.push_back(s);
    }
  }
  return data;
}

Dataset load_csv(const std::string& path, const std::vector<std::string>& covariates,
                 const std::string& response, bool scale) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw ParseError(e.what());
  }
  return parse_csv(text, covariates, response, scale, path);
}

Dataset load_dataset(const std::string& path, const std::vector<std::string>& covariates,
                     const std::string& response, std::optional<bool> scale) {
  const std::string meta_file = metadata_path(path);
  if (!std::filesystem::exists(meta_file)) {
    return load_csv(path, covariates, response.empty() ? "y" : response, scale.value_or(true));
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text_file(meta_file));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_file + ": " + e.what());
  }
  try {
    std::vector<std::string> cov = covariates;
    if (cov.empty()) cov = meta.at("covariates").get<std::vector<std::string>>();
    const std::string resp = response.empty() ? meta.at("response").get<std::string>() : response;
    Dataset data = load_csv(path, cov, resp, scale.value_or(false));
    if (data.scaling.empty() && meta.contains("scaling")) {
      // Maps recorded for the chosen columns only.
      std::vector<ColumnScaling> maps;
      for (const auto& name : data.covariate_names) {
        for (const auto& m : meta["scaling"]) {
          if (m.at("column").get<std::string>() == name) {
            maps.push_back({m.at("min").get<double>(), m.at("max").get<double>()});
          }
        }
      }
      if (maps.size() == data.covariate_names.size()) data.scaling = std::move(maps);
    }
    if (meta.contains("model") && !meta["model"].is_null()) {
      const ModelSpec spec = ModelSpec::make(parse_model_kind(meta["model"].get<std::string>()),
                                             meta.value("nu", 3.0));
      if (spec.dim == data.dim()) data.model = spec;
    }
    if (meta.contains("seed") && !meta["seed"].is_null()) data.seed = meta["seed"].get<std::uint64_t>();
    return data;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_file + ": " + e.what());
  }
}

std::string dataset_to_csv(const Dataset& data) {
  std::ostringstream out;
  for (const auto& name : data.covariate_names) out << name << ',';
  out << data.response_name;
  if (data.xi) out << ",xi";
  out << '\n';
  for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) out << format_double(data.x(i, j)) << ',';
    out << format_double(data.y(i));
    if (data.xi) out << ',' << format_double((*data.xi)(i));
    out << '\n';
  }
  return out.str();
}

std::string dataset_metadata_json(const Dataset& data) {
  nlohmann::ordered_json meta;
  meta["format"] = "dqrp-dataset";
  meta["version"] = 1;
  meta["n"] = data.size();
  meta["d"] = data.dim();
  meta["covariates"] = data.covariate_names;
  meta["response"] = data.response_name;
  if (data.model) {
    meta["model"] = std::string(model_name(data.model->kind));
    meta["nu"] = data.model->nu;
  } else {
    meta["model"] = nullptr;
  }
  if (data.seed) {
    meta["seed"] = *data.seed;
  } else {
    meta["seed"] = nullptr;
  }
  nlohmann::ordered_json scaling = nlohmann::ordered_json::array();
  for (std::size_t j = 0; j < data.scaling.size(); ++j) {
    scaling.push_back({{"column", data.covariate_names.at(j)},
                       {"min", data.scaling[j].min},
                       {"max", data.scaling[j].max}});
  }
  meta["scaling"] = scaling;
  return meta.dump(2) + "\n";
}

std::string metadata_path(const std::string& csv_path) { return csv_path + ".meta.json"; }

void write_dataset(const std::string& path, const Dataset& data) {
  write_text_file(path, dataset_to_csv(data));
  write_text_file(metadata_path(path), dataset_metadata_json(data));
}

}  // namespace dqrp
