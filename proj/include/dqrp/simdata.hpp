#pragma once

#include "dqrp/network.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dqrp {

/// Phi^{-1}(p). Acklam's rational approximation followed by one Halley step
/// against erfc. Throws DomainError unless 0 < p < 1.
double normal_quantile(double p);

/// Standard normal CDF.
double normal_cdf(double x);

/// Student-t CDF through the regularized incomplete beta function.
double student_t_cdf(double t, double nu);

/// F_t^{-1}(p; nu) by safeguarded Newton iteration on student_t_cdf, started
/// from the normal quantile. Throws DomainError unless 0 < p < 1 and nu >= 1.
double student_t_quantile(double p, double nu);

enum class ModelKind { UniLinear, Wave, Triangle, MultiLinear, SingleIndex, Additive, Normal };

/// A = (0.409, 0.908, 0, 0, -2.061, 0.254, 3.024, 1.280)
inline constexpr std::array<double, 8> kCoefA{0.409, 0.908, 0.0, 0.0, -2.061, 0.254, 3.024, 1.280};
/// B = (1.386, -0.902, 5.437, 0, 0, -0.482, 4.611, 0)
inline constexpr std::array<double, 8> kCoefB{1.386, -0.902, 5.437, 0.0, 0.0, -0.482, 4.611, 0.0};

/// One of the synthetic data models Y = f0(X, U), U ~ Uniform(0, 1).
///
/// Normal is Y = Phi^{-1}(U) with a dummy covariate; it is a sanity model and
/// not part of the benchmark suite.
struct ModelSpec {
  ModelKind kind = ModelKind::Wave;
  std::size_t dim = 1;
  double nu = 3.0;

  /// Default spec for `kind` (d = 1 or 8, nu = 3). Throws ConfigError when nu < 1.
  static ModelSpec make(ModelKind kind, double nu = 3.0);
  bool operator==(const ModelSpec&) const = default;
};

std::string_view model_name(ModelKind kind);
/// Accepts the names printed by model_name, case-insensitively. Throws ConfigError.
ModelKind parse_model_kind(std::string_view name);
bool is_univariate(ModelKind kind);

/// Closed-form conditional quantile f0(x, tau).
double oracle_quantile(const ModelSpec& model, std::span<const double> x, double tau);

/// Per-column min-max map u = (v - min) / (max - min); constant columns map to 0.
struct ColumnScaling {
  double min = 0.0;
  double max = 1.0;

  double apply(double v) const noexcept;
  double invert(double u) const noexcept;
};

struct Dataset {
  Matrix x;                                  ///< n x d covariates
  Vector y;                                  ///< n responses
  std::optional<Vector> xi;                  ///< optional quantile levels
  std::vector<std::string> covariate_names;  ///< length d
  std::string response_name = "y";
  std::vector<ColumnScaling> scaling;        ///< empty when covariates are unscaled
  std::optional<ModelSpec> model;            ///< set for simulated data
  std::optional<std::uint64_t> seed;

  std::size_t size() const noexcept { return static_cast<std::size_t>(y.size()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(x.cols()); }
  /// Covariates of the selected rows, one sample per column (d x m).
  Matrix columns(std::span<const std::size_t> rows) const;
};

/// Draws X ~ Uniform[0,1]^d, U ~ Uniform(0,1) and sets Y = f0(X, U).
/// Throws UsageError when n == 0.
Dataset generate(const ModelSpec& model, std::size_t n, std::uint64_t seed);

/// n covariate rows drawn from the model's covariate law (n x d).
Matrix sample_covariates(const ModelSpec& model, std::size_t n, std::uint64_t seed);

/// Reads a headed CSV. Covariates default to every column except the response.
/// With `scale`, covariates are min-max mapped to [0, 1] and the map is stored.
/// Throws ParseError with the 1-based data row and column on malformed cells.
Dataset load_csv(const std::string& path, const std::vector<std::string>& covariates,
                 const std::string& response, bool scale = true);

/// Loads a CSV and, when `<path>.meta.json` exists, restores the model, seed,
/// column names and scaling maps recorded there. `scale` defaults to off when
/// the sidecar exists (its values are already in network units) and on
/// otherwise. Empty `covariates` / `response` fall back to the sidecar names,
/// then to "every column but y".
Dataset load_dataset(const std::string& path, const std::vector<std::string>& covariates = {},
                     const std::string& response = "", std::optional<bool> scale = std::nullopt);

/// Parses CSV text; `source` names the input in error messages.
Dataset parse_csv(std::string_view text, const std::vector<std::string>& covariates,
                  const std::string& response, bool scale = true,
                  std::string_view source = "<memory>");

/// Header row then one row per sample: covariates, response, and xi if present.
std::string dataset_to_csv(const Dataset& data);

/// JSON sidecar: model, seed, nu, n, d, column names and scaling maps.
std::string dataset_metadata_json(const Dataset& data);

/// Writes `<path>` and `<path>.meta.json`.
void write_dataset(const std::string& path, const Dataset& data);

/// Path of the metadata sidecar for a dataset CSV.
std::string metadata_path(const std::string& csv_path);

}  // namespace dqrp
