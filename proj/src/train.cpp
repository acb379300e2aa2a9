#include "dqrp/train.hpp"

#include "dqrp/error.hpp"
#include "dqrp/format.hpp"
#include "dqrp/losses.hpp"
#include "dqrp/rng.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace dqrp {

double TrainConfig::lambda_for(std::size_t n) const {
  const double value = lambda ? *lambda : std::log(static_cast<double>(n));
  if (!(value >= 0.0) || !std::isfinite(value)) throw ConfigError("lambda must be a finite nonnegative number");
  return value;
}

std::vector<std::vector<std::size_t>> sample_minibatches(std::size_t n, std::size_t m,
                                                         std::uint64_t epoch_seed) {
  if (m == 0 || m > n) {
    throw ConfigError("minibatch size must satisfy 1 <= m <= n (m = " + std::to_string(m) +
                      ", n = " + std::to_string(n) + ")");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CounterRng rng(epoch_seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += m) {
    const std::size_t end = std::min(n, start + m);
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

namespace {

void validate(const Dataset& data, const TrainConfig& config) {
  if (data.size() == 0) throw ConfigError("training data is empty");
  if (static_cast<std::size_t>(data.x.rows()) != data.size()) {
    throw ShapeError("covariate rows and responses differ in count");
  }
  if (config.batch_size == 0 || config.batch_size > data.size()) {
    throw ConfigError("minibatch size must satisfy 1 <= m <= n (m = " +
                      std::to_string(config.batch_size) + ", n = " + std::to_string(data.size()) +
                      ")");
  }
  if (config.hidden.empty()) throw ConfigError("at least one hidden layer is required");
}

Vector draw_uniform(CounterRng& rng, std::size_t count) {
  Vector v(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform_open();
  return v;
}

Batch full_batch(const Dataset& data, const Vector& xi) {
  Batch b;
  b.x = data.x.transpose();
  b.y = data.y;
  b.xi = xi;
  return b;
}

TrainResult run(const Dataset& data, const TrainConfig& config, Algorithm algorithm,
                const EpochCallback& on_epoch) {
  validate(data, config);
  const std::size_t n = data.size();
  TrainResult result;
  result.lambda = config.lambda_for(n);
  result.network =
      init_network(NetworkShape::for_covariates(data.dim(), config.hidden), config.seed);
  AdamState adam(result.network, config.adam);

  CounterRng xi_rng(derive_seed(config.seed, "xi"));
  Vector fixed_xi;
  if (algorithm == Algorithm::FixedXi) {
    fixed_xi = draw_uniform(xi_rng, n);
    result.xi_draws += n;
  }
  // Levels used only to report the full-data objective. For the fresh-xi
  // variant they come from their own stream so reporting never shifts the
  // training draws.
  Vector history_xi = fixed_xi;
  if (algorithm == Algorithm::FreshXi) {
    CounterRng hist_rng(derive_seed(config.seed, "history-xi"));
    history_xi = draw_uniform(hist_rng, n);
  }
  const Batch history_batch = full_batch(data, history_xi);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches =
        sample_minibatches(n, config.batch_size, derive_seed(config.seed, "epoch", epoch));
    for (const auto& idx : batches) {
      Batch b;
      b.x = data.columns(idx);
      b.y.resize(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t j = 0; j < idx.size(); ++j) {
        b.y(static_cast<Eigen::Index>(j)) = data.y(static_cast<Eigen::Index>(idx[j]));
      }
      if (algorithm == Algorithm::FixedXi) {
        b.xi.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) {
          b.xi(static_cast<Eigen::Index>(j)) = fixed_xi(static_cast<Eigen::Index>(idx[j]));
        }
      } else {
        b.xi = draw_uniform(xi_rng, idx.size());
        result.xi_draws += idx.size();
      }
      const Objective obj = objective_gradient(result.network, b, result.lambda);
      adam_step(adam, result.network, obj.gradients);
      ++result.steps;
    }
    const RiskAndPenalty rp = risk_and_penalty(result.network, history_batch);
    EpochRecord rec{epoch, rp.risk, rp.penalty, rp.risk + result.lambda * rp.penalty};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace

TrainResult train_algorithm1(const Dataset& data, const TrainConfig& config,
                             const EpochCallback& on_epoch) {
  return run(data, config, Algorithm::FixedXi, on_epoch);
}

TrainResult train_algorithm2(const Dataset& data, const TrainConfig& config,
                             const EpochCallback& on_epoch) {
  return run(data, config, Algorithm::FreshXi, on_epoch);
}

TrainResult train(const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch) {
  return run(data, config, config.algorithm, on_epoch);
}

std::string history_to_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,empirical_risk,empirical_penalty,penalized_risk\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.empirical_risk) << ','
        << format_double(r.empirical_penalty) << ',' << format_double(r.penalized_risk) << '\n';
  }
  return out.str();
}

}  // namespace dqrp
