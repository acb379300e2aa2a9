#pragma once

#include "dqrp/adam.hpp"
#include "dqrp/network.hpp"
#include "dqrp/simdata.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dqrp {

enum class Algorithm { FixedXi = 1, FreshXi = 2 };

struct TrainConfig {
  Algorithm algorithm = Algorithm::FreshXi;
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  /// Penalty weight. Unset means log(n).
  std::optional<double> lambda;
  std::vector<std::size_t> hidden{256, 256, 256};
  std::uint64_t seed = 0;
  AdamConfig adam;

  /// Resolved penalty weight for a sample of size n.
  double lambda_for(std::size_t n) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double empirical_risk = 0.0;
  double empirical_penalty = 0.0;
  double penalized_risk = 0.0;
};

struct TrainResult {
  ReQUNetwork network;
  std::vector<EpochRecord> history;
  double lambda = 0.0;
  /// Number of xi values drawn for training (n for the fixed-xi variant,
  /// m per minibatch for the fresh-xi variant).
  std::size_t xi_draws = 0;
  std::size_t steps = 0;
};

/// Called after each epoch; used for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// One shuffled pass: a permutation of 0..n-1 split into ceil(n/m) batches,
/// the last possibly short. Throws ConfigError unless 1 <= m <= n.
std::vector<std::vector<std::size_t>> sample_minibatches(std::size_t n, std::size_t m,
                                                         std::uint64_t epoch_seed);

/// xi_i ~ U(0,1) drawn once and paired with (x_i, y_i) for the whole run.
TrainResult train_algorithm1(const Dataset& data, const TrainConfig& config,
                             const EpochCallback& on_epoch = {});

/// Fresh xi_1..xi_m drawn for every minibatch.
TrainResult train_algorithm2(const Dataset& data, const TrainConfig& config,
                             const EpochCallback& on_epoch = {});

/// Dispatches on config.algorithm.
TrainResult train(const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Columns: epoch, empirical_risk, empirical_penalty, penalized_risk.
std::string history_to_csv(const std::vector<EpochRecord>& history);

}  // namespace dqrp
