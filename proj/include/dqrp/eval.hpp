#pragma once

#include "dqrp/network.hpp"
#include "dqrp/simdata.hpp"
#include "dqrp/train.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dqrp {

/// A candidate quantile function evaluated on stacked inputs ((d+1) x k,
/// last row tau). `tau_derivative` may be empty when only values are needed.
struct QuantileFunction {
  std::function<Vector(const Matrix&)> value;
  std::function<Vector(const Matrix&)> tau_derivative;
};

QuantileFunction network_function(const ReQUNetwork& net);
/// f0(x, tau) + shift.
QuantileFunction oracle_function(const ModelSpec& model, double shift = 0.0);

struct EvalConfig {
  std::size_t test_size = 100000;  ///< T for L1 / L2^2
  std::size_t mc_size = 10000;     ///< T for risk, penalty and crossing rate
  std::vector<double> taus{0.05, 0.25, 0.5, 0.75, 0.95};
  std::size_t replications = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// (1/T) sum |fhat(X_t, tau) - f0(X_t, tau)|, X_t from the model covariate law.
double l1_error(const ReQUNetwork& net, const ModelSpec& model, double tau, std::size_t T,
                std::uint64_t seed);
double l1_error(const QuantileFunction& f, const ModelSpec& model, double tau, std::size_t T,
                std::uint64_t seed);

/// (1/T) sum (fhat - f0)^2.
double l22_error(const ReQUNetwork& net, const ModelSpec& model, double tau, std::size_t T,
                 std::uint64_t seed);
double l22_error(const QuantileFunction& f, const ModelSpec& model, double tau, std::size_t T,
                 std::uint64_t seed);

struct RiskPenaltyEstimate {
  double risk = 0.0;
  double penalty = 0.0;
};

/// Monte Carlo risk E rho_xi(Y - f(X, xi)) and penalty E max(-df/dtau, 0) on
/// fresh (X, Y, xi) triples. The penalty is reported as 0 when `f` has no
/// tau derivative.
RiskPenaltyEstimate mc_risk_and_penalty(const ReQUNetwork& net, const ModelSpec& model,
                                        std::size_t T, std::uint64_t seed);
RiskPenaltyEstimate mc_risk_and_penalty(const QuantileFunction& f, const ModelSpec& model,
                                        std::size_t T, std::uint64_t seed);

/// Fraction of fresh (x, xi) points with df/dtau < 0.
double crossing_rate(const ReQUNetwork& net, const ModelSpec& model, std::size_t T,
                     std::uint64_t seed);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  ///< sample standard deviation, 0 when R = 1
};

MeanSd mean_sd(const std::vector<double>& values);

struct ReplicationMetrics {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::vector<double> l1;   ///< per tau
  std::vector<double> l22;  ///< per tau
  double risk = 0.0;
  double penalty = 0.0;
  double crossing = 0.0;
  double final_training_objective = 0.0;
};

struct ReplicationReport {
  std::string method = "DQRP";
  ModelSpec model;
  std::size_t n = 0;
  double lambda = 0.0;
  std::vector<double> taus;
  std::vector<MeanSd> l1;
  std::vector<MeanSd> l22;
  MeanSd risk;
  MeanSd penalty;
  MeanSd crossing;
  std::vector<ReplicationMetrics> replications;
};

/// Evaluates one trained network on every metric.
ReplicationMetrics evaluate_network(const ReQUNetwork& net, const ModelSpec& model,
                                    const EvalConfig& config, std::uint64_t seed);

/// Aggregates per-replication metrics in index order.
ReplicationReport summarize(const ModelSpec& model, std::size_t n, double lambda,
                            const std::vector<double>& taus,
                            std::vector<ReplicationMetrics> replications);

/// Worker count from DQRP_THREADS, else the hardware concurrency.
std::size_t worker_threads();

/// For each replication: generate data, train, evaluate; then aggregate.
/// Replications run on worker threads; results do not depend on the thread count.
ReplicationReport run_experiment(const ModelSpec& model, std::size_t n, const TrainConfig& train,
                                 const EvalConfig& eval);

struct SweepRow {
  double lambda = 0.0;
  double risk = 0.0;
  double penalty = 0.0;
  double crossing = 0.0;
  double final_training_objective = 0.0;
};

/// Trains one network per lambda with the same seed and scores it. With a
/// model attached to `data` the scores are Monte Carlo estimates
/// (eval.mc_size draws); otherwise risk, penalty and crossing are measured on
/// the data covariates with fresh xi. Throws UsageError on an empty grid or a
/// negative lambda.
std::vector<SweepRow> sweep_lambda(const Dataset& data, const TrainConfig& train,
                                   const std::vector<double>& grid, const EvalConfig& eval);

/// lambda,risk,penalty,crossing,final_training_objective
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

/// Rows tau x method: method,tau,l1_mean,l1_sd,l22_mean,l22_sd.
std::string report_to_csv(const ReplicationReport& report);
/// Full report including per-replication values.
std::string report_to_json(const ReplicationReport& report);

}  // namespace dqrp
