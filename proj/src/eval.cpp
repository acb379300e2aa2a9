#include "dqrp/eval.hpp"

#include "dqrp/error.hpp"
#include "dqrp/format.hpp"
#include "dqrp/losses.hpp"
#include "dqrp/rng.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace dqrp {

namespace {

constexpr Eigen::Index kChunk = 2048;

void require_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
}

// Calls fn(offset, inputs) on column chunks of the stacked (x, tau) block.
template <typename Fn>
void for_chunks(const Matrix& x, const Vector& tau, Fn&& fn) {
  const Eigen::Index T = x.rows();
  for (Eigen::Index start = 0; start < T; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, T - start);
    Matrix inputs(x.cols() + 1, len);
    inputs.topRows(x.cols()) = x.middleRows(start, len).transpose();
    inputs.row(x.cols()) = tau.segment(start, len).transpose();
    fn(start, inputs);
  }
}

Vector oracle_values(const ModelSpec& model, const Matrix& inputs, double shift) {
  const auto d = static_cast<std::size_t>(inputs.rows() - 1);
  Vector out(inputs.cols());
  std::vector<double> x(d);
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
    for (std::size_t i = 0; i < d; ++i) x[i] = inputs(static_cast<Eigen::Index>(i), j);
    out(j) = oracle_quantile(model, x, inputs(inputs.rows() - 1, j)) + shift;
  }
  return out;
}

template <typename Accumulate>
double error_metric(const QuantileFunction& f, const ModelSpec& model, double tau, std::size_t T,
                    std::uint64_t seed, Accumulate acc) {
  require_tau(tau);
  if (T == 0) throw UsageError("test size must be positive");
  const Matrix x = sample_covariates(model, T, derive_seed(seed, "test-covariates"));
  const Vector taus = Vector::Constant(x.rows(), tau);
  double total = 0.0;
  for_chunks(x, taus, [&](Eigen::Index, const Matrix& inputs) {
    const Vector fhat = f.value(inputs);
    const Vector f0 = oracle_values(model, inputs, 0.0);
    for (Eigen::Index j = 0; j < fhat.size(); ++j) total += acc(fhat(j) - f0(j));
  });
  return total / static_cast<double>(T);
}

}  // namespace

QuantileFunction network_function(const ReQUNetwork& net) {
  QuantileFunction f;
  f.value = [&net](const Matrix& inputs) { return forward_batch(net, inputs); };
  f.tau_derivative = [&net](const Matrix& inputs) {
    return forward_with_tangent_batch(net, inputs).tangent;
  };
  return f;
}

QuantileFunction oracle_function(const ModelSpec& model, double shift) {
  QuantileFunction f;
  f.value = [model, shift](const Matrix& inputs) { return oracle_values(model, inputs, shift); };
  return f;
}

void EvalConfig::validate() const {
  if (test_size == 0 || mc_size == 0) throw ConfigError("test sizes must be positive");
  if (replications == 0) throw ConfigError("at least one replication is required");
  if (taus.empty()) throw ConfigError("the quantile grid is empty");
  for (double t : taus) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("quantile grid values must lie in (0, 1)");
  }
}

double l1_error(const QuantileFunction& f, const ModelSpec& model, double tau, std::size_t T,
                std::uint64_t seed) {
  return error_metric(f, model, tau, T, seed, [](double e) { return std::abs(e); });
}

double l22_error(const QuantileFunction& f, const ModelSpec& model, double tau, std::size_t T,
                 std::uint64_t seed) {
  return error_metric(f, model, tau, T, seed, [](double e) { return e * e; });
}

double l1_error(const ReQUNetwork& net, const ModelSpec& model, double tau, std::size_t T,
                std::uint64_t seed) {
  return l1_error(network_function(net), model, tau, T, seed);
}

double l22_error(const ReQUNetwork& net, const ModelSpec& model, double tau, std::size_t T,
                 std::uint64_t seed) {
  return l22_error(network_function(net), model, tau, T, seed);
}

RiskPenaltyEstimate mc_risk_and_penalty(const QuantileFunction& f, const ModelSpec& model,
                                        std::size_t T, std::uint64_t seed) {
  if (T == 0) throw UsageError("Monte Carlo size must be positive");
  const Matrix x = sample_covariates(model, T, derive_seed(seed, "mc-covariates"));
  CounterRng latent(derive_seed(seed, "mc-latent"));
  CounterRng levels(derive_seed(seed, "mc-xi"));
  Vector y(x.rows()), xi(x.rows());
  std::vector<double> row(model.dim);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < model.dim; ++j) row[j] = x(i, static_cast<Eigen::Index>(j));
    y(i) = oracle_quantile(model, row, latent.uniform_open());
    xi(i) = levels.uniform_open();
  }
  RiskPenaltyEstimate est;
  for_chunks(x, xi, [&](Eigen::Index start, const Matrix& inputs) {
    const Vector fhat = f.value(inputs);
    for (Eigen::Index j = 0; j < fhat.size(); ++j) {
      est.risk += check_loss(xi(start + j), y(start + j) - fhat(j));
    }
    if (f.tau_derivative) {
      const Vector g = f.tau_derivative(inputs);
      for (Eigen::Index j = 0; j < g.size(); ++j) {
        if (g(j) < 0.0) est.penalty -= g(j);
      }
    }
  });
  est.risk /= static_cast<double>(T);
  est.penalty /= static_cast<double>(T);
  return est;
}

RiskPenaltyEstimate mc_risk_and_penalty(const ReQUNetwork& net, const ModelSpec& model,
                                        std::size_t T, std::uint64_t seed) {
  return mc_risk_and_penalty(network_function(net), model, T, seed);
}

double crossing_rate(const ReQUNetwork& net, const ModelSpec& model, std::size_t T,
                     std::uint64_t seed) {
  if (T == 0) throw UsageError("Monte Carlo size must be positive");
  const Matrix x = sample_covariates(model, T, derive_seed(seed, "crossing-covariates"));
  CounterRng levels(derive_seed(seed, "crossing-xi"));
  Vector xi(x.rows());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = levels.uniform_open();
  std::size_t crossings = 0;
  for_chunks(x, xi, [&](Eigen::Index, const Matrix& inputs) {
    const Vector g = forward_with_tangent_batch(net, inputs).tangent;
    for (Eigen::Index j = 0; j < g.size(); ++j) crossings += g(j) < 0.0 ? 1 : 0;
  });
  return static_cast<double>(crossings) / static_cast<double>(T);
}

MeanSd mean_sd(const std::vector<double>& values) {
  MeanSd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

ReplicationMetrics evaluate_network(const ReQUNetwork& net, const ModelSpec& model,
                                    const EvalConfig& config, std::uint64_t seed) {
  if (net.input_dim() != model.dim + 1) {
    throw ShapeError("network input dimension " + std::to_string(net.input_dim()) +
                     " does not match model " + std::string(model_name(model.kind)) +
                     " (expects " + std::to_string(model.dim + 1) + ")");
  }
  ReplicationMetrics m;
  m.seed = seed;
  const QuantileFunction f = network_function(net);
  for (double tau : config.taus) {
    m.l1.push_back(l1_error(f, model, tau, config.test_size, seed));
    m.l22.push_back(l22_error(f, model, tau, config.test_size, seed));
  }
  const RiskPenaltyEstimate rp = mc_risk_and_penalty(f, model, config.mc_size, seed);
  m.risk = rp.risk;
  m.penalty = rp.penalty;
  m.crossing = crossing_rate(net, model, config.mc_size, seed);
  return m;
}

ReplicationReport summarize(const ModelSpec& model, std::size_t n, double lambda,
                            const std::vector<double>& taus,
                            std::vector<ReplicationMetrics> replications) {
  ReplicationReport rep;
  rep.model = model;
  rep.n = n;
  rep.lambda = lambda;
  rep.taus = taus;
  for (std::size_t k = 0; k < taus.size(); ++k) {
    std::vector<double> l1, l22;
    for (const auto& r : replications) {
      l1.push_back(r.l1.at(k));
      l22.push_back(r.l22.at(k));
    }
    rep.l1.push_back(mean_sd(l1));
    rep.l22.push_back(mean_sd(l22));
  }
  std::vector<double> risk, pen, cross;
  for (const auto& r : replications) {
    risk.push_back(r.risk);
    pen.push_back(r.penalty);
    cross.push_back(r.crossing);
  }
  rep.risk = mean_sd(risk);
  rep.penalty = mean_sd(pen);
  rep.crossing = mean_sd(cross);
  rep.replications = std::move(replications);
  return rep;
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("DQRP_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

ReplicationReport run_experiment(const ModelSpec& model, std::size_t n, const TrainConfig& train_cfg,
                                 const EvalConfig& eval) {
  eval.validate();
  const std::size_t R = eval.replications;
  std::vector<ReplicationMetrics> results(R);
  std::vector<std::exception_ptr> errors(R);
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (std::size_t r = next++; r < R; r = next++) {
      try {
        const std::uint64_t rep_seed = derive_seed(eval.seed, "replication", r);
        const Dataset data = generate(model, n, derive_seed(rep_seed, "data"));
        TrainConfig cfg = train_cfg;
        cfg.seed = derive_seed(rep_seed, "train");
        const TrainResult trained = train(data, cfg);
        ReplicationMetrics m =
            evaluate_network(trained.network, model, eval, derive_seed(rep_seed, "eval"));
        m.index = r;
        m.seed = rep_seed;
        m.final_training_objective =
            trained.history.empty() ? 0.0 : trained.history.back().penalized_risk;
        results[r] = std::move(m);
      } catch (const std::exception& e) {
        errors[r] = std::make_exception_ptr(
            Error("replication " + std::to_string(r) + ": " + e.what()));
      }
    }
  };
  const std::size_t threads = std::min(worker_threads(), R);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return summarize(model, n, train_cfg.lambda_for(n), eval.taus, std::move(results));
}

std::vector<SweepRow> sweep_lambda(const Dataset& data, const TrainConfig& train_cfg,
                                   const std::vector<double>& grid, const EvalConfig& eval) {
  if (grid.empty()) throw UsageError("lambda grid is empty");
  for (double l : grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw UsageError("lambda grid values must be finite and nonnegative");
  }
  if (eval.mc_size == 0) throw UsageError("Monte Carlo size must be positive");

  const std::size_t K = grid.size();
  std::vector<SweepRow> rows(K);
  std::vector<std::exception_ptr> errors(K);
  std::atomic<std::size_t> next{0};

  auto score_on_data = [&](const ReQUNetwork& net, SweepRow& row) {
    CounterRng levels(derive_seed(eval.seed, "sweep-xi"));
    Batch batch;
    batch.x = data.x.transpose();
    batch.y = data.y;
    batch.xi.resize(data.y.size());
    for (Eigen::Index i = 0; i < batch.xi.size(); ++i) batch.xi(i) = levels.uniform_open();
    const RiskAndPenalty rp = risk_and_penalty(net, batch);
    row.risk = rp.risk;
    row.penalty = rp.penalty;
    const Vector g = forward_with_tangent_batch(net, stack_inputs(batch.x, batch.xi)).tangent;
    std::size_t crossings = 0;
    for (Eigen::Index j = 0; j < g.size(); ++j) crossings += g(j) < 0.0 ? 1 : 0;
    row.crossing = static_cast<double>(crossings) / static_cast<double>(g.size());
  };

  auto worker = [&]() {
    for (std::size_t k = next++; k < K; k = next++) {
      try {
        TrainConfig cfg = train_cfg;
        cfg.lambda = grid[k];
        const TrainResult trained = train(data, cfg);
        SweepRow row;
        row.lambda = grid[k];
        row.final_training_objective =
            trained.history.empty() ? 0.0 : trained.history.back().penalized_risk;
        if (data.model) {
          const RiskPenaltyEstimate rp = mc_risk_and_penalty(trained.network, *data.model, eval.mc_size, eval.seed);
          row.risk = rp.risk;
          row.penalty = rp.penalty;
          row.crossing = crossing_rate(trained.network, *data.model, eval.mc_size, eval.seed);
        } else {
          score_on_data(trained.network, row);
        }
        rows[k] = row;
      } catch (const std::exception& e) {
        errors[k] = std::make_exception_ptr(Error("lambda " + format_double(grid[k]) + ": " + e.what()));
      }
    }
  };
  const std::size_t threads = std::min(worker_threads(), K);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "lambda,risk,penalty,crossing,final_training_objective\n";
  for (const auto& r : rows) {
    out << format_double(r.lambda) << ',' << format_double(r.risk) << ',' << format_double(r.penalty) << ','
        << format_double(r.crossing) << ',' << format_double(r.final_training_objective) << '\n';
  }
  return out.str();
}

std::string report_to_csv(const ReplicationReport& report) {
  std::ostringstream out;
  out << "method,tau,l1_mean,l1_sd,l22_mean,l22_sd\n";
  for (std::size_t k = 0; k < report.taus.size(); ++k) {
    out << report.method << ',' << format_double(report.taus[k]) << ','
        << format_double(report.l1[k].mean) << ',' << format_double(report.l1[k].sd) << ','
        << format_double(report.l22[k].mean) << ',' << format_double(report.l22[k].sd) << '\n';
  }
  return out.str();
}

std::string report_to_json(const ReplicationReport& report) {
  using json = nlohmann::ordered_json;
  auto ms = [](const MeanSd& v) { return json{{"mean", v.mean}, {"sd", v.sd}}; };
  json j;
  j["method"] = report.method;
  j["model"] = std::string(model_name(report.model.kind));
  j["d"] = report.model.dim;
  j["nu"] = report.model.nu;
  j["n"] = report.n;
  j["lambda"] = report.lambda;
  j["replications"] = report.replications.size();
  json per_tau = json::array();
  for (std::size_t k = 0; k < report.taus.size(); ++k) {
    per_tau.push_back({{"tau", report.taus[k]}, {"l1", ms(report.l1[k])}, {"l22", ms(report.l22[k])}});
  }
  j["quantiles"] = per_tau;
  j["risk"] = ms(report.risk);
  j["penalty"] = ms(report.penalty);
  j["crossing_rate"] = ms(report.crossing);
  json reps = json::array();
  for (const auto& r : report.replications) {
    reps.push_back({{"index", r.index},
                    {"seed", r.seed},
                    {"l1", r.l1},
                    {"l22", r.l22},
                    {"risk", r.risk},
                    {"penalty", r.penalty},
                    {"crossing_rate", r.crossing},
                    {"final_training_objective", r.final_training_objective}});
  }
  j["per_replication"] = reps;
  return j.dump(2) + "\n";
}

}  // namespace dqrp
