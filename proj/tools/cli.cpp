#include "cli.hpp"

#include "dqrp/constructions.hpp"
#include "dqrp/error.hpp"
#include "dqrp/eval.hpp"
#include "dqrp/format.hpp"
#include "dqrp/plot.hpp"
#include "dqrp/rng.hpp"
#include "dqrp/serialize.hpp"
#include "dqrp/simdata.hpp"
#include "dqrp/train.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace dqrp::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* kVersion = "0.1.0";

// Options shared by the subcommands that train networks.
struct TrainOptions {
  int algorithm = 2;
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  std::string lambda = "log-n";
  std::vector<std::size_t> hidden{256, 256, 256};
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;

  TrainConfig resolve(std::uint64_t seed) const {
    TrainConfig c;
    if (algorithm != 1 && algorithm != 2) throw ConfigError("--algorithm must be 1 or 2");
    c.algorithm = algorithm == 1 ? Algorithm::FixedXi : Algorithm::FreshXi;
    c.epochs = epochs;
    c.batch_size = batch_size;
    if (lambda != "log-n") {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(lambda, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != lambda.size()) throw ConfigError("--lambda must be a number or 'log-n'");
      c.lambda = v;
    }
    c.hidden = hidden;
    c.seed = seed;
    c.adam = AdamConfig{learning_rate, beta1, beta2, epsilon};
    return c;
  }
};

void add_train_options(CLI::App* sub, TrainOptions& o) {
  sub->add_option("--algorithm", o.algorithm, "1: xi drawn once, 2: fresh xi per minibatch")
      ->check(CLI::IsMember({1, 2}))
      ->capture_default_str();
  sub->add_option("--epochs", o.epochs, "training epochs")->capture_default_str();
  sub->add_option("--batch-size", o.batch_size, "minibatch size m")->capture_default_str();
  sub->add_option("--lambda", o.lambda, "penalty weight, or 'log-n'")->capture_default_str();
  sub->add_option("--hidden", o.hidden, "hidden layer widths")->delimiter(',')->capture_default_str();
  sub->add_option("--lr", o.learning_rate, "Adam learning rate")->capture_default_str();
  sub->add_option("--beta1", o.beta1, "Adam beta1")->capture_default_str();
  sub->add_option("--beta2", o.beta2, "Adam beta2")->capture_default_str();
  sub->add_option("--adam-eps", o.epsilon, "Adam epsilon")->capture_default_str();
}

struct EvalOptions {
  std::size_t test_size = 100000;
  std::size_t mc_size = 10000;
  std::vector<double> taus{0.05, 0.25, 0.5, 0.75, 0.95};

  EvalConfig resolve(std::uint64_t seed, std::size_t replications = 1) const {
    EvalConfig c;
    c.test_size = test_size;
    c.mc_size = mc_size;
    c.taus = taus;
    c.replications = replications;
    c.seed = seed;
    c.validate();
    return c;
  }
};

void add_eval_options(CLI::App* sub, EvalOptions& o) {
  sub->add_option("--test-size", o.test_size, "test points for L1 / L2^2")->capture_default_str();
  sub->add_option("--mc-size", o.mc_size, "Monte Carlo draws for risk, penalty, crossing")
      ->capture_default_str();
  sub->add_option("--taus", o.taus, "quantile levels")->delimiter(',')->capture_default_str();
}

struct DataOptions {
  std::string path;
  std::vector<std::string> covariates;
  std::string response;
  std::string scale = "auto";

  Dataset load() const {
    std::optional<bool> s;
    if (scale != "auto") s = scale == "on";
    return load_dataset(path, covariates, response, s);
  }
};

void add_data_options(CLI::App* sub, DataOptions& o, bool required) {
  auto* opt = sub->add_option("--data", o.path, "dataset CSV (header row required)");
  if (required) opt->required();
  opt->check(CLI::ExistingFile);
  sub->add_option("--covariates", o.covariates, "covariate columns (default: all but the response)")
      ->delimiter(',');
  sub->add_option("--response", o.response, "response column (default: sidecar name or y)");
  sub->add_option("--scale", o.scale,
                  "min-max scale covariates: auto (on unless a metadata sidecar exists) | on | off")
      ->check(CLI::IsMember({"auto", "on", "off"}))
      ->capture_default_str();
}

ModelSpec model_from(const std::string& name, double nu) { return ModelSpec::make(parse_model_kind(name), nu); }

// Writes `<dir>/<command>.config.toml`, the effective configuration of the
// active subcommand. It can be passed back through --config.
void echo_config(const CLI::App& root, const std::string& dir, const std::string& command) {
  const CLI::App* sub = root.get_subcommand(command);
  // Unset (empty) values are left out so the file replays cleanly.
  std::istringstream lines(sub->config_to_str(true, false));
  std::string body = "[" + command + "]\n";
  for (std::string line; std::getline(lines, line);) {
    if (line.size() >= 3 && line.compare(line.size() - 3, 3, "=\"\"") == 0) continue;
    body += line + "\n";
  }
  write_text_file((fs::path(dir) / (command + ".config.toml")).string(), body);
}

std::string join_path(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

void progress(std::ostream& err, bool quiet, const std::string& msg) {
  if (!quiet) err << msg << '\n';
}

EpochCallback epoch_logger(std::ostream& err, bool quiet, std::size_t epochs, const std::string& prefix = "") {
  if (quiet) return {};
  return [&err, epochs, prefix](const EpochRecord& r) {
    if (r.epoch == epochs || r.epoch % 20 == 0) {
      err << prefix << "epoch " << r.epoch << "/" << epochs << "  risk " << format_double(r.empirical_risk)
          << "  penalty " << format_double(r.empirical_penalty) << '\n';
    }
  };
}

json training_metadata(const Dataset& data, const std::string& data_path, const TrainConfig& cfg,
                       const TrainResult& result) {
  json meta;
  meta["format"] = "dqrp-training";
  meta["version"] = 1;
  meta["data"] = data_path;
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
  json scaling = json::array();
  for (std::size_t j = 0; j < data.scaling.size(); ++j) {
    scaling.push_back({{"column", data.covariate_names[j]}, {"min", data.scaling[j].min}, {"max", data.scaling[j].max}});
  }
  meta["scaling"] = scaling;
  meta["algorithm"] = static_cast<int>(cfg.algorithm);
  meta["epochs"] = cfg.epochs;
  meta["batch_size"] = cfg.batch_size;
  meta["lambda"] = result.lambda;
  meta["hidden"] = cfg.hidden;
  meta["seed"] = cfg.seed;
  meta["steps"] = result.steps;
  meta["adam"] = {{"lr", cfg.adam.learning_rate},
                  {"beta1", cfg.adam.beta1},
                  {"beta2", cfg.adam.beta2},
                  {"epsilon", cfg.adam.epsilon}};
  return meta;
}

// Model recorded next to a trained network, if any.
std::optional<ModelSpec> recorded_model(const std::string& network_path) {
  const fs::path meta = fs::path(network_path).parent_path() / "training.json";
  if (!fs::exists(meta)) return std::nullopt;
  try {
    const json j = json::parse(read_text_file(meta.string()));
    if (!j.contains("model") || j["model"].is_null()) return std::nullopt;
    return ModelSpec::make(parse_model_kind(j["model"].get<std::string>()), j.value("nu", 3.0));
  } catch (const json::exception& e) {
    throw ParseError(meta.string() + ": " + e.what());
  }
}

std::string verification_table(const std::vector<VerificationRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(28) << "construction" << std::setw(11) << "check" << std::setw(8) << "result"
      << "enumerated (depth/width/neurons/params) vs bound\n";
  for (const auto& r : rows) {
    std::ostringstream sizes;
    sizes << r.size.depth << "/" << r.size.width << "/" << r.size.neurons << "/" << r.size.parameters << " vs "
          << r.bound.depth << "/" << r.bound.width << "/" << r.bound.neurons << "/" << r.bound.parameters;
    out << std::setw(28) << r.name << std::setw(11) << r.check << std::setw(8) << (r.passed ? "PASS" : "FAIL")
        << sizes.str() << "  " << r.detail << '\n';
  }
  return out.str();
}

std::string verification_csv(const std::vector<VerificationRow>& rows) {
  std::ostringstream out;
  out << "construction,check,passed,depth,width,neurons,parameters,bound_depth,bound_width,bound_neurons,"
         "bound_parameters\n";
  for (const auto& r : rows) {
    out << r.name << ',' << r.check << ',' << (r.passed ? 1 : 0) << ',' << r.size.depth << ',' << r.size.width
        << ',' << r.size.neurons << ',' << r.size.parameters << ',' << r.bound.depth << ',' << r.bound.width << ','
        << r.bound.neurons << ',' << r.bound.parameters << '\n';
  }
  return out.str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep quantile regression process toolkit"};
  app.name("dqrp");
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "TOML/INI file; command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  std::string out_dir = "dqrp-out";
  bool quiet = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "master seed")->capture_default_str();
    sub->add_option("-o,--out-dir", out_dir, "output directory")->capture_default_str();
    sub->add_flag("-q,--quiet", quiet, "suppress progress output");
  };

  // simulate
  std::string model_name_opt;
  std::size_t n = 512;
  double nu = 3.0;
  std::string name = "data";
  auto* simulate = app.add_subcommand("simulate", "draw a dataset from a simulation model");
  simulate->add_option("--model", model_name_opt, "linear | wave | triangle | multi-linear | single-index | additive | normal")
      ->required();
  simulate->add_option("--n", n, "sample size")->capture_default_str();
  simulate->add_option("--nu", nu, "Student-t degrees of freedom")->capture_default_str();
  simulate->add_option("--name", name, "file stem")->capture_default_str();
  add_common(simulate);

  // train
  DataOptions data_opts;
  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "fit a ReQU quantile network");
  add_data_options(train_cmd, data_opts, true);
  add_train_options(train_cmd, train_opts);
  add_common(train_cmd);

  // evaluate
  std::string network_path;
  EvalOptions eval_opts;
  auto* evaluate = app.add_subcommand("evaluate", "score a trained network against a model oracle");
  evaluate->add_option("--network", network_path, "network JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--model", model_name_opt, "model (default: recorded at training time)");
  evaluate->add_option("--nu", nu, "Student-t degrees of freedom")->capture_default_str();
  add_eval_options(evaluate, eval_opts);
  add_common(evaluate);

  // sweep-lambda
  std::vector<double> grid;
  auto* sweep = app.add_subcommand("sweep-lambda", "risk and penalty across penalty weights");
  add_data_options(sweep, data_opts, false);
  sweep->add_option("--model", model_name_opt, "simulate from this model when --data is absent");
  sweep->add_option("--n", n, "sample size for simulated data")->capture_default_str();
  sweep->add_option("--nu", nu, "Student-t degrees of freedom")->capture_default_str();
  sweep->add_option("--grid", grid, "lambda values (default: 0, 0.25, 0.5, 1, 2, 4 times log n)")->delimiter(',');
  sweep->add_option("--mc-size", eval_opts.mc_size, "Monte Carlo draws")->capture_default_str();
  add_train_options(sweep, train_opts);
  add_common(sweep);

  // plot
  std::vector<double> plot_taus{0.05, 0.25, 0.5, 0.75, 0.95};
  std::string title;
  std::string plot_name = "quantiles";
  bool no_oracle = false;
  auto* plot = app.add_subcommand("plot", "SVG of data, estimated and true quantile curves");
  plot->add_option("--network", network_path, "network JSON")->required()->check(CLI::ExistingFile);
  add_data_options(plot, data_opts, true);
  plot->add_option("--model", model_name_opt, "oracle model (default: from the data sidecar)");
  plot->add_option("--nu", nu, "Student-t degrees of freedom")->capture_default_str();
  plot->add_flag("--no-oracle", no_oracle, "omit the dashed oracle curves");
  plot->add_option("--taus", plot_taus, "quantile levels")->delimiter(',')->capture_default_str();
  plot->add_option("--title", title, "plot title");
  plot->add_option("--name", plot_name, "file stem")->capture_default_str();
  add_common(plot);

  // verify-constructions
  std::string checks = "all";
  bool inject_fault = false;
  auto* verify = app.add_subcommand("verify-constructions", "exactness and size checks for the network constructions");
  verify->add_option("--checks", checks, "all | exactness | size")
      ->check(CLI::IsMember({"all", "exactness", "size"}))
      ->capture_default_str();
  verify->add_flag("--inject-fault", inject_fault, "corrupt the product gadget (self-test)")->group("");
  verify->add_option("--seed", seed, "master seed")->capture_default_str();
  auto* verify_out = verify->add_option("-o,--out-dir", out_dir, "also write verify.csv here");

  // experiment
  std::size_t replications = 10;
  auto* experiment = app.add_subcommand("experiment", "replicated simulate / train / evaluate runs");
  experiment->add_option("--model", model_name_opt, "simulation model")->required();
  experiment->add_option("--n", n, "sample size")->capture_default_str();
  experiment->add_option("--nu", nu, "Student-t degrees of freedom")->capture_default_str();
  experiment->add_option("--replications", replications, "R")->capture_default_str();
  add_train_options(experiment, train_opts);
  add_eval_options(experiment, eval_opts);
  add_common(experiment);

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    if (*simulate) {
      const ModelSpec model = model_from(model_name_opt, nu);
      const Dataset data = generate(model, n, seed);
      const std::string path = join_path(out_dir, name + ".csv");
      write_dataset(path, data);
      echo_config(app, out_dir, "simulate");
      out << "wrote " << path << " (" << data.size() << " rows)\n";
    } else if (*train_cmd) {
      const Dataset data = data_opts.load();
      const TrainConfig cfg = train_opts.resolve(seed);
      progress(err, quiet, "training on " + std::to_string(data.size()) + " rows, lambda " +
                               format_double(cfg.lambda_for(data.size())));
      const TrainResult result = train(data, cfg, epoch_logger(err, quiet, cfg.epochs));
      save_network(join_path(out_dir, "network.json"), result.network);
      write_text_file(join_path(out_dir, "history.csv"), history_to_csv(result.history));
      write_text_file(join_path(out_dir, "training.json"),
                      training_metadata(data, data_opts.path, cfg, result).dump(2) + "\n");
      echo_config(app, out_dir, "train");
      out << "wrote " << join_path(out_dir, "network.json") << '\n';
    } else if (*evaluate) {
      const ReQUNetwork net = load_network(network_path);
      std::optional<ModelSpec> model;
      if (!model_name_opt.empty()) {
        model = model_from(model_name_opt, nu);
      } else {
        model = recorded_model(network_path);
      }
      if (!model) throw UsageError("no model recorded for this network; pass --model");
      const EvalConfig cfg = eval_opts.resolve(seed);
      ReplicationMetrics m = evaluate_network(net, *model, cfg, seed);
      const ReplicationReport report = summarize(*model, 0, 0.0, cfg.taus, {m});
      write_text_file(join_path(out_dir, "report.csv"), report_to_csv(report));
      write_text_file(join_path(out_dir, "report.json"), report_to_json(report));
      echo_config(app, out_dir, "evaluate");
      out << report_to_csv(report);
      out << "risk " << format_double(m.risk) << "  penalty " << format_double(m.penalty) << "  crossing "
          << format_double(m.crossing) << '\n';
    } else if (*sweep) {
      Dataset data;
      if (!data_opts.path.empty()) {
        data = data_opts.load();
      } else if (!model_name_opt.empty()) {
        data = generate(model_from(model_name_opt, nu), n, derive_seed(seed, "data"));
      } else {
        throw UsageError("sweep-lambda needs --data or --model");
      }
      const double log_n = std::log(static_cast<double>(data.size()));
      if (grid.empty()) {
        for (double k : {0.0, 0.25, 0.5, 1.0, 2.0, 4.0}) grid.push_back(k * log_n);
      }
      TrainConfig cfg = train_opts.resolve(derive_seed(seed, "train"));
      EvalConfig ecfg;
      ecfg.mc_size = eval_opts.mc_size;
      ecfg.seed = derive_seed(seed, "eval");
      progress(err, quiet, "sweeping " + std::to_string(grid.size()) + " lambda values");
      const std::vector<SweepRow> rows = sweep_lambda(data, cfg, grid, ecfg);
      std::vector<SweepPoint> points;
      for (const auto& r : rows) points.push_back({r.lambda, r.risk, r.penalty});
      PlotOptions popts;
      popts.title = "risk and penalty vs lambda (n = " + std::to_string(data.size()) + ")";
      write_text_file(join_path(out_dir, "sweep.csv"), sweep_to_csv(rows));
      write_text_file(join_path(out_dir, "sweep.svg"), sweep_plot_svg(points, log_n, popts));
      echo_config(app, out_dir, "sweep-lambda");
      out << sweep_to_csv(rows);
    } else if (*plot) {
      const ReQUNetwork net = load_network(network_path);
      const Dataset data = data_opts.load();
      std::optional<ModelSpec> model;
      if (!no_oracle) {
        if (!model_name_opt.empty()) {
          model = model_from(model_name_opt, nu);
        } else if (data.model) {
          model = data.model;
        } else {
          model = recorded_model(network_path);
        }
      }
      if (model && model->dim != 1) throw UsageError("plots are supported for univariate models only");
      PlotOptions popts;
      popts.taus = plot_taus;
      popts.title = title;
      const std::string path = join_path(out_dir, plot_name + ".svg");
      write_text_file(path, quantile_plot_svg(data, net, model, popts));
      echo_config(app, out_dir, "plot");
      out << "wrote " << path << '\n';
    } else if (*verify) {
      VerifyOptions opts;
      opts.faults.corrupt_product = inject_fault;
      opts.seed = seed;
      std::vector<VerificationRow> rows;
      for (auto& r : verify_constructions(opts)) {
        if (checks == "all" || r.check == checks) rows.push_back(std::move(r));
      }
      out << verification_table(rows);
      if (verify_out->count() > 0) {
        write_text_file(join_path(out_dir, "verify.csv"), verification_csv(rows));
        echo_config(app, out_dir, "verify-constructions");
      }
      std::size_t failed = 0;
      for (const auto& r : rows) failed += r.passed ? 0 : 1;
      out << (failed == 0 ? "all checks passed" : std::to_string(failed) + " check(s) failed") << '\n';
      return failed == 0 ? kSuccess : kFailure;
    } else if (*experiment) {
      const ModelSpec model = model_from(model_name_opt, nu);
      const TrainConfig cfg = train_opts.resolve(seed);
      const EvalConfig ecfg = eval_opts.resolve(seed, replications);
      progress(err, quiet, "running " + std::to_string(replications) + " replications on " +
                               std::to_string(std::min(worker_threads(), replications)) + " thread(s)");
      const ReplicationReport report = run_experiment(model, n, cfg, ecfg);
      write_text_file(join_path(out_dir, "report.csv"), report_to_csv(report));
      write_text_file(join_path(out_dir, "report.json"), report_to_json(report));
      echo_config(app, out_dir, "experiment");
      out << report_to_csv(report);
    }
    return kSuccess;
  } catch (const ConfigError& e) {
    err << "dqrp: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    err << "dqrp: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    err << "dqrp: " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    err << "dqrp: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace dqrp::cli
