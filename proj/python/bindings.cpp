#include "dqrp/constructions.hpp"
#include "dqrp/error.hpp"
#include "dqrp/eval.hpp"
#include "dqrp/network.hpp"
#include "dqrp/plot.hpp"
#include "dqrp/serialize.hpp"
#include "dqrp/simdata.hpp"
#include "dqrp/train.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace dqrp;

namespace {

std::vector<double> to_vector(const Eigen::Ref<const Vector>& v) { return {v.data(), v.data() + v.size()}; }

// Stacks an n x d covariate array and a scalar or length-n tau into network inputs.
Matrix stack_rows(const Matrix& x, const Vector& tau) {
  if (tau.size() != 1 && tau.size() != x.rows()) {
    throw ShapeError("tau must be a scalar or have one entry per row of x");
  }
  Matrix in(x.cols() + 1, x.rows());
  in.topRows(x.cols()) = x.transpose();
  if (tau.size() == 1) {
    in.row(x.cols()).setConstant(tau(0));
  } else {
    in.row(x.cols()) = tau.transpose();
  }
  return in;
}

Vector as_tau(const py::object& tau) {
  if (py::isinstance<py::float_>(tau) || py::isinstance<py::int_>(tau)) return Vector::Constant(1, tau.cast<double>());
  return tau.cast<Vector>();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "ReQU networks for non-crossing quantile regression";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", error.ptr());
  py::register_exception<UsageError>(m, "UsageError", error.ptr());
  py::register_exception<DomainError>(m, "DomainError", error.ptr());
  py::register_exception<ParseError>(m, "ParseError", error.ptr());

  // simdata
  py::enum_<ModelKind>(m, "ModelKind")
      .value("UniLinear", ModelKind::UniLinear)
      .value("Wave", ModelKind::Wave)
      .value("Triangle", ModelKind::Triangle)
      .value("MultiLinear", ModelKind::MultiLinear)
      .value("SingleIndex", ModelKind::SingleIndex)
      .value("Additive", ModelKind::Additive)
      .value("Normal", ModelKind::Normal);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init([](const std::string& name, double nu) { return ModelSpec::make(parse_model_kind(name), nu); }),
           py::arg("name"), py::arg("nu") = 3.0)
      .def_static("make", &ModelSpec::make, py::arg("kind"), py::arg("nu") = 3.0)
      .def_readonly("kind", &ModelSpec::kind)
      .def_readonly("dim", &ModelSpec::dim)
      .def_readonly("nu", &ModelSpec::nu)
      .def_property_readonly("name", [](const ModelSpec& s) { return std::string(model_name(s.kind)); })
      .def("__eq__", [](const ModelSpec& a, const ModelSpec& b) { return a == b; })
      .def("__repr__", [](const ModelSpec& s) { return "ModelSpec('" + std::string(model_name(s.kind)) + "')"; });

  m.def("oracle_quantile",
        [](const ModelSpec& model, const Vector& x, double tau) { return oracle_quantile(model, to_vector(x), tau); },
        py::arg("model"), py::arg("x"), py::arg("tau"));
  m.def("normal_quantile", &normal_quantile, py::arg("p"));
  m.def("student_t_quantile", &student_t_quantile, py::arg("p"), py::arg("nu"));

  py::class_<Dataset>(m, "Dataset")
      .def_readwrite("x", &Dataset::x)
      .def_readwrite("y", &Dataset::y)
      .def_readwrite("covariate_names", &Dataset::covariate_names)
      .def_readwrite("response_name", &Dataset::response_name)
      .def_readonly("model", &Dataset::model)
      .def_readonly("seed", &Dataset::seed)
      .def("__len__", &Dataset::size)
      .def_property_readonly("dim", &Dataset::dim)
      .def("to_csv", &dataset_to_csv)
      .def("save", [](const Dataset& d, const std::string& path) { write_dataset(path, d); }, py::arg("path"));

  m.def("generate", &generate, py::arg("model"), py::arg("n"), py::arg("seed"));
  m.def("load_dataset", &load_dataset, py::arg("path"), py::arg("covariates") = std::vector<std::string>{},
        py::arg("response") = "", py::arg("scale") = std::nullopt);

  // networks
  py::class_<ReQUNetwork>(m, "Network")
      .def_property_readonly("widths", [](const ReQUNetwork& n) { return n.shape().widths(); })
      .def_property_readonly("input_dim", &ReQUNetwork::input_dim)
      .def_property_readonly("weights", [](const ReQUNetwork& n) { return n.weights(); })
      .def_property_readonly("biases", [](const ReQUNetwork& n) { return n.biases(); })
      .def_property_readonly("num_parameters", [](const ReQUNetwork& n) { return n.shape().size(); })
      .def(
          "__call__",
          [](const ReQUNetwork& n, const Matrix& x, const py::object& tau) {
            return forward_batch(n, stack_rows(x, as_tau(tau)));
          },
          py::arg("x"), py::arg("tau"), "Quantile estimates at the rows of x (n x d).")
      .def(
          "derivative",
          [](const ReQUNetwork& n, const Matrix& x, const py::object& tau) {
            return forward_with_tangent_batch(n, stack_rows(x, as_tau(tau))).tangent;
          },
          py::arg("x"), py::arg("tau"), "d f / d tau at the rows of x.")
      .def("to_json", [](const ReQUNetwork& n) { return network_to_json(n); })
      .def_static("from_json", &network_from_json, py::arg("text"))
      .def("save", [](const ReQUNetwork& n, const std::string& path) { save_network(path, n); }, py::arg("path"))
      .def_static("load", &load_network, py::arg("path"))
      .def("__eq__", [](const ReQUNetwork& a, const ReQUNetwork& b) { return a == b; });

  m.def(
      "init_network",
      [](const std::vector<std::size_t>& widths, std::uint64_t seed) {
        return init_network(NetworkShape(widths), seed);
      },
      py::arg("widths"), py::arg("seed"));

  // training
  py::enum_<Algorithm>(m, "Algorithm").value("FixedXi", Algorithm::FixedXi).value("FreshXi", Algorithm::FreshXi);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("algorithm", &TrainConfig::algorithm)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("lambda_", &TrainConfig::lambda)
      .def_readwrite("hidden", &TrainConfig::hidden)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_property(
          "learning_rate", [](const TrainConfig& c) { return c.adam.learning_rate; },
          [](TrainConfig& c, double v) { c.adam.learning_rate = v; });

  py::class_<EpochRecord>(m, "EpochRecord")
      .def_readonly("epoch", &EpochRecord::epoch)
      .def_readonly("empirical_risk", &EpochRecord::empirical_risk)
      .def_readonly("empirical_penalty", &EpochRecord::empirical_penalty)
      .def_readonly("penalized_risk", &EpochRecord::penalized_risk);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("network", &TrainResult::network)
      .def_readonly("history", &TrainResult::history)
      .def_readonly("lambda_", &TrainResult::lambda)
      .def_readonly("steps", &TrainResult::steps);

  m.def(
      "train",
      [](const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch) {
        py::gil_scoped_release release;
        if (!on_epoch) return train(data, config);
        return train(data, config, [&](const EpochRecord& r) {
          py::gil_scoped_acquire acquire;
          on_epoch(r);
        });
      },
      py::arg("data"), py::arg("config") = TrainConfig{}, py::arg("on_epoch") = EpochCallback{});

  // evaluation
  py::class_<EvalConfig>(m, "EvalConfig")
      .def(py::init<>())
      .def_readwrite("test_size", &EvalConfig::test_size)
      .def_readwrite("mc_size", &EvalConfig::mc_size)
      .def_readwrite("taus", &EvalConfig::taus)
      .def_readwrite("replications", &EvalConfig::replications)
      .def_readwrite("seed", &EvalConfig::seed);

  py::class_<MeanSd>(m, "MeanSd").def_readonly("mean", &MeanSd::mean).def_readonly("sd", &MeanSd::sd);

  py::class_<ReplicationReport>(m, "ReplicationReport")
      .def_readonly("taus", &ReplicationReport::taus)
      .def_readonly("l1", &ReplicationReport::l1)
      .def_readonly("l22", &ReplicationReport::l22)
      .def_readonly("risk", &ReplicationReport::risk)
      .def_readonly("penalty", &ReplicationReport::penalty)
      .def_readonly("crossing", &ReplicationReport::crossing)
      .def("to_csv", &report_to_csv)
      .def("to_json", &report_to_json);

  m.def(
      "l1_error",
      [](const ReQUNetwork& n, const ModelSpec& model, double tau, std::size_t T, std::uint64_t seed) {
        return l1_error(n, model, tau, T, seed);
      },
      py::arg("net"), py::arg("model"), py::arg("tau"), py::arg("T") = 100000, py::arg("seed") = 0);
  m.def(
      "l22_error",
      [](const ReQUNetwork& n, const ModelSpec& model, double tau, std::size_t T, std::uint64_t seed) {
        return l22_error(n, model, tau, T, seed);
      },
      py::arg("net"), py::arg("model"), py::arg("tau"), py::arg("T") = 100000, py::arg("seed") = 0);
  m.def(
      "mc_risk_and_penalty",
      [](const ReQUNetwork& n, const ModelSpec& model, std::size_t T, std::uint64_t seed) {
        const RiskPenaltyEstimate e = mc_risk_and_penalty(n, model, T, seed);
        return py::make_tuple(e.risk, e.penalty);
      },
      py::arg("net"), py::arg("model"), py::arg("T") = 10000, py::arg("seed") = 0);
  m.def("crossing_rate", &crossing_rate, py::arg("net"), py::arg("model"), py::arg("T") = 10000,
        py::arg("seed") = 0);
  m.def("run_experiment", &run_experiment, py::arg("model"), py::arg("n"), py::arg("train") = TrainConfig{},
        py::arg("eval") = EvalConfig{}, py::call_guard<py::gil_scoped_release>());

  // constructions
  py::class_<Polynomial>(m, "Polynomial")
      .def(py::init<std::size_t>(), py::arg("dim") = 1)
      .def_static("univariate", &Polynomial::univariate, py::arg("coeffs"))
      .def("add_term", &Polynomial::add_term, py::arg("exponent"), py::arg("coefficient"))
      .def_property_readonly("dim", &Polynomial::dim)
      .def_property_readonly("degree", &Polynomial::degree)
      .def("__call__", [](const Polynomial& p, const Vector& x) { return p.evaluate(to_vector(x)); });
  m.def("random_polynomial", &random_polynomial, py::arg("dim"), py::arg("degree"), py::arg("seed"));

  py::class_<SizeReport>(m, "SizeReport")
      .def_readonly("depth", &SizeReport::depth)
      .def_readonly("width", &SizeReport::width)
      .def_readonly("neurons", &SizeReport::neurons)
      .def_readonly("parameters", &SizeReport::parameters);

  py::class_<MixedNetwork>(m, "MixedNetwork")
      .def_property_readonly("input_dim", &MixedNetwork::input_dim)
      .def_property_readonly("hidden_layers", &MixedNetwork::hidden_layers)
      .def_property_readonly("size", &size_report)
      .def("__call__", [](const MixedNetwork& n, const Matrix& inputs) { return n.evaluate_batch(inputs.transpose()); },
           py::arg("inputs"), "Outputs at the rows of inputs.")
      .def("to_json", [](const MixedNetwork& n) { return network_to_json(n); });

  m.def("construct_univariate_poly", [](const Polynomial& p) { return construct_univariate_poly(p); });
  m.def("construct_multivariate_poly", [](const Polynomial& p) { return construct_multivariate_poly(p); });
  m.def("compile_derivative_network", [](const ReQUNetwork& n) { return compile_derivative_network(n); });

  py::class_<VerificationRow>(m, "VerificationRow")
      .def_readonly("name", &VerificationRow::name)
      .def_readonly("check", &VerificationRow::check)
      .def_readonly("passed", &VerificationRow::passed)
      .def_readonly("detail", &VerificationRow::detail);
  m.def(
      "verify_constructions",
      [](std::uint64_t seed) {
        VerifyOptions o;
        o.seed = seed;
        return verify_constructions(o);
      },
      py::arg("seed") = 0);

  // plots
  m.def(
      "quantile_plot_svg",
      [](const Dataset& data, const ReQUNetwork& net, const std::optional<ModelSpec>& oracle,
         const std::vector<double>& taus, const std::string& title) {
        PlotOptions o;
        o.taus = taus;
        o.title = title;
        return quantile_plot_svg(data, net, oracle, o);
      },
      py::arg("data"), py::arg("net"), py::arg("oracle") = std::nullopt,
      py::arg("taus") = PlotOptions{}.taus, py::arg("title") = "");

  m.attr("__version__") = "0.1.0";
}
