#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <complex>
#include <vector>

#include "qregress/data.hpp"
#include "qregress/error.hpp"
#include "qregress/experiment.hpp"
#include "qregress/model.hpp"
#include "qregress/optim.hpp"
#include "qregress/qsim.hpp"
#include "qregress/theory.hpp"
#include "qregress/tt.hpp"

namespace py = pybind11;
using namespace qregress;

namespace {

std::vector<std::vector<double>> tt_cores_as_lists(const TTVector& tt) {
  std::vector<std::vector<double>> out;
  for (const auto& c : tt.cores()) out.push_back(c.data);
  return out;
}

std::vector<std::complex<double>> amplitudes(const StateVector& psi) {
  return {psi.amplitudes().begin(), psi.amplitudes().end()};
}

CircuitLayout layout_from(const std::string& topology, const std::string& order) {
  return {parse_topology(topology), parse_block_order(order)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tensor-train + variational quantum circuit regression core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());

  // tt
  m.def(
      "tt_svd",
      [](const std::vector<double>& x, const std::vector<std::size_t>& dims, const std::vector<std::size_t>& ranks) {
        return tt_cores_as_lists(tt_svd(reshape_to_tensor(x, dims), ranks));
      },
      py::arg("x"), py::arg("dims"), py::arg("ranks"), "Row-major TT cores of x reshaped to dims.");
  m.def(
      "tt_roundtrip",
      [](const std::vector<double>& x, const std::vector<std::size_t>& dims, const std::vector<std::size_t>& ranks) {
        const auto t = tt_reconstruct(tt_svd(reshape_to_tensor(x, dims), ranks));
        return std::vector<double>(t.values().begin(), t.values().end());
      },
      py::arg("x"), py::arg("dims"), py::arg("ranks"), "Reconstruction after truncation to ranks.");

  // qsim
  m.def("tpe_encode", [](const std::vector<double>& x) { return amplitudes(tpe_encode(x)); }, py::arg("x"));
  m.def(
      "tpe_decode",
      [](const std::vector<std::complex<double>>& amps) {
        std::size_t u = 0;
        while ((std::size_t{1} << u) < amps.size()) ++u;
        return tpe_decode(StateVector(u, amps));
      },
      py::arg("amplitudes"));
  m.def(
      "vqc_expectations",
      [](const std::vector<double>& x, std::size_t blocks, const std::vector<double>& angles,
         const std::string& topology, const std::string& order) {
        const VQCParams params(x.size(), blocks, angles);
        return measure_z_exact(pqc_forward(tpe_encode(x), params, layout_from(topology, order)));
      },
      py::arg("x"), py::arg("blocks"), py::arg("angles"), py::arg("topology") = "chain",
      py::arg("order") = "entangle-first", "Exact Pauli-Z expectations of the encoded and rotated state.");
  m.def(
      "vqc_shots",
      [](const std::vector<double>& x, std::size_t blocks, const std::vector<double>& angles, std::uint64_t shots,
         std::uint64_t seed) {
        const VQCParams params(x.size(), blocks, angles);
        return measure_z_shots(pqc_forward(tpe_encode(x), params), shots, seed).estimates;
      },
      py::arg("x"), py::arg("blocks"), py::arg("angles"), py::arg("shots"), py::arg("seed"));
  m.def(
      "vqc_gradient",
      [](const std::vector<double>& x, std::size_t blocks, const std::vector<double>& angles,
         const std::vector<double>& upstream, bool parameter_shift) {
        const VQCParams params(x.size(), blocks, angles);
        return vqc_gradient(tpe_encode(x), params, upstream,
                            parameter_shift ? GradientMethod::ParameterShift : GradientMethod::Adjoint);
      },
      py::arg("x"), py::arg("blocks"), py::arg("angles"), py::arg("upstream"), py::arg("parameter_shift") = false);
  m.def(
      "pqc_unitary",
      [](std::size_t qubits, std::size_t blocks, const std::vector<double>& angles) {
        return Eigen::MatrixXcd(pqc_unitary(VQCParams(qubits, blocks, angles)));
      },
      py::arg("qubits"), py::arg("blocks"), py::arg("angles"));

  // model
  py::class_<Model>(m, "Model")
      .def_property_readonly("qubits", &Model::qubits)
      .def_property_readonly("output_dim", &Model::output_dim)
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def("parameters", &Model::parameters)
      .def("set_parameters", [](Model& self, const std::vector<double>& t) { self.set_parameters(t); })
      .def("forward", [](const Model& self, const std::vector<double>& x) { return model_forward(self, x); })
      .def("to_json", [](const Model& self) { return checkpoint_to_string(self); })
      .def_static("from_json", &checkpoint_from_string);
  m.def(
      "make_ttn_model",
      [](const std::vector<std::size_t>& dims, const std::vector<std::size_t>& ranks,
         const std::vector<std::size_t>& channel_out, std::size_t blocks, std::size_t output_dim, std::uint64_t seed) {
        ModelConfig c;
        c.dims = dims;
        c.ranks = ranks;
        c.channel_out_dims = channel_out;
        c.qubits = 1;
        for (auto u : channel_out) c.qubits *= u;
        c.blocks = blocks;
        c.output_dim = output_dim;
        c.seed = seed;
        c.readout_seed = seed;
        return make_ttn_model(c);
      },
      py::arg("dims"), py::arg("ranks"), py::arg("channel_out"), py::arg("blocks") = 4, py::arg("output_dim") = 784,
      py::arg("seed") = 1);
  m.def(
      "mae_gradient",
      [](const Model& model, const RowMatrix& inputs, const RowMatrix& targets) {
        const auto features = extract_features(model, inputs);
        std::vector<std::size_t> rows(features.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        const BatchGradient g = model_gradients(model, features, targets, rows);
        return py::make_tuple(g.loss, g.grad);
      },
      py::arg("model"), py::arg("inputs"), py::arg("targets"), "Mean MAE and its gradient over all rows.");

  // theory
  m.def("dataset_power", [](const Matrix& x) { return dataset_power(x); }, py::arg("inputs"));
  m.def(
      "rademacher_bound",
      [](double p, const std::vector<double>& norms, double linear, std::size_t n) {
        return rademacher_bound(p, norms, linear, n);
      },
      py::arg("power"), py::arg("channel_norms"), py::arg("linear_norm"), py::arg("samples"));
  m.def(
      "aggregate_bound",
      [](double p, std::size_t n, const std::vector<double>& norms, double linear, std::size_t qubits,
         std::optional<std::uint64_t> shots, double c1, std::optional<double> c2, double nu) {
        BoundInputs in;
        in.power = p;
        in.samples = n;
        in.channel_norms = norms;
        in.linear_norm = linear;
        in.qubits = qubits;
        in.shots = shots.value_or(kInfiniteShots);
        in.c1 = c1;
        in.c2 = c2;
        in.training_error = nu;
        const TheoryReport r = aggregate_bound(in);
        py::dict d;
        d["approx_bound"] = r.approx_bound;
        d["estimation_bound"] = r.estimation_bound;
        d["training_error"] = r.training_error;
        d["aggregate"] = r.aggregate;
        return d;
      },
      py::arg("power"), py::arg("samples"), py::arg("channel_norms"), py::arg("linear_norm"), py::arg("qubits"),
      py::arg("shots") = py::none(), py::arg("c1") = 1.0, py::arg("c2") = py::none(), py::arg("nu") = 0.0);
  m.def(
      "scaling_fit",
      [](const std::vector<std::tuple<double, double, double>>& pts) {
        std::vector<ScalingPoint> points;
        for (auto [u, mm, e] : pts) points.push_back({u, mm, e});
        const ScalingFit f = scaling_fit(points);
        return py::make_tuple(f.c1, f.c2, f.residual, f.shot_slope);
      },
      py::arg("points"), "Fit error ~ c1/sqrt(U) + c2/sqrt(M); returns (c1, c2, residual, shot_slope).");

  // data
  m.def(
      "load_mnist_idx",
      [](const std::string& images, std::optional<std::string> labels) {
        const RegressionDataset d = load_mnist_idx(images, labels);
        return py::make_tuple(d.inputs, d.labels);
      },
      py::arg("images"), py::arg("labels") = py::none());
  m.def(
      "add_noise",
      [](const RowMatrix& x, const std::string& kind, double snr_db, std::uint64_t seed) {
        NoiseSpec s;
        s.kind = parse_noise_kind(kind);
        s.snr_db = snr_db;
        s.seed = seed;
        return add_noise(x, s);
      },
      py::arg("x"), py::arg("kind"), py::arg("snr_db"), py::arg("seed"));

  // experiment
  m.def(
      "run_experiment",
      [](const std::string& config_text, const std::string& out_dir) {
        Config raw = Config::parse(config_text);
        if (!out_dir.empty()) raw.set("output.dir", out_dir);
        const ExperimentConfig cfg = experiment_config(raw);
        RunOutput run = [&] {
          py::gil_scoped_release release;
          return run_experiment(cfg);
        }();
        if (!out_dir.empty()) write_run(run, out_dir);
        return report_to_json(run.report);
      },
      py::arg("config_text"), py::arg("out_dir") = "", "Runs one experiment; returns the report JSON text.");
  m.def("parse_history", &parse_history, py::arg("csv"));
  py::class_<EpochRecord>(m, "EpochRecord")
      .def_readonly("epoch", &EpochRecord::epoch)
      .def_readonly("train_mae", &EpochRecord::train_mae)
      .def_readonly("test_mae", &EpochRecord::test_mae)
      .def_readonly("grad_norm", &EpochRecord::grad_norm)
      .def_readonly("pl_ratio", &EpochRecord::pl_ratio)
      .def_readonly("seconds", &EpochRecord::seconds);
}
