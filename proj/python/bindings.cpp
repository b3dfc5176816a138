#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dbb/harness.hpp"
#include "dbb/oracle.hpp"
#include "dbb/solvers.hpp"
#include "dbb/stats.hpp"

namespace py = pybind11;
using namespace dbb;

namespace {

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

Tensor from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  Tensor t(shape);
  std::copy(a.data(), a.data() + a.size(), t.data());
  return t;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "deep BSDE/PDE solvers for multi-asset Heston option pricing";

  py::class_<HestonParams>(m, "HestonParams")
      .def(py::init<>())
      .def_readwrite("d", &HestonParams::d)
      .def_readwrite("s0", &HestonParams::s0)
      .def_readwrite("r", &HestonParams::r)
      .def_readwrite("T", &HestonParams::t_mat)
      .def_readwrite("nu0", &HestonParams::nu0)
      .def_readwrite("theta", &HestonParams::theta)
      .def_readwrite("rho", &HestonParams::rho)
      .def_readwrite("kappa", &HestonParams::kappa)
      .def_readwrite("xi", &HestonParams::xi)
      .def_readwrite("moneyness", &HestonParams::moneyness)
      .def_property_readonly("strike", &HestonParams::strike)
      .def("validate", &HestonParams::validate);

  m.def("feller_check", &feller_check, py::arg("params"));

  m.def(
      "simulate_paths",
      [](const HestonParams& p, std::size_t n_steps, std::size_t batch, std::uint64_t seed) {
        const PathBatch pb = simulate_paths(p, n_steps, batch, seed);
        return py::make_tuple(to_array(pb.states), to_array(pb.dw), pb.dt);
      },
      py::arg("params"), py::arg("n_steps"), py::arg("batch"), py::arg("seed"),
      "returns (states [batch, n+1, 2d], dW [batch, n, 2d], dt)");

  m.def(
      "payoff",
      [](const HestonParams& p,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& terminal) {
        return to_array(payoff(p, from_array(terminal)));
      },
      py::arg("params"), py::arg("terminal"));

  py::class_<McEstimate>(m, "McEstimate")
      .def_readonly("price", &McEstimate::price)
      .def_readonly("std_error", &McEstimate::std_error)
      .def_readonly("n_paths", &McEstimate::n_paths)
      .def_readonly("n_steps", &McEstimate::n_steps)
      .def("__repr__", [](const McEstimate& e) {
        return "McEstimate(price=" + std::to_string(e.price) +
               ", std_error=" + std::to_string(e.std_error) + ")";
      });

  m.def("mc_price", &mc_price, py::arg("params"), py::arg("n_paths"), py::arg("n_steps"),
        py::arg("seed"), py::arg("n_threads") = 0,
        py::call_guard<py::gil_scoped_release>());

  m.def("bs_closed_form", &bs_closed_form, py::arg("s0"), py::arg("strike"), py::arg("r"),
        py::arg("sigma"), py::arg("T"));

  py::enum_<Method>(m, "Method")
      .value("DBSDE", Method::DBSDE)
      .value("DBDP1", Method::DBDP1)
      .value("DBDP2", Method::DBDP2)
      .value("DS", Method::DS)
      .value("MDBDP", Method::MDBDP);

  py::class_<SolverConfig>(m, "SolverConfig")
      .def(py::init<>())
      .def_readwrite("method", &SolverConfig::method)
      .def_readwrite("n_steps", &SolverConfig::n_steps)
      .def_readwrite("batch", &SolverConfig::batch)
      .def_readwrite("val_size", &SolverConfig::val_size)
      .def_readwrite("lr", &SolverConfig::lr)
      .def_readwrite("iters_forward", &SolverConfig::iters_forward)
      .def_readwrite("iters_first", &SolverConfig::iters_first)
      .def_readwrite("iters_rest", &SolverConfig::iters_rest)
      .def_readwrite("seed", &SolverConfig::seed)
      .def_readwrite("hidden", &SolverConfig::hidden)
      .def_readwrite("lr_decay", &SolverConfig::lr_decay)
      .def_readwrite("val_every", &SolverConfig::val_every);

  py::class_<SolverRun>(m, "SolverRun")
      .def_readonly("price", &SolverRun::price)
      .def_readonly("seed", &SolverRun::seed)
      .def_readonly("wall_time", &SolverRun::wall_time)
      .def_readonly("diverged", &SolverRun::diverged)
      .def_readonly("note", &SolverRun::note)
      .def_property_readonly("loss_curve", [](const SolverRun& r) {
        std::vector<std::pair<std::size_t, double>> out;
        for (const LossPoint& lp : r.loss_curve) out.emplace_back(lp.iteration, lp.loss);
        return out;
      });

  m.def(
      "solve",
      [](const SolverConfig& cfg, const HestonParams& p) {
        const DiscountDriver drv(p.r);
        return solve(cfg, p, drv);
      },
      py::arg("config"), py::arg("params"), py::call_guard<py::gil_scoped_release>());

  m.def(
      "quartiles",
      [](const std::vector<double>& samples) {
        const Quartiles q = quartiles(samples);
        return py::make_tuple(q.q1, q.median, q.q3);
      },
      py::arg("samples"));
  m.def("median_pe", &median_pe, py::arg("median"), py::arg("mc"));
  m.def("iqr", &iqr, py::arg("q1"), py::arg("q3"));
  m.def(
      "sqrt_scaling_fit",
      [](const std::vector<double>& metric, const std::vector<double>& parameter) {
        const SqrtFit f = sqrt_scaling_fit(metric, parameter);
        return py::make_tuple(f.slope, f.intercept, f.r_squared);
      },
      py::arg("metric"), py::arg("parameter"), "returns (slope, intercept, r_squared)");
}
