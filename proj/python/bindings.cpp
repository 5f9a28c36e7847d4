#include <iostream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "trimiga/benchmarks.hpp"

namespace py = pybind11;
using namespace trimiga;

namespace {

// JSON <-> Python through the standard json module keeps the binding small.
nlohmann::json to_json(const py::object& o) {
  const auto dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(dumps(o).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::list history_rows(const std::vector<HistoryRow>& rows) {
  py::list out;
  for (const auto& r : rows) {
    py::dict d;
    d["iter"] = r.iter;
    d["ndof"] = r.ndof;
    d["nelems"] = r.nelems;
    d["error_norm"] = r.error;
    d["eta_total"] = r.eta;
    d["marked_count"] = r.marked;
    d["levels"] = r.levels;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_trimiga, m) {
  py::register_exception<Error>(m, "TrimigaError", PyExc_ValueError);

  m.def("benchmark_names", &benchmark_names);

  m.def(
      "default_config", [] { return from_json(BenchmarkConfig{}.to_json()); },
      "Default benchmark configuration as a dict.");

  m.def(
      "validate_config",
      [](const py::dict& cfg) {
        const BenchmarkConfig c = BenchmarkConfig::from_json(to_json(cfg));
        c.validate();
        return from_json(c.to_json());
      },
      py::arg("config"), "Fills defaults and validates; raises TrimigaError on bad input.");

  m.def(
      "run_benchmark",
      [](const py::dict& cfg, bool verbose) {
        const BenchmarkConfig c = BenchmarkConfig::from_json(to_json(cfg));
        RunArtifacts art;
        {
          py::gil_scoped_release release;
          art = run_benchmark(c, verbose ? &std::cerr : nullptr);
        }
        py::dict out;
        out["summary"] = from_json(art.summary);
        out["history"] = history_rows(art.result.history);
        out["files"] = art.files;
        out["ok"] = art.ok();
        return out;
      },
      py::arg("config"), py::arg("verbose") = false,
      "Runs one benchmark, writes its artifacts into config['out'] and returns summary and history.");

  m.def(
      "bspline_basis",
      [](int degree, std::vector<double> knots, double t, int order) {
        const KnotVector kv(degree, std::move(knots));
        const BasisDers b = kv.eval(t, order);
        std::vector<std::vector<double>> ders(order + 1, std::vector<double>(degree + 1));
        for (int k = 0; k <= order; ++k)
          for (int r = 0; r <= degree; ++r) ders[k][r] = b(k, r);
        return py::make_tuple(b.first_function(), ders);
      },
      py::arg("degree"), py::arg("knots"), py::arg("t"), py::arg("order") = 0,
      "Index of the first nonzero function at t and the derivative table ders[k][r].");

  m.def(
      "fitted_slope",
      [](const std::vector<int>& ndof, const std::vector<double>& err, int n) {
        if (ndof.size() != err.size()) throw Error("ndof and err differ in length");
        std::vector<HistoryRow> rows(ndof.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          rows[i].ndof = ndof[i];
          rows[i].error = err[i];
        }
        return fitted_slope(rows, false, n);
      },
      py::arg("ndof"), py::arg("error"), py::arg("n") = 5);
}
