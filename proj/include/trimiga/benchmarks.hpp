#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trimiga/estimator.hpp"

namespace trimiga {

struct BenchmarkConfig {
  std::string problem = "singular_poisson";
  int degree = -1;  // -1: problem default (2 planar, 3 shell)
  std::string mode = "adaptive";  // adaptive | uniform
  double gamma = -1.0;            // -1: problem default
  double ca = 3.0;
  int max_iter = 60;
  double tol = 0.0;
  int max_dofs = 30000;
  int quad = -1;  // points per direction on full cells; cut cells and boundaries use one more
  std::string out = "out";
  std::string export_format = "vtk";  // vtk | csv | none
  std::string solver = "direct";      // direct | cg
  int base = -1;                      // base elements per direction; -1: problem default
  int reference_level = -1;           // shell references: finest uniform level; -1: default

  nlohmann::json to_json() const;
  /// Keys as the long CLI flags (dashes become underscores); unknown keys are rejected.
  static BenchmarkConfig from_json(const nlohmann::json& j, BenchmarkConfig base);
  static BenchmarkConfig from_json(const nlohmann::json& j);
  void validate() const;
};

std::vector<std::string> benchmark_names();

/// Problem definition plus the pieces the runner needs.
struct Benchmark {
  ProblemSpec spec;
  Hierarchy initial;
  double gamma = 0.5;
  std::string error_label;  // what the error column measures
  ErrorFunction error;      // empty: closed-form norm
  std::optional<Vec2> probe;  // parametric point whose displacement is reported
};

Benchmark make_benchmark(const BenchmarkConfig& cfg);

/// Compliance F(u) of a solution and the displacement at a point.
double compliance(const ProblemSpec& spec, const SolutionField& u);

/// Shell reference from uniform meshes of `level-2`, `level-1`, `level`: Aitken-extrapolated
/// compliance, the finest value and the probe displacement sequence. Cached per process.
struct ShellReference {
  double compliance = 0.0;         // extrapolated
  std::vector<double> compliances; // per level
  std::vector<double> probe;       // probe z displacement per level (empty without probe)
  std::vector<int> ndofs;
};
ShellReference shell_reference(const BenchmarkConfig& cfg);

/// Least-squares slope of log(y) against log(x) over the last `n` rows with finite positive y.
double fitted_slope(const std::vector<HistoryRow>& rows, bool use_eta, int n = 5);

/// Von Mises stress: plane strain/stress for elasticity, top surface (+t/2 along the director)
/// in a local Cartesian frame for shells.
double von_mises(const ProblemSpec& spec, const SolutionField& u, int cell, const Vec2& xi);

void write_history_csv(const std::vector<HistoryRow>& rows, const std::string& path);
/// Legacy VTK unstructured grid: quads for full cells, quadrature fan triangles for cut cells.
void export_vtk(const ProblemSpec& spec, const SolutionField& u, const ErrorIndicators& ind, const std::string& path);
/// Per-vertex samples of the same tessellation as CSV.
void export_solution_csv(const ProblemSpec& spec, const SolutionField& u, const std::string& path);

struct RunArtifacts {
  AdaptResult result;
  double error_slope = 0.0;
  double eta_slope = 0.0;
  nlohmann::json summary;
  std::vector<std::string> files;
  std::vector<std::string> failed_checks;
  bool ok() const { return failed_checks.empty(); }
};

/// Runs the loop, checks internal invariants and writes the artifacts into cfg.out.
RunArtifacts run_benchmark(const BenchmarkConfig& cfg, std::ostream* log = nullptr);

}  // namespace trimiga
