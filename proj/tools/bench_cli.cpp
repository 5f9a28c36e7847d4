#include "bench_cli.hpp"

#include <fstream>
#include <ostream>

#include <CLI11.hpp>

#include "trimiga/benchmarks.hpp"

namespace trimiga {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive isogeometric benchmarks on trimmed domains"};
  std::string config_path;
  BenchmarkConfig flags;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON file with the flag names as keys (dashes become underscores)")
      ->check(CLI::ExistingFile);
  auto* o_problem = app.add_option("--problem", flags.problem)->check(CLI::IsMember(benchmark_names()));
  auto* o_degree = app.add_option("--degree", flags.degree, "spline degree (default 2 planar, 3 shell)");
  auto* o_mode = app.add_option("--mode", flags.mode)->check(CLI::IsMember({"adaptive", "uniform"}));
  auto* o_gamma = app.add_option("--gamma", flags.gamma, "marking threshold in (0,1)");
  auto* o_ca = app.add_option("--ca", flags.ca, "estimator constant");
  auto* o_iter = app.add_option("--max-iter", flags.max_iter);
  auto* o_tol = app.add_option("--tol", flags.tol, "stop once eta / eta(first) falls below");
  auto* o_dofs = app.add_option("--max-dofs", flags.max_dofs);
  auto* o_quad = app.add_option("--quad", flags.quad, "Gauss points per direction on full cells");
  auto* o_out = app.add_option("--out", flags.out, "output directory");
  auto* o_export = app.add_option("--export", flags.export_format)->check(CLI::IsMember({"vtk", "csv", "none"}));
  auto* o_solver = app.add_option("--solver", flags.solver)->check(CLI::IsMember({"direct", "cg"}));
  auto* o_base = app.add_option("--base", flags.base, "base elements per direction");
  auto* o_ref = app.add_option("--reference-level", flags.reference_level, "finest uniform level of shell references");
  app.add_flag("-q,--quiet", quiet, "no table on stdout");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  BenchmarkConfig cfg;
  try {
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      nlohmann::json j;
      try {
        f >> j;
      } catch (const nlohmann::json::exception& e) {
        throw Error(config_path + ": " + e.what());
      }
      cfg = BenchmarkConfig::from_json(j);
    }
    if (*o_problem) cfg.problem = flags.problem;
    if (*o_degree) cfg.degree = flags.degree;
    if (*o_mode) cfg.mode = flags.mode;
    if (*o_gamma) cfg.gamma = flags.gamma;
    if (*o_ca) cfg.ca = flags.ca;
    if (*o_iter) cfg.max_iter = flags.max_iter;
    if (*o_tol) cfg.tol = flags.tol;
    if (*o_dofs) cfg.max_dofs = flags.max_dofs;
    if (*o_quad) cfg.quad = flags.quad;
    if (*o_out) cfg.out = flags.out;
    if (*o_export) cfg.export_format = flags.export_format;
    if (*o_solver) cfg.solver = flags.solver;
    if (*o_base) cfg.base = flags.base;
    if (*o_ref) cfg.reference_level = flags.reference_level;
    cfg.validate();
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  }

  try {
    const RunArtifacts art = run_benchmark(cfg, quiet ? nullptr : &out);
    for (const auto& f : art.files) err << "wrote " << f << '\n';
    return art.ok() ? 0 : 3;
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << '\n';
    return 4;
  }
}

}  // namespace trimiga
