#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "bench_cli.hpp"
#include "test_support.hpp"
#include "trimiga/benchmarks.hpp"

using namespace trimiga;
using namespace trimiga::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("trimiga_test_bench_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Legacy VTK as written by export_vtk: points, polygons, and every named scalar/vector array.
struct VtkFile {
  std::vector<Eigen::Vector3d> points;
  std::vector<std::vector<int>> cells;
  std::vector<int> types;
  std::map<std::string, std::vector<double>> cell_data, point_data;
};

VtkFile read_vtk(const fs::path& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  VtkFile v;
  std::string tok;
  std::map<std::string, std::vector<double>>* section = nullptr;
  std::size_t count = 0;
  while (f >> tok) {
    if (tok == "POINTS") {
      std::string type;
      f >> count >> type;
      v.points.resize(count);
      for (auto& p : v.points) f >> p.x() >> p.y() >> p.z();
    } else if (tok == "CELLS") {
      std::size_t total;
      f >> count >> total;
      v.cells.resize(count);
      for (auto& c : v.cells) {
        int n;
        f >> n;
        c.resize(n);
        for (int& k : c) f >> k;
      }
    } else if (tok == "CELL_TYPES") {
      f >> count;
      v.types.resize(count);
      for (int& t : v.types) f >> t;
    } else if (tok == "CELL_DATA") {
      f >> count;
      section = &v.cell_data;
    } else if (tok == "POINT_DATA") {
      f >> count;
      section = &v.point_data;
    } else if (tok == "SCALARS" || tok == "VECTORS") {
      std::string name, type;
      f >> name >> type;
      int ncomp = 3;
      if (tok == "SCALARS") {
        std::string lookup, table;
        f >> ncomp >> lookup >> table;
      }
      auto& arr = (*section)[name];
      arr.resize(count * ncomp);
      for (double& x : arr) f >> x;
    }
  }
  return v;
}

ProblemSpec unit_poisson() {
  ProblemSpec s;
  s.name = "unit";
  s.geometry = GeometryMap::rectangle(0, 1, 0, 1);
  for (auto& e : s.edges) e.fixed = {true, false, false};
  s.body = [](const Vec3&) { return Eigen::VectorXd::Constant(1, 1.0); };
  return s;
}

double plane_strain_von_mises(const Material& m, const Eigen::Matrix2d& g) {
  const double lam = m.E * m.nu / ((1 + m.nu) * (1 - 2 * m.nu)), mu = m.E / (2 * (1 + m.nu));
  const double exx = g(0, 0), eyy = g(1, 1), exy = 0.5 * (g(0, 1) + g(1, 0));
  const double sxx = lam * (exx + eyy) + 2 * mu * exx, syy = lam * (exx + eyy) + 2 * mu * eyy;
  const double szz = lam * (exx + eyy), sxy = 2 * mu * exy;
  return std::sqrt(0.5 * ((sxx - syy) * (sxx - syy) + (syy - szz) * (syy - szz) + (szz - sxx) * (szz - sxx)) +
                   3 * sxy * sxy);
}

SolutionField solve_on(const ProblemSpec& s, const Hierarchy& h) {
  Discretization d = discretize(s, h);
  LinearSystem sys = assemble(s, d);
  impose_dirichlet(sys, s, d);
  Eigen::VectorXd x = scale_and_solve(sys);
  return SolutionField{std::move(d), s.kind, std::move(x)};
}

int run(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "trimiga_bench");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str() + err.str();
  return rc;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream f(p);
  return nlohmann::json::parse(f);
}

}  // namespace

TEST_CASE("export: untrimmed 2x2 mesh gives four quads") {
  const ProblemSpec s = unit_poisson();
  const SolutionField u = solve_on(s, make(2, 2));
  const ErrorIndicators ind = estimate(s, u);
  const fs::path dir = scratch("quads");
  export_vtk(s, u, ind, (dir / "m.vtk").string());
  const VtkFile v = read_vtk(dir / "m.vtk");
  CHECK(v.cells.size() == 4);
  CHECK(v.points.size() == 16);
  for (int t : v.types) CHECK(t == 9);
  REQUIRE(v.cell_data.count("level"));
  for (double l : v.cell_data.at("level")) CHECK(l == 0.0);
  CHECK(v.point_data.count("von_mises") == 0);
  // vertices carry the solution: zero on the boundary, positive inside
  const auto& uu = v.point_data.at("u");
  for (std::size_t k = 0; k < v.points.size(); ++k) {
    const auto& x = v.points[k];
    const bool on_boundary = x.x() == 0 || x.y() == 0 || x.x() == 1 || x.y() == 1;
    if (on_boundary) CHECK(std::abs(uu[3 * k]) < 1e-12);
  }
}

TEST_CASE("export: every exported cell carries its indicator") {
  BenchmarkConfig cfg;
  cfg.problem = "manufactured_poisson";
  cfg.max_iter = 2;
  cfg.export_format = "vtk";
  cfg.out = scratch("eta").string();
  const RunArtifacts art = run_benchmark(cfg);
  const VtkFile v = read_vtk(fs::path(cfg.out) / "solution.vtk");
  const auto& eta = v.cell_data.at("eta");
  const auto& elem = v.cell_data.at("element");
  REQUIRE(eta.size() == v.cells.size());
  REQUIRE(elem.size() == v.cells.size());
  const auto& ind = art.result.indicators.eta;
  std::set<int> seen;
  bool any_triangle = false;
  for (std::size_t k = 0; k < v.cells.size(); ++k) {
    const int e = static_cast<int>(elem[k]);
    REQUIRE(e >= 0);
    REQUIRE(e < static_cast<int>(ind.size()));
    CHECK(std::isfinite(eta[k]));
    CHECK(eta[k] == ind[e]);
    seen.insert(e);
    any_triangle = any_triangle || v.types[k] == 5;
  }
  // every retained element appears, cut ones through their fan triangles
  CHECK(seen.size() == ind.size());
  CHECK(any_triangle);
}

TEST_CASE("export: von Mises of an elasticity run against a pointwise recomputation") {
  BenchmarkConfig cfg;
  cfg.problem = "plate_with_hole";
  cfg.max_iter = 2;
  cfg.out = scratch("vm").string();
  const RunArtifacts art = run_benchmark(cfg);
  const VtkFile v = read_vtk(fs::path(cfg.out) / "solution.vtk");
  const auto& vm = v.point_data.at("von_mises");
  const auto& elem = v.cell_data.at("element");
  std::vector<int> vertex_elem(v.points.size(), -1);
  for (std::size_t c = 0; c < v.cells.size(); ++c)
    for (int k : v.cells[c]) vertex_elem[k] = static_cast<int>(elem[c]);
  const Benchmark b = make_benchmark(cfg);
  const SolutionField& u = *art.result.solution;
  double scale = 0.0;
  for (double x : vm) scale = std::max(scale, std::abs(x));
  REQUIRE(scale > 0.0);
  int checked = 0;
  for (std::size_t k = 0; k < v.points.size(); k += std::max<std::size_t>(1, v.points.size() / 20)) {
    const Vec2 xi(v.points[k].x() / 4.0, v.points[k].y() / 4.0);  // the plate maps [0,1]^2 onto [0,4]^2
    const Eigen::MatrixXd t = u.table_on_cell(vertex_elem[k], xi, 1);
    Eigen::Matrix2d g;
    g << t(0, 1) / 4.0, t(0, 2) / 4.0, t(1, 1) / 4.0, t(1, 2) / 4.0;
    CHECK(std::abs(vm[k] - plane_strain_von_mises(b.spec.material, g)) < 1e-10 * scale);
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("von Mises: shell membrane state on a flat plate") {
  ProblemSpec s;
  s.kind = ProblemKind::Shell;
  s.geometry = GeometryMap::flat_square(0, 1, 0, 1);
  s.material = {210.0, 0.3, 0.1, false};
  const double a = 1e-3, bxy = 4e-4, c = -2e-4, d = 5e-4;
  const Hierarchy h = make(3, 3);
  Discretization disc = discretize(s, h);
  const auto& kx = h.space(0).dir(0).knots();
  const auto& ky = h.space(0).dir(1).knots();
  auto greville = [](const std::vector<double>& k, int i) { return (k[i + 1] + k[i + 2] + k[i + 3]) / 3.0; };
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(disc.ndof());
  const auto& fns = disc.basis->functions();
  for (std::size_t f = 0; f < fns.size(); ++f) {
    const double x = greville(kx, fns[f].i), y = greville(ky, fns[f].j);
    coef(3 * f) = a * x + bxy * y;
    coef(3 * f + 1) = c * x + d * y;
  }
  const SolutionField u{std::move(disc), s.kind, coef};
  const double exx = a, eyy = d, gxy = bxy + c;
  const double k = s.material.E / (1 - s.material.nu * s.material.nu);
  const double sxx = k * (exx + s.material.nu * eyy), syy = k * (eyy + s.material.nu * exx);
  const double sxy = s.material.E / (2 * (1 + s.material.nu)) * gxy;
  const double expect = std::sqrt(sxx * sxx - sxx * syy + syy * syy + 3 * sxy * sxy);
  for (int ci = 0; ci < static_cast<int>(u.disc.basis->cells().size()); ++ci) {
    const Vec2 xi = h.cell_rect(u.disc.basis->cells()[ci]).center();
    CHECK(von_mises(s, u, ci, xi) == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("config: JSON round trip, validation and unknown keys") {
  BenchmarkConfig c;
  c.problem = "plate_with_hole";
  c.degree = 3;
  c.mode = "uniform";
  c.gamma = 0.4;
  c.ca = 2.5;
  c.max_iter = 7;
  c.tol = 1e-3;
  c.max_dofs = 1234;
  c.quad = 5;
  c.out = "x/y";
  c.export_format = "csv";
  c.solver = "cg";
  c.base = 8;
  const BenchmarkConfig r = BenchmarkConfig::from_json(c.to_json());
  CHECK(r.to_json() == c.to_json());
  CHECK(r.degree == 3);
  CHECK(r.export_format == "csv");
  CHECK_THROWS_AS(BenchmarkConfig::from_json({{"degre", 2}}), Error);
  CHECK_THROWS_AS(BenchmarkConfig::from_json({{"degree", "two"}}), Error);
  CHECK_THROWS_AS(BenchmarkConfig::from_json(nlohmann::json::array()), Error);
  // partial documents keep the base values
  const BenchmarkConfig p = BenchmarkConfig::from_json({{"gamma", 0.25}}, c);
  CHECK(p.gamma == 0.25);
  CHECK(p.problem == "plate_with_hole");

  auto bad = [](auto edit) {
    BenchmarkConfig b;
    edit(b);
    return b;
  };
  CHECK_NOTHROW(BenchmarkConfig{}.validate());
  CHECK_THROWS_AS(bad([](auto& b) { b.problem = "nope"; }).validate(), Error);
  CHECK_THROWS_AS(bad([](auto& b) { b.gamma = 1.0; }).validate(), Error);
  CHECK_THROWS_AS(bad([](auto& b) { b.gamma = 0.0; }).validate(), Error);
  CHECK_THROWS_AS(bad([](auto& b) { b.mode = "random"; }).validate(), Error);
  CHECK_THROWS_AS(bad([](auto& b) { b.degree = 9; }).validate(), Error);
  CHECK_THROWS_AS(bad([](auto& b) { b.ca = -1.0; }).validate(), Error);
  CHECK_THROWS_AS(bad([](auto& b) {
                    b.problem = "scordelis";
                    b.degree = 2;
                  }).validate(),
                  Error);
}

TEST_CASE("cli: flags override the config file, errors exit nonzero") {
  const fs::path dir = scratch("cli");
  const fs::path conf = dir / "c.json";
  {
    std::ofstream f(conf);
    f << R"({"problem": "manufactured_poisson", "degree": 2, "max_iter": 5, "export": "none", "gamma": 0.3})";
  }
  const fs::path out = dir / "run";
  std::string text;
  CHECK(run({"--config", conf.string(), "--max-iter", "2", "--degree", "3", "--out", out.string(), "-q"}, &text) == 0);
  const auto s = read_json(out / "summary.json");
  CHECK(s["config"]["problem"] == "manufactured_poisson");
  CHECK(s["config"]["degree"] == 3);
  CHECK(s["config"]["max_iter"] == 2);
  CHECK(s["config"]["gamma"] == 0.3);
  CHECK(s["iterations"] == 2);
  CHECK(fs::exists(out / "history.csv"));
  CHECK_FALSE(fs::exists(out / "solution.vtk"));

  {
    std::ofstream f(dir / "bad.json");
    f << R"({"problem": "manufactured_poisson", "max_iters": 5})";
  }
  CHECK(run({"--config", (dir / "bad.json").string(), "--out", out.string()}, &text) == 2);
  CHECK(text.find("max_iters") != std::string::npos);
  CHECK(run({"--gamma", "1.5", "--out", out.string()}) == 2);
  CHECK(run({"--problem", "unknown"}) == 1);
  CHECK(run({"--config", (dir / "missing.json").string()}) == 1);
  CHECK(run({"--help"}) == 0);
}

TEST_CASE("history csv and summary") {
  BenchmarkConfig cfg;
  cfg.problem = "manufactured_poisson";
  cfg.max_iter = 3;
  cfg.export_format = "csv";
  cfg.out = scratch("csv").string();
  const RunArtifacts art = run_benchmark(cfg);
  CHECK(art.ok());
  std::ifstream f(fs::path(cfg.out) / "history.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header == "iter,ndof,nelems,error_norm,eta_total,marked_count,levels");
  int rows = 0;
  for (std::string line; std::getline(f, line);) ++rows;
  CHECK(rows == 3);
  CHECK(fs::exists(fs::path(cfg.out) / "solution.csv"));
  const auto s = read_json(fs::path(cfg.out) / "summary.json");
  CHECK(s["final"]["ndof"] == art.result.history.back().ndof);
  CHECK(s["checks"]["passed"] == true);
  CHECK(s["error_measure"] == "H1 error");
}

TEST_CASE("fitted slope") {
  std::vector<HistoryRow> rows;
  for (int k = 0; k < 9; ++k) {
    HistoryRow r;
    r.iter = k;
    r.ndof = 100 << k;
    // the first rows follow another rate and must be ignored
    r.error = k < 4 ? 1.0 / r.ndof : 3.0 * std::pow(double(r.ndof), -1.5);
    r.eta = 2.0 * std::pow(double(r.ndof), -0.75);
    rows.push_back(r);
  }
  CHECK(fitted_slope(rows, false) == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(fitted_slope(rows, true) == doctest::Approx(-0.75).epsilon(1e-12));
  CHECK(fitted_slope(rows, false, 9) != doctest::Approx(-1.5));
  rows[8].error = std::numeric_limits<double>::quiet_NaN();
  CHECK(std::isfinite(fitted_slope(rows, false)));
  CHECK(std::isnan(fitted_slope({rows[0]}, false)));
}
