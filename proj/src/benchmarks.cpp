#include "trimiga/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

namespace trimiga {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// u = sin(pi x) sin(pi y).
class SineProduct final : public ExactSolution {
 public:
  int components() const override { return 1; }
  void eval(const Vec2& x, Eigen::VectorXd& u, Eigen::MatrixXd& grad) const override {
    const double sx = std::sin(kPi * x.x()), sy = std::sin(kPi * x.y());
    u = Eigen::VectorXd::Constant(1, sx * sy);
    grad.resize(1, 2);
    grad << kPi * std::cos(kPi * x.x()) * sy, kPi * sx * std::cos(kPi * x.y());
  }
  Eigen::VectorXd source(const Vec2& x) const override {
    return Eigen::VectorXd::Constant(1, 2 * kPi * kPi * std::sin(kPi * x.x()) * std::sin(kPi * x.y()));
  }
  Eigen::VectorXd flux(const Vec2& x, const Vec2& n) const override {
    Eigen::VectorXd u;
    Eigen::MatrixXd g;
    eval(x, u, g);
    return g * n;
  }
};

TrimLoop circular_hole(const Vec2& c, double r) { return TrimLoop{{TrimCurve::circle(c, r, false)}}; }

Hierarchy uniform_mesh(int p, int n) {
  return Hierarchy(TensorSplineSpace(KnotVector::uniform(p, n), KnotVector::uniform(p, n)));
}

void use_exact(ProblemSpec& s, const std::shared_ptr<const ExactSolution>& ex) {
  s.exact = ex;
  s.body = [ex](const Vec3& x) { return ex->source(x.head<2>()); };
  const VectorField value = [ex](const Vec3& x) {
    Eigen::VectorXd u;
    Eigen::MatrixXd g;
    ex->eval(x.head<2>(), u, g);
    return u;
  };
  const FluxField flux = [ex](const Vec3& x, const Vec3& n) { return ex->flux(x.head<2>(), n.head<2>()); };
  for (auto& e : s.edges) {
    e.value = value;
    e.flux = flux;
  }
  s.trim_flux = flux;
}

int default_degree(const std::string& problem) { return problem.rfind("scordelis", 0) == 0 ? 3 : 2; }

bool is_shell(const std::string& problem) { return problem.rfind("scordelis", 0) == 0; }

ProblemSpec scordelis_spec(const std::string& name) {
  ProblemSpec s;
  s.name = name;
  s.kind = ProblemKind::Shell;
  s.geometry = GeometryMap::cylinder_roof(25.0, 50.0, 40.0 * kPi / 180.0);
  s.material = {4.32e8, 0.0, 0.25, false};
  // rigid diaphragms on the curved ends v = 0 and v = 1
  s.edges[0].fixed = s.edges[2].fixed = {true, false, true};
  // axial rigid translation
  s.pins.push_back({Vec2(0.0, 0.5), 1});
  return s;
}

std::mutex ref_mutex;
std::map<std::string, ShellReference> ref_cache;

}  // namespace

nlohmann::json BenchmarkConfig::to_json() const {
  return {{"problem", problem}, {"degree", degree},   {"mode", mode},       {"gamma", gamma},
          {"ca", ca},           {"max_iter", max_iter}, {"tol", tol},       {"max_dofs", max_dofs},
          {"quad", quad},       {"out", out},         {"export", export_format}, {"solver", solver},
          {"base", base},       {"reference_level", reference_level}};
}

BenchmarkConfig BenchmarkConfig::from_json(const nlohmann::json& j, BenchmarkConfig c) {
  if (!j.is_object()) throw Error("config: expected a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "problem") c.problem = v.get<std::string>();
      else if (key == "degree") c.degree = v.get<int>();
      else if (key == "mode") c.mode = v.get<std::string>();
      else if (key == "gamma") c.gamma = v.get<double>();
      else if (key == "ca") c.ca = v.get<double>();
      else if (key == "max_iter") c.max_iter = v.get<int>();
      else if (key == "tol") c.tol = v.get<double>();
      else if (key == "max_dofs") c.max_dofs = v.get<int>();
      else if (key == "quad") c.quad = v.get<int>();
      else if (key == "out") c.out = v.get<std::string>();
      else if (key == "export") c.export_format = v.get<std::string>();
      else if (key == "solver") c.solver = v.get<std::string>();
      else if (key == "base") c.base = v.get<int>();
      else if (key == "reference_level") c.reference_level = v.get<int>();
      else throw Error("config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw Error("config: wrong type for '" + key + "'");
    }
  }
  return c;
}

BenchmarkConfig BenchmarkConfig::from_json(const nlohmann::json& j) { return from_json(j, BenchmarkConfig{}); }

void BenchmarkConfig::validate() const {
  const auto names = benchmark_names();
  if (std::find(names.begin(), names.end(), problem) == names.end()) throw Error("unknown problem '" + problem + "'");
  const int p = degree > 0 ? degree : default_degree(problem);
  if (p < 1 || p > 6) throw Error("degree must lie in 1..6");
  if (is_shell(problem) && p < 3) throw Error("shell problems need degree >= 3 (C1 bubbles)");
  if (mode != "adaptive" && mode != "uniform") throw Error("mode must be 'adaptive' or 'uniform'");
  if (gamma != -1.0 && !(gamma > 0.0 && gamma < 1.0)) throw Error("gamma must lie in (0, 1)");
  if (!(ca > 0.0)) throw Error("ca must be positive");
  if (max_iter < 1) throw Error("max_iter must be positive");
  if (tol < 0.0) throw Error("tol must be nonnegative");
  if (max_dofs < 1) throw Error("max_dofs must be positive");
  if (quad != -1 && (quad < 1 || quad > 30)) throw Error("quad must lie in 1..30");
  if (export_format != "vtk" && export_format != "csv" && export_format != "none")
    throw Error("export must be vtk, csv or none");
  if (solver != "direct" && solver != "cg") throw Error("solver must be 'direct' or 'cg'");
  if (base != -1 && (base < 1 || base > 256)) throw Error("base must lie in 1..256");
  if (reference_level != -1 && (reference_level < 2 || reference_level > 7))
    throw Error("reference_level must lie in 2..7");
}

std::vector<std::string> benchmark_names() {
  return {"singular_poisson", "plate_with_hole", "manufactured_poisson", "scordelis", "scordelis_hole",
          "scordelis_4holes_pointload"};
}

Benchmark make_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  const int p = cfg.degree > 0 ? cfg.degree : default_degree(cfg.problem);
  const int n = cfg.base > 0 ? cfg.base : 4;
  Benchmark b{.spec = {}, .initial = uniform_mesh(p, n), .gamma = 0.5, .error_label = {}, .error = {}, .probe = {}};
  ProblemSpec& s = b.spec;
  s.name = cfg.problem;
  if (cfg.problem == "singular_poisson") {
    s.geometry = GeometryMap::rectangle(0, 1, 0, 1);
    const double top = 0.75 + 1e-5;
    // clockwise: removes everything above y = top
    s.domain = TrimmedDomain({TrimLoop{{TrimCurve::line({-0.5, top}, {-0.5, 1.5}), TrimCurve::line({-0.5, 1.5}, {1.5, 1.5}),
                                        TrimCurve::line({1.5, 1.5}, {1.5, top}), TrimCurve::line({1.5, top}, {-0.5, top})}}});
    use_exact(s, std::make_shared<SingularPoisson>(2.4));
    for (int e : {0, 1, 3}) s.edges[e].fixed = {true, false, false};
    b.error_label = "H1 error";
  } else if (cfg.problem == "manufactured_poisson") {
    s.geometry = GeometryMap::rectangle(0, 1, 0, 1);
    s.domain = TrimmedDomain({circular_hole({0.5, 0.5}, 0.2)});
    use_exact(s, std::make_shared<SineProduct>());
    for (auto& e : s.edges) e.fixed = {true, false, false};
    b.error_label = "H1 error";
  } else if (cfg.problem == "plate_with_hole") {
    s.kind = ProblemKind::Elasticity;
    s.geometry = GeometryMap::rectangle(0, 4, 0, 4);
    s.material = {1e5, 0.3, 1.0, false};
    // the hole of radius 1 at the physical origin
    s.domain = TrimmedDomain({circular_hole({0.0, 0.0}, 0.25)});
    use_exact(s, std::make_shared<PlateWithHole>(10.0, 1.0, s.material));
    s.body = {};
    s.trim_flux = {};
    s.edges[0].fixed = {false, true, false};
    s.edges[3].fixed = {true, false, false};
    s.edges[0].value = s.edges[3].value = {};
    s.edges[0].flux = s.edges[3].flux = {};
    b.gamma = 0.55;
    b.error_label = "energy error";
  } else {
    s = scordelis_spec(cfg.problem);
    if (cfg.problem == "scordelis_4holes_pointload") {
      std::vector<TrimLoop> holes;
      for (double y : {0.25, 0.75})
        for (double x : {0.25, 0.75}) holes.push_back(circular_hole({x, y}, 0.1));
      s.domain = TrimmedDomain(std::move(holes));
      s.point_loads.push_back({Vec2(0.5, 0.5), Eigen::Vector3d(0, 0, -1e5)});
      b.probe = Vec2(0.5, 0.5);
      b.error_label = "|1 - uz/uz_ref| at the load";
    } else {
      if (cfg.problem == "scordelis_hole") s.domain = TrimmedDomain({circular_hole({0.5, 0.5}, 0.2)});
      s.body = [](const Vec3&) { return Eigen::Vector3d(0, 0, -90.0).eval(); };
      b.probe = Vec2(0.0, 0.5);  // midside of the free edge
      b.error_label = "relative energy error";
    }
    const BenchmarkConfig rc = cfg;
    const bool point = cfg.problem == "scordelis_4holes_pointload";
    const Vec2 probe = *b.probe;
    b.error = [rc, point, probe](const SolutionField& u) {
      const ShellReference ref = shell_reference(rc);
      if (point) {
        const double uz_ref = ref.compliance / -1e5;
        return std::abs(1.0 - u.value(probe)(2) / uz_ref);
      }
      const Benchmark bb = make_benchmark(rc);
      return std::sqrt(std::abs(ref.compliance - compliance(bb.spec, u)) / ref.compliance);
    };
  }
  s.validate();
  if (cfg.gamma > 0.0) b.gamma = cfg.gamma;
  return b;
}

double compliance(const ProblemSpec& spec, const SolutionField& u) {
  // F(u); with homogeneous Dirichlet data the constrained entries of u vanish
  return assemble(spec, u.disc).F.dot(u.coef);
}

ShellReference shell_reference(const BenchmarkConfig& cfg) {
  const int p = cfg.degree > 0 ? cfg.degree : default_degree(cfg.problem);
  const int n = cfg.base > 0 ? cfg.base : 4;
  const int level = cfg.reference_level > 0 ? cfg.reference_level : 5;
  std::ostringstream key;
  key << cfg.problem << '/' << p << '/' << n << '/' << level << '/' << cfg.quad;
  std::lock_guard<std::mutex> lock(ref_mutex);
  if (auto it = ref_cache.find(key.str()); it != ref_cache.end()) return it->second;

  BenchmarkConfig c = cfg;
  c.degree = p;
  Benchmark b = make_benchmark(c);
  ShellReference ref;
  QuadratureOptions q;
  if (cfg.quad > 0) q = {cfg.quad, cfg.quad + 1, cfg.quad + 1};
  for (int l = level - 2; l <= level; ++l) {
    const Discretization d = discretize(b.spec, uniform_mesh(p, n << l), q);
    LinearSystem sys = assemble(b.spec, d);
    impose_dirichlet(sys, b.spec, d);
    SolutionField u{d, b.spec.kind, scale_and_solve(sys)};
    ref.compliances.push_back(compliance(b.spec, u));
    ref.ndofs.push_back(d.ndof());
    if (b.probe) ref.probe.push_back(u.value(*b.probe)(2));
  }
  const double c0 = ref.compliances[0], c1 = ref.compliances[1], c2 = ref.compliances[2];
  const double d1 = c1 - c0, d2 = c2 - c1;
  // Aitken extrapolation; plain finest value when the sequence is not geometric
  ref.compliance = (std::abs(d1 - d2) > 0.0 && d2 / d1 > 0.0 && d2 / d1 < 1.0) ? c2 - d2 * d2 / (d2 - d1) : c2;
  ref_cache.emplace(key.str(), ref);
  return ref;
}

double fitted_slope(const std::vector<HistoryRow>& rows, bool use_eta, int n) {
  std::vector<std::pair<double, double>> pts;
  for (auto it = rows.rbegin(); it != rows.rend() && static_cast<int>(pts.size()) < n; ++it) {
    const double y = use_eta ? it->eta : it->error;
    if (std::isfinite(y) && y > 0.0) pts.emplace_back(std::log(double(it->ndof)), std::log(y));
  }
  if (pts.size() < 2) return kNaN;
  double mx = 0, my = 0;
  for (const auto& [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= pts.size();
  my /= pts.size();
  double sxy = 0, sxx = 0;
  for (const auto& [x, y] : pts) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
  }
  return sxx > 0.0 ? sxy / sxx : kNaN;
}

double von_mises(const ProblemSpec& spec, const SolutionField& u, int cell, const Vec2& xi) {
  if (spec.kind == ProblemKind::Poisson) return kNaN;
  const PointFrame fr = make_frame(spec.kind, spec.geometry, xi);
  const Eigen::VectorXd e = field_strain(spec.kind, fr, u.table_on_cell(cell, xi, form_order(spec.kind)));
  const Material& m = spec.material;
  if (spec.kind == ProblemKind::Elasticity) {
    const Eigen::VectorXd s = constitutive(spec.kind, m, fr) * e;
    const double szz = m.plane_stress ? 0.0 : m.nu * (s(0) + s(1));
    return std::sqrt(0.5 * ((s(0) - s(1)) * (s(0) - s(1)) + (s(1) - szz) * (s(1) - szz) + (szz - s(0)) * (szz - s(0))) +
                     3.0 * s(2) * s(2));
  }
  // covariant strain at z = +t/2, pulled to an orthonormal tangent frame
  const Eigen::Vector3d top = e.head<3>() + 0.5 * m.t * e.tail<3>();
  Eigen::Matrix2d ecov;
  ecov << top(0), 0.5 * top(2), 0.5 * top(2), top(1);
  const Vec3& a1 = fr.g.d1[0];
  const Vec3& a2 = fr.g.d1[1];
  const Vec3 e1 = a1.normalized(), e2 = fr.a3.cross(e1);
  const Vec3 c1 = fr.metric_inv(0, 0) * a1 + fr.metric_inv(0, 1) * a2;
  const Vec3 c2 = fr.metric_inv(1, 0) * a1 + fr.metric_inv(1, 1) * a2;
  Eigen::Matrix2d T;
  T << e1.dot(c1), e1.dot(c2), e2.dot(c1), e2.dot(c2);
  const Eigen::Matrix2d el = T * ecov * T.transpose();
  const double k = m.E / (1.0 - m.nu * m.nu);
  const double sxx = k * (el(0, 0) + m.nu * el(1, 1)), syy = k * (el(1, 1) + m.nu * el(0, 0));
  const double sxy = k * (1.0 - m.nu) * el(0, 1);
  return std::sqrt(sxx * sxx - sxx * syy + syy * syy + 3.0 * sxy * sxy);
}

void write_history_csv(const std::vector<HistoryRow>& rows, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f << std::setprecision(17);
  f << "iter,ndof,nelems,error_norm,eta_total,marked_count,levels\n";
  for (const auto& r : rows)
    f << r.iter << ',' << r.ndof << ',' << r.nelems << ',' << r.error << ',' << r.eta << ',' << r.marked << ','
      << r.levels << '\n';
  if (!f) throw Error("write failed: " + path);
}

namespace {

struct Tessellation {
  std::vector<Vec2> points;
  std::vector<int> point_cell;
  std::vector<std::vector<int>> polys;
  std::vector<int> poly_cell;
  std::vector<int> poly_class;
};

Tessellation tessellate(const ProblemSpec& spec, const SolutionField& u) {
  Tessellation t;
  const auto& basis = *u.disc.basis;
  const Hierarchy& h = *u.disc.mesh;
  for (int ci = 0; ci < static_cast<int>(basis.cells().size()); ++ci) {
    const Rect r = h.cell_rect(basis.cells()[ci]);
    const bool cut = spec.domain.trimmed() && spec.domain.classify(h, basis.cells()[ci]) == CellClass::Cut;
    auto add = [&](const Vec2& x) {
      t.points.push_back(x);
      t.point_cell.push_back(ci);
      return static_cast<int>(t.points.size()) - 1;
    };
    if (!cut) {
      const int a = add(r.lo), b = add({r.hi.x(), r.lo.y()}), c = add(r.hi), d = add({r.lo.x(), r.hi.y()});
      t.polys.push_back({a, b, c, d});
      t.poly_cell.push_back(ci);
      t.poly_class.push_back(static_cast<int>(CellClass::Interior));
      continue;
    }
    std::vector<FanTriangle> fans;
    cut_cell_rule(spec.domain, spec.domain.region(h, basis.cells()[ci]), 2, &fans);
    for (const auto& fan : fans) {
      const int apex = add(fan.apex);
      std::vector<int> ring;
      for (const auto& p : fan.polyline) ring.push_back(add(p));
      for (std::size_t k = 0; k + 1 < ring.size(); ++k) {
        t.polys.push_back({apex, ring[k], ring[k + 1]});
        t.poly_cell.push_back(ci);
        t.poly_class.push_back(static_cast<int>(CellClass::Cut));
      }
    }
  }
  return t;
}

}  // namespace

void export_vtk(const ProblemSpec& spec, const SolutionField& u, const ErrorIndicators& ind, const std::string& path) {
  const Tessellation t = tessellate(spec, u);
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f << std::setprecision(17);
  f << "# vtk DataFile Version 3.0\ntrimiga " << spec.name << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  f << "POINTS " << t.points.size() << " double\n";
  for (const auto& p : t.points) {
    const Vec3 x = spec.geometry.eval(p, 0).x;
    f << x.x() << ' ' << x.y() << ' ' << x.z() << '\n';
  }
  std::size_t total = 0;
  for (const auto& poly : t.polys) total += poly.size() + 1;
  f << "CELLS " << t.polys.size() << ' ' << total << '\n';
  for (const auto& poly : t.polys) {
    f << poly.size();
    for (int v : poly) f << ' ' << v;
    f << '\n';
  }
  f << "CELL_TYPES " << t.polys.size() << '\n';
  for (const auto& poly : t.polys) f << (poly.size() == 4 ? 9 : 5) << '\n';
  const auto& cells = u.disc.basis->cells();
  f << "CELL_DATA " << t.polys.size() << '\n';
  f << "SCALARS level int 1\nLOOKUP_TABLE default\n";
  for (int c : t.poly_cell) f << cells[c].level << '\n';
  f << "SCALARS eta double 1\nLOOKUP_TABLE default\n";
  for (int c : t.poly_cell) f << (ind.eta.empty() ? 0.0 : ind.eta[c]) << '\n';
  f << "SCALARS classification int 1\nLOOKUP_TABLE default\n";
  for (int c : t.poly_class) f << c << '\n';
  f << "SCALARS element int 1\nLOOKUP_TABLE default\n";
  for (int c : t.poly_cell) f << c << '\n';
  f << "POINT_DATA " << t.points.size() << '\n';
  f << "VECTORS u double\n";
  for (std::size_t k = 0; k < t.points.size(); ++k) {
    const Eigen::VectorXd v = u.table_on_cell(t.point_cell[k], t.points[k], 0).col(0);
    f << v(0) << ' ' << (v.size() > 1 ? v(1) : 0.0) << ' ' << (v.size() > 2 ? v(2) : 0.0) << '\n';
  }
  if (spec.kind != ProblemKind::Poisson) {
    f << "SCALARS von_mises double 1\nLOOKUP_TABLE default\n";
    for (std::size_t k = 0; k < t.points.size(); ++k) f << von_mises(spec, u, t.point_cell[k], t.points[k]) << '\n';
  }
  if (!f) throw Error("write failed: " + path);
}

void export_solution_csv(const ProblemSpec& spec, const SolutionField& u, const std::string& path) {
  const Tessellation t = tessellate(spec, u);
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f << std::setprecision(17);
  f << "element,xi,eta,x,y,z,u0,u1,u2,von_mises\n";
  for (std::size_t k = 0; k < t.points.size(); ++k) {
    const Vec3 x = spec.geometry.eval(t.points[k], 0).x;
    const Eigen::VectorXd v = u.table_on_cell(t.point_cell[k], t.points[k], 0).col(0);
    f << t.point_cell[k] << ',' << t.points[k].x() << ',' << t.points[k].y() << ',' << x.x() << ',' << x.y() << ','
      << x.z() << ',' << v(0) << ',' << (v.size() > 1 ? v(1) : 0.0) << ',' << (v.size() > 2 ? v(2) : 0.0) << ','
      << von_mises(spec, u, t.point_cell[k], t.points[k]) << '\n';
  }
  if (!f) throw Error("write failed: " + path);
}

RunArtifacts run_benchmark(const BenchmarkConfig& cfg, std::ostream* log) {
  cfg.validate();
  const Benchmark b = make_benchmark(cfg);
  const int p = b.initial.degree(0);
  AdaptOptions opt;
  opt.adaptive = cfg.mode == "adaptive";
  opt.gamma = b.gamma;
  opt.ca = cfg.ca;
  opt.max_iter = cfg.max_iter;
  opt.tol = cfg.tol;
  opt.max_dofs = cfg.max_dofs;
  opt.solver = cfg.solver == "cg" ? SolverKind::CG : SolverKind::Direct;
  if (cfg.quad > 0) opt.quad = {cfg.quad, cfg.quad + 1, cfg.quad + 1};
  const int m = std::max(2, form_order(b.spec.kind) == 2 ? p - 1 : p);

  RunArtifacts art;
  if (log) *log << "# " << cfg.problem << " p=" << p << ' ' << cfg.mode << " (" << b.error_label << ")\n"
                << "iter      ndof   nelems          error            eta  marked levels\n";
  auto hook = [&](const HistoryRow& r, const SolutionField& u, const ErrorIndicators& ind) {
    if (max_level_spread(*u.disc.mesh, BasisKind::Truncated) > m - 1)
      art.failed_checks.push_back("mesh not admissible at iteration " + std::to_string(r.iter));
    for (double e : ind.eta)
      if (!std::isfinite(e) || e < 0.0) {
        art.failed_checks.push_back("invalid indicator at iteration " + std::to_string(r.iter));
        break;
      }
    if (log)
      *log << std::setw(4) << r.iter << std::setw(10) << r.ndof << std::setw(9) << r.nelems << std::setw(15)
           << std::setprecision(6) << std::scientific << r.error << std::setw(15) << r.eta << std::defaultfloat
           << std::setw(8) << r.marked << std::setw(7) << r.levels << std::endl;
  };
  art.result = adapt_loop(b.spec, b.initial, opt, b.error, hook);
  const auto& hist = art.result.history;
  for (std::size_t i = 1; i < hist.size(); ++i)
    if (hist[i].ndof <= hist[i - 1].ndof) art.failed_checks.push_back("DOF count did not grow");
  for (const auto& r : hist)
    if (!std::isfinite(r.eta) || (b.spec.exact && !std::isfinite(r.error)))
      art.failed_checks.push_back("non-finite history value at iteration " + std::to_string(r.iter));
  art.error_slope = fitted_slope(hist, false);
  art.eta_slope = fitted_slope(hist, true);

  const auto& last = hist.back();
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json s;
  s["config"] = cfg.to_json();
  s["config"]["degree"] = p;
  s["config"]["gamma"] = b.gamma;
  s["error_measure"] = b.error_label;
  s["iterations"] = hist.size();
  s["stop_reason"] = art.result.stop_reason;
  s["final"] = {{"ndof", last.ndof}, {"nelems", last.nelems}, {"error", num(last.error)}, {"eta", num(last.eta)},
                {"levels", last.levels}};
  s["slope"] = {{"error", num(art.error_slope)}, {"eta", num(art.eta_slope)}, {"rows", std::min<std::size_t>(5, hist.size())}};
  if (b.probe) {
    const Eigen::VectorXd v = art.result.solution->value(*b.probe);
    s["probe"] = {{"xi", {b.probe->x(), b.probe->y()}}, {"displacement", std::vector<double>(v.data(), v.data() + v.size())}};
  }
  if (b.spec.kind == ProblemKind::Shell) {
    const ShellReference ref = shell_reference(cfg);
    s["reference"] = {{"compliance", ref.compliance}, {"compliances", ref.compliances}, {"ndofs", ref.ndofs},
                      {"probe_uz", ref.probe}};
  }
  s["singular_blocks"] = art.result.indicators.singular_blocks;
  s["checks"] = {{"passed", art.failed_checks.empty()}, {"failures", art.failed_checks}};
  art.summary = s;

  namespace fs = std::filesystem;
  fs::create_directories(cfg.out);
  const std::string base = (fs::path(cfg.out) / "").string();
  write_history_csv(hist, base + "history.csv");
  art.files.push_back(base + "history.csv");
  if (cfg.export_format == "vtk") {
    export_vtk(b.spec, *art.result.solution, art.result.indicators, base + "solution.vtk");
    art.files.push_back(base + "solution.vtk");
  } else if (cfg.export_format == "csv") {
    export_solution_csv(b.spec, *art.result.solution, base + "solution.csv");
    art.files.push_back(base + "solution.csv");
  }
  {
    std::ofstream f(base + "summary.json");
    if (!f) throw Error("cannot write " + base + "summary.json");
    f << std::setprecision(17) << s.dump(2) << '\n';
  }
  art.files.push_back(base + "summary.json");
  if (log) {
    *log << "stop: " << art.result.stop_reason << "; slope error " << art.error_slope << ", eta " << art.eta_slope
         << '\n';
    for (const auto& fc : art.failed_checks) *log << "check failed: " << fc << '\n';
  }
  return art;
}

}  // namespace trimiga
