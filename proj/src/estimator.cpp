#include "trimiga/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include <Eigen/SparseCholesky>

namespace trimiga {

BubbleSpace build_bubbles(int p, int problem_order) {
  if (problem_order != 1 && problem_order != 2) throw Error("bubbles: problem order must be 1 or 2");
  if (p < 1 || p + 1 > kMaxDegree) throw Error("bubbles: degree out of range");
  if (problem_order == 2 && p < 3) throw Error("bubbles: fourth-order problems need p >= 3");
  BubbleSpace b;
  b.degree = p + 1;
  b.problem_order = problem_order;
  const int lo = problem_order, hi = p + 1 - problem_order;
  for (int j = lo; j <= hi; ++j)
    for (int i = lo; i <= hi; ++i) b.index.push_back({i, j});
  return b;
}

std::vector<std::array<int, 2>> edge_bubbles(int p, int edge) {
  std::vector<std::array<int, 2>> out;
  for (int k = 1; k <= p; ++k) {
    switch (edge) {
      case 0: out.push_back({k, 0}); break;
      case 1: out.push_back({p + 1, k}); break;
      case 2: out.push_back({k, p + 1}); break;
      case 3: out.push_back({0, k}); break;
      default: throw Error("edge_bubbles: edge must be 0..3");
    }
  }
  return out;
}

Eigen::MatrixXd bernstein_table(std::span<const std::array<int, 2>> index, int degree, const Rect& cell,
                                const Vec2& xi, int order) {
  BasisDers bu, bv;
  const double wu = cell.width(), wv = cell.height();
  bernstein_ders(degree, (xi.x() - cell.lo.x()) / wu, order, bu);
  bernstein_ders(degree, (xi.y() - cell.lo.y()) / wv, order, bv);
  auto du = [&](int k, int i) { return k <= bu.order ? bu(k, i) / std::pow(wu, k) : 0.0; };
  auto dv = [&](int k, int j) { return k <= bv.order ? bv(k, j) / std::pow(wv, k) : 0.0; };
  const int ncols = order == 0 ? 1 : (order == 1 ? 3 : 6);
  Eigen::MatrixXd t(index.size(), ncols);
  for (std::size_t r = 0; r < index.size(); ++r) {
    const int i = index[r][0], j = index[r][1];
    t(r, 0) = du(0, i) * dv(0, j);
    if (order >= 1) {
      t(r, 1) = du(1, i) * dv(0, j);
      t(r, 2) = du(0, i) * dv(1, j);
    }
    if (order >= 2) {
      t(r, 3) = du(2, i) * dv(0, j);
      t(r, 4) = du(1, i) * dv(1, j);
      t(r, 5) = du(0, i) * dv(2, j);
    }
  }
  return t;
}

namespace {

struct LocalProblem {
  Eigen::MatrixXd K;
  Eigen::VectorXd r;
};

class LocalAssembler {
 public:
  LocalAssembler(const ProblemSpec& spec, const SolutionField& u, const EstimatorOptions& opt)
      : spec_(spec), u_(u), opt_(opt), basis_(*u.disc.basis), mesh_(*u.disc.mesh) {
    if (mesh_.degree(0) != mesh_.degree(1)) throw Error("estimator: unequal degrees per direction");
    p_ = mesh_.degree(0);
    order_ = form_order(spec.kind);
    nc_ = spec.components();
    interior_ = build_bubbles(p_, order_).index;
    by_cell_.resize(basis_.cells().size());
    for (std::size_t k = 0; k < u.disc.quad.boundary.size(); ++k)
      by_cell_[u.disc.quad.boundary[k].cell].push_back(static_cast<int>(k));
    for (std::size_t k = 0; k < spec.point_loads.size(); ++k) {
      const int ci = basis_.cell_index(mesh_.locate(spec.point_loads[k].xi));
      if (ci < 0) throw Error("point load outside the material domain");
      loads_.emplace_back(ci, static_cast<int>(k));
    }
  }

  LocalProblem build(int ci) const {
    const Rect rect = mesh_.cell_rect(basis_.cells()[ci]);
    // scalar functions and the (function, component) unknowns built on them
    std::vector<std::array<int, 2>> scalars = interior_;
    std::vector<std::pair<int, int>> cols;
    for (int s = 0; s < static_cast<int>(scalars.size()); ++s)
      for (int c = 0; c < nc_; ++c) cols.emplace_back(s, c);
    if (opt_.neumann_bubbles && order_ == 1) {
      const bool on_edge[4] = {rect.lo.y() == 0.0, rect.hi.x() == 1.0, rect.hi.y() == 1.0, rect.lo.x() == 0.0};
      for (int e = 0; e < 4; ++e) {
        const auto& cond = spec_.edges[e];
        if (!on_edge[e] || !cond.flux) continue;
        const int first = static_cast<int>(scalars.size());
        for (const auto& ij : edge_bubbles(p_, e)) scalars.push_back(ij);
        for (int s = first; s < static_cast<int>(scalars.size()); ++s)
          for (int c = 0; c < nc_; ++c)
            if (!cond.fixed[c]) cols.emplace_back(s, c);
      }
    }
    const int nb = static_cast<int>(cols.size());
    LocalProblem lp{Eigen::MatrixXd::Zero(nb, nb), Eigen::VectorXd::Zero(nb)};
    auto col_value = [&](const Eigen::MatrixXd& t, int b) { return t(cols[b].first, 0); };

    const auto& cq = u_.disc.quad.cells[ci];
    Eigen::MatrixXd Ball, B(strain_size(spec_.kind), nb);
    for (std::size_t k = 0; k < cq.points.size(); ++k) {
      const Vec2& xi = cq.points[k];
      const PointFrame fr = make_frame(spec_.kind, spec_.geometry, xi);
      const Eigen::MatrixXd t = bernstein_table(scalars, p_ + 1, rect, xi, order_);
      strain_operator(spec_.kind, fr, t, Ball);
      for (int b = 0; b < nb; ++b) B.col(b) = Ball.col(cols[b].first * nc_ + cols[b].second);
      const Eigen::MatrixXd D = constitutive(spec_.kind, spec_.material, fr);
      const Eigen::VectorXd eh = field_strain(spec_.kind, fr, u_.table_on_cell(ci, xi, order_));
      const double w = cq.weights[k] * fr.measure;
      lp.K.noalias() += w * B.transpose() * D * B;
      lp.r.noalias() -= w * B.transpose() * (D * eh);
      if (spec_.body) {
        const Eigen::VectorXd f = spec_.body(fr.g.x);
        for (int b = 0; b < nb; ++b) lp.r(b) += w * f(cols[b].second) * col_value(t, b);
      }
    }

    for (int bi : by_cell_[ci]) {
      const auto& bq = u_.disc.quad.boundary[bi];
      const FluxField* flux = &spec_.trim_flux;
      std::array<bool, 3> active{true, true, true};
      if (bq.edge >= 0) {
        flux = &spec_.edges[bq.edge].flux;
        for (int c = 0; c < 3; ++c) active[c] = !spec_.edges[bq.edge].fixed[c];
      }
      if (!*flux) continue;
      for (std::size_t k = 0; k < bq.points.size(); ++k) {
        const GeometryPoint g = spec_.geometry.eval(bq.points[k], 1);
        const Vec3 jt = g.d1[0] * bq.tangents[k].x() + g.d1[1] * bq.tangents[k].y();
        const Vec3 n = spec_.kind == ProblemKind::Shell ? Vec3(jt.cross(g.d1[0].cross(g.d1[1])).normalized())
                                                         : Vec3(jt.y(), -jt.x(), 0.0) / jt.norm();
        const Eigen::VectorXd tr = (*flux)(g.x, n);
        const Eigen::MatrixXd t = bernstein_table(scalars, p_ + 1, rect, bq.points[k], 0);
        const double w = bq.weights[k] * jt.norm();
        for (int b = 0; b < nb; ++b)
          if (active[cols[b].second]) lp.r(b) += w * tr(cols[b].second) * col_value(t, b);
      }
    }

    for (const auto& [cell, k] : loads_) {
      if (cell != ci) continue;
      const auto& pl = spec_.point_loads[k];
      const Eigen::MatrixXd t = bernstein_table(scalars, p_ + 1, rect, pl.xi, 0);
      for (int b = 0; b < nb; ++b) lp.r(b) += pl.value(cols[b].second) * col_value(t, b);
    }
    return lp;
  }

  int num_cells() const { return static_cast<int>(basis_.cells().size()); }

 private:
  const ProblemSpec& spec_;
  const SolutionField& u_;
  EstimatorOptions opt_;
  const ThbBasis& basis_;
  const Hierarchy& mesh_;
  int p_ = 0, order_ = 1, nc_ = 1;
  std::vector<std::array<int, 2>> interior_;
  std::vector<std::vector<int>> by_cell_;
  std::vector<std::pair<int, int>> loads_;
};

double local_energy(const Eigen::MatrixXd& K, const Eigen::VectorXd& e) { return std::max(0.0, e.dot(K * e)); }

void finish(ErrorIndicators& ind) {
  double s = 0.0;
  for (double e : ind.eta) s += e * e;
  ind.total = std::sqrt(s);
}

}  // namespace

ErrorIndicators estimate(const ProblemSpec& spec, const SolutionField& u, const EstimatorOptions& opt) {
  LocalAssembler la(spec, u, opt);
  ErrorIndicators ind;
  ind.ca = opt.ca;
  ind.eta.resize(la.num_cells());
  if (opt.keep_errors) ind.errors.resize(la.num_cells());
  for (int ci = 0; ci < la.num_cells(); ++ci) {
    const LocalProblem lp = la.build(ci);
    Eigen::VectorXd e;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(lp.K);
    const Eigen::VectorXd d = ldlt.vectorD();
    const bool ok = ldlt.info() == Eigen::Success && d.size() > 0 && d.minCoeff() > 1e-14 * d.cwiseAbs().maxCoeff();
    if (ok || lp.K.size() == 0) {
      e = lp.K.size() == 0 ? Eigen::VectorXd() : Eigen::VectorXd(ldlt.solve(lp.r));
    } else {
      // pseudo-inverse through the symmetric eigendecomposition
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lp.K);
      const Eigen::VectorXd lam = es.eigenvalues();
      const double cut = 1e-14 * lam.cwiseAbs().maxCoeff();
      Eigen::VectorXd y = es.eigenvectors().transpose() * lp.r;
      for (Eigen::Index k = 0; k < y.size(); ++k) y(k) = lam(k) > cut ? y(k) / lam(k) : 0.0;
      e = es.eigenvectors() * y;
      ++ind.singular_blocks;
    }
    ind.eta[ci] = opt.ca * std::sqrt(local_energy(lp.K, e));
    if (opt.keep_errors) ind.errors[ci] = std::move(e);
  }
  if (ind.singular_blocks > 0)
    std::cerr << "warning: " << ind.singular_blocks << " singular bubble block(s), pseudo-inverse used\n";
  finish(ind);
  return ind;
}

ErrorIndicators estimate_global(const ProblemSpec& spec, const SolutionField& u, const EstimatorOptions& opt) {
  LocalAssembler la(spec, u, opt);
  std::vector<LocalProblem> blocks;
  std::vector<int> offset{0};
  for (int ci = 0; ci < la.num_cells(); ++ci) {
    blocks.push_back(la.build(ci));
    offset.push_back(offset.back() + static_cast<int>(blocks.back().r.size()));
  }
  const int n = offset.back();
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd r(n);
  for (int ci = 0; ci < la.num_cells(); ++ci) {
    const auto& lp = blocks[ci];
    r.segment(offset[ci], lp.r.size()) = lp.r;
    for (int i = 0; i < lp.K.rows(); ++i)
      for (int j = 0; j < lp.K.cols(); ++j) trip.emplace_back(offset[ci] + i, offset[ci] + j, lp.K(i, j));
  }
  Eigen::SparseMatrix<double> K(n, n);
  K.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(K);
  if (ldlt.info() != Eigen::Success) throw Error("global bubble system: factorization failed");
  const Eigen::VectorXd e = ldlt.solve(r);
  ErrorIndicators ind;
  ind.ca = opt.ca;
  ind.eta.resize(la.num_cells());
  if (opt.keep_errors) ind.errors.resize(la.num_cells());
  for (int ci = 0; ci < la.num_cells(); ++ci) {
    const Eigen::VectorXd ec = e.segment(offset[ci], blocks[ci].r.size());
    ind.eta[ci] = opt.ca * std::sqrt(local_energy(blocks[ci].K, ec));
    if (opt.keep_errors) ind.errors[ci] = ec;
  }
  finish(ind);
  return ind;
}

std::vector<int> mark(std::span<const double> eta, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error("marking parameter must lie in (0, 1)");
  std::vector<int> out;
  if (eta.empty()) return out;
  const double mx = *std::max_element(eta.begin(), eta.end());
  if (!(mx > 0.0)) return out;
  for (std::size_t i = 0; i < eta.size(); ++i)
    if (eta[i] > gamma * mx) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<CellId> refinement_closure(const Hierarchy& h, const TrimmedDomain& td, std::vector<CellId> marked, int m) {
  std::sort(marked.begin(), marked.end());
  for (;;) {
    const auto adm = admissibility_closure(h, marked, m);
    auto next = ghost_cell_closure(h, td, adm);
    if (next == marked) return next;
    marked = std::move(next);
  }
}

AdaptResult adapt_loop(const ProblemSpec& spec, Hierarchy mesh, const AdaptOptions& opt, const ErrorFunction& error,
                       const IterationHook& hook) {
  spec.validate();
  if (opt.max_iter < 1) throw Error("adapt: max_iter must be positive");
  const int p = std::max(mesh.degree(0), mesh.degree(1));
  const int m = opt.admissibility > 0 ? opt.admissibility : std::max(2, form_order(spec.kind) == 2 ? p - 1 : p);
  AdaptResult res;
  double eta0 = 0.0;
  for (int it = 0;; ++it) {
    Discretization d = discretize(spec, mesh, opt.quad, opt.basis);
    if (it > 0 && d.ndof() > opt.max_dofs) {
      res.stop_reason = "max-dofs";
      res.last_refined.clear();
      break;
    }
    LinearSystem sys = assemble(spec, d);
    impose_dirichlet(sys, spec, d);
    Eigen::VectorXd coef = scale_and_solve(sys, opt.solver);
    const double unorm = std::sqrt(std::max(0.0, coef.dot(sys.K * coef)));
    auto u = std::make_shared<SolutionField>(SolutionField{std::move(d), spec.kind, std::move(coef)});
    ErrorIndicators ind = estimate(spec, *u, {opt.ca, true, false});

    HistoryRow row;
    row.iter = it;
    row.ndof = u->disc.ndof();
    row.nelems = static_cast<int>(u->disc.basis->cells().size());
    row.error = error ? error(*u) : (spec.exact && spec.kind != ProblemKind::Shell
                                         ? exact_error(spec, *u).norm(spec.kind)
                                         : std::numeric_limits<double>::quiet_NaN());
    row.eta = ind.total;
    row.levels = mesh.deepest_level() + 1;

    // an estimator at rounding level means the solution is resolved
    const bool resolved = ind.total <= 1e-10 * unorm;
    std::vector<CellId> marked;
    if (!resolved && opt.adaptive) {
      for (int ci : mark(ind.eta, opt.gamma)) marked.push_back(u->disc.basis->cells()[ci]);
    } else if (!resolved) {
      marked = u->disc.basis->cells();
    }
    row.marked = static_cast<int>(marked.size());
    if (hook) hook(row, *u, ind);
    res.history.push_back(row);
    res.solution = u;
    res.indicators = std::move(ind);
    if (it == 0) eta0 = row.eta;

    if (marked.empty()) {
      res.stop_reason = "converged";
      break;
    }
    if (opt.tol > 0.0 && eta0 > 0.0 && row.eta / eta0 <= opt.tol) {
      res.stop_reason = "tolerance";
      break;
    }
    if (it + 1 >= opt.max_iter) {
      res.stop_reason = "max-iter";
      break;
    }
    if (!opt.adaptive) {
      const auto all = mesh.active_cells();
      marked.assign(all.begin(), all.end());
    }
    res.last_refined = refinement_closure(mesh, spec.domain, std::move(marked), m);
    mesh.refine(res.last_refined);
  }
  return res;
}

}  // namespace trimiga
