#pragma once

#include <functional>
#include <vector>

#include "trimiga/assembly.hpp"

namespace trimiga {

/// Reference-element bubbles: tensor Bernstein polynomials B_i(s) B_j(t) of degree p+1.
struct BubbleSpace {
  int degree = 0;        // p+1
  int problem_order = 1; // 1: vanish on the boundary; 2: value and normal derivative vanish
  std::vector<std::array<int, 2>> index;

  int size() const { return static_cast<int>(index.size()); }
};

/// p^2 bubbles (indices 1..p) for second order, (p-2)^2 (indices 2..p-1, p >= 3) for fourth order.
BubbleSpace build_bubbles(int p, int problem_order);

/// Degree p+1 functions that are nonzero on one edge (0 bottom, 1 right, 2 top, 3 left) of the
/// reference element and vanish on the other three.
std::vector<std::array<int, 2>> edge_bubbles(int p, int edge);

/// Derivative table (rows: functions, columns as in PointValues) of Bernstein products of
/// `degree` mapped onto `cell`, at parametric xi.
Eigen::MatrixXd bernstein_table(std::span<const std::array<int, 2>> index, int degree, const Rect& cell,
                                const Vec2& xi, int order);

struct EstimatorOptions {
  double ca = 3.0;
  bool neumann_bubbles = true;  // edge enrichment on inhomogeneous-Neumann background edges
  bool keep_errors = false;     // store the local bubble coefficients of e_h
};

struct ErrorIndicators {
  std::vector<double> eta;  // aligned with ThbBasis::cells()
  double total = 0.0;
  double ca = 3.0;
  int singular_blocks = 0;  // blocks solved by pseudo-inverse
  std::vector<Eigen::VectorXd> errors;
};

/// Local residual problems a(e, b) = F(b) - a(u_h, b) on each element's bubbles.
ErrorIndicators estimate(const ProblemSpec& spec, const SolutionField& u, const EstimatorOptions& opt = {});

/// Same residual problem assembled into one global sparse system and solved at once.
ErrorIndicators estimate_global(const ProblemSpec& spec, const SolutionField& u, const EstimatorOptions& opt = {});

/// Maximum strategy: indices with eta > gamma * max(eta). Empty when every eta is zero.
std::vector<int> mark(std::span<const double> eta, double gamma);

struct AdaptOptions {
  bool adaptive = true;
  double gamma = 0.5;
  double ca = 3.0;
  int max_iter = 10;
  double tol = 0.0;      // stop once eta_total / eta_total(first iteration) <= tol
  int max_dofs = 30000;  // meshes above this size are not solved
  int admissibility = -1;  // class m; -1: p for second order, p-1 for fourth order
  SolverKind solver = SolverKind::Direct;
  QuadratureOptions quad;
  BasisKind basis = BasisKind::Truncated;
};

struct HistoryRow {
  int iter = 0;
  int ndof = 0;
  int nelems = 0;
  double error = 0.0;
  double eta = 0.0;
  int marked = 0;
  int levels = 0;
};

struct AdaptResult {
  std::vector<HistoryRow> history;
  std::shared_ptr<SolutionField> solution;  // last solved field
  ErrorIndicators indicators;               // on the last solved mesh
  std::vector<CellId> last_refined;         // cells refined after the last solve (empty at stop)
  std::string stop_reason;
};

/// Error functional of a solved field; NaN when not available.
using ErrorFunction = std::function<double(const SolutionField&)>;
/// Called after each estimate, before marking.
using IterationHook = std::function<void(const HistoryRow&, const SolutionField&, const ErrorIndicators&)>;

/// solve, estimate, mark, closure (admissibility then ghost cells, to a fixed point), refine.
AdaptResult adapt_loop(const ProblemSpec& spec, Hierarchy mesh, const AdaptOptions& opt,
                       const ErrorFunction& error = {}, const IterationHook& hook = {});

/// Cells to refine for a marked set: admissibility and ghost-cell closures iterated to a fixed point.
std::vector<CellId> refinement_closure(const Hierarchy& h, const TrimmedDomain& td, std::vector<CellId> marked, int m);

}  // namespace trimiga
