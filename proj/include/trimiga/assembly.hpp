#pragma once

#include <memory>
#include <string>
#include <vector>

#include "trimiga/physics.hpp"
#include "trimiga/quadrature.hpp"

namespace trimiga {

/// Mesh snapshot, trimmed basis and rules. The basis refers to the owned hierarchy.
struct Discretization {
  std::shared_ptr<const Hierarchy> mesh;
  std::shared_ptr<const ThbBasis> basis;
  DomainQuadrature quad;
  int components = 1;

  int ndof() const { return basis->size() * components; }
};

Discretization discretize(const ProblemSpec& spec, const Hierarchy& h, const QuadratureOptions& opt = {},
                          BasisKind kind = BasisKind::Truncated);

/// Global system before and after boundary conditions. Unknown f * components + c is component c
/// of basis function f (functions numbered level-major, then lexicographic).
struct LinearSystem {
  Eigen::SparseMatrix<double> K;
  Eigen::VectorXd F;
  int components = 1;
  std::vector<int> constrained;  // sorted
  Eigen::VectorXd values;        // full length; prescribed values at constrained unknowns

  int size() const { return static_cast<int>(F.size()); }
  int num_free() const { return size() - static_cast<int>(constrained.size()); }
  static int index(int function, int comp, int ncomp) { return function * ncomp + comp; }
};

/// Stiffness and load: volume terms on the material rules, Neumann terms on boundary pieces
/// (background edges for free components, trimming curves) and point loads.
LinearSystem assemble(const ProblemSpec& spec, const Discretization& d);

/// Dirichlet data by L2 projection onto the trace space, jointly over all Dirichlet edges of
/// each component, then pins.
void impose_dirichlet(LinearSystem& sys, const ProblemSpec& spec, const Discretization& d);

enum class SolverKind { Direct, CG };

struct SolveInfo {
  int iterations = 0;          // CG only
  double residual = 0.0;       // relative, of the scaled reduced system
  double pivot_ratio = 0.0;    // direct: min/max pivot of the scaled factorization
};

/// Reduced system with prescribed unknowns eliminated symmetrically.
struct ReducedSystem {
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
  std::vector<int> free;  // reduced index -> full index
};
ReducedSystem reduce(const LinearSystem& sys);

/// s with diag(s) A diag(s) of unit diagonal; throws on a non-positive diagonal entry.
Eigen::VectorXd jacobi_scaling(const Eigen::SparseMatrix<double>& A);

/// Solves A x = b after symmetric Jacobi scaling. Throws on breakdown or non-convergence.
Eigen::VectorXd scaled_solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b, SolverKind kind,
                             SolveInfo* info = nullptr);

/// Full coefficient vector (free and prescribed unknowns).
Eigen::VectorXd scale_and_solve(const LinearSystem& sys, SolverKind kind = SolverKind::Direct,
                                SolveInfo* info = nullptr);

/// Discrete field on a discretization.
struct SolutionField {
  Discretization disc;
  ProblemKind kind = ProblemKind::Poisson;
  Eigen::VectorXd coef;

  int components() const { return disc.components; }
  /// Derivative table t(c, k) of each component, k as in PointValues, on a retained cell.
  Eigen::MatrixXd table_on_cell(int cell, const Vec2& xi, int order) const;
  /// Same, locating the cell; throws outside the retained cells.
  Eigen::MatrixXd table(const Vec2& xi, int order) const;
  Eigen::VectorXd value(const Vec2& xi) const { return table(xi, 0).col(0); }
};

/// Strain vector of a field given by its derivative table (one row per component).
Eigen::VectorXd field_strain(ProblemKind k, const PointFrame& fr, const Eigen::MatrixXd& table);

/// Error of a field against the closed-form solution of the spec.
struct ExactErrors {
  double l2 = 0.0;
  double h1_semi = 0.0;
  double energy = 0.0;
  /// Reported norm: full H1 for Poisson, energy otherwise.
  double norm(ProblemKind k) const;
};
ExactErrors exact_error(const ProblemSpec& spec, const SolutionField& u, int extra_points = 2);

/// sqrt(a(u - v, u - v)) over the common refinement of both meshes (same base mesh required).
double energy_difference(const ProblemSpec& spec, const SolutionField& u, const SolutionField& v,
                         int extra_points = 2);

/// sqrt(a(u, u)).
double energy(const ProblemSpec& spec, const SolutionField& u);

/// Coordinate text dump "row col value" of K and "index value" of F.
void write_system(const LinearSystem& sys, const std::string& matrix_path, const std::string& rhs_path);

}  // namespace trimiga
