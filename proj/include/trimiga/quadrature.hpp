#pragma once

#include <span>
#include <string>
#include <vector>

#include "trimiga/trimming.hpp"

namespace trimiga {

/// Integration points of one cell in parametric coordinates. sub[k] is -1 on full cells and the
/// index of the fan sub-element otherwise.
struct CellQuadrature {
  std::vector<Vec2> points;
  std::vector<double> weights;
  std::vector<int> sub;
  bool cut = false;

  double total() const;
};

/// Points on a boundary segment: weights integrate in the curve parameter, tangents are the
/// parametric derivative, so the parametric length element is weight * |tangent| and the material
/// lies to the left of the tangent.
struct BoundaryQuadrature {
  int cell = -1;  // index into ThbBasis::cells()
  int edge = -1;  // 0 bottom, 1 right, 2 top, 3 left of the unit square; -1 trimming curve
  int loop = -1;
  std::vector<Vec2> points;
  std::vector<Vec2> tangents;
  std::vector<double> weights;

  /// Unit outward normal in parametric space at point k.
  Vec2 normal(std::size_t k) const { return Vec2(tangents[k].y(), -tangents[k].x()).normalized(); }
};

/// Fan sub-element of a cut cell: apex A and a boundary piece P(u); X(u,v) = A + v (P(u) - A).
struct FanTriangle {
  Vec2 apex;
  std::vector<Vec2> polyline;  // samples of P for export
};

CellQuadrature full_cell_rule(const Rect& cell, int q);

/// Cut-cell rule by fans of sub-elements; `fans`, when given, receives the sub-elements.
CellQuadrature cut_cell_rule(const TrimmedDomain& td, const CellRegion& region, int q,
                             std::vector<FanTriangle>* fans = nullptr);

/// Gauss points on one boundary piece.
void boundary_rule(const TrimmedDomain& td, const BoundaryPiece& piece, int q, BoundaryQuadrature& out);

struct QuadratureOptions {
  int full = -1;      // points per direction on full cells; -1: p+1
  int cut = -1;       // on cut sub-elements; -1: p+2
  int boundary = -1;  // on boundary pieces; -1: p+2
};

struct DomainQuadrature {
  std::vector<CellQuadrature> cells;  // aligned with ThbBasis::cells()
  std::vector<BoundaryQuadrature> boundary;
};

/// Rules for every retained cell of `basis` plus the material boundary split per cell.
DomainQuadrature build_quadrature(const ThbBasis& basis, const TrimmedDomain& td, const QuadratureOptions& opt);
/// Same for an explicit list of non-exterior cells; cell indices refer to `cells`.
DomainQuadrature build_quadrature(const Hierarchy& h, std::span<const CellId> cells, const TrimmedDomain& td,
                                  const QuadratureOptions& opt);

/// Pieces of a cell region on the domain boundary, tagged with their edge (-1: trimming curve).
std::vector<std::pair<int, BoundaryPiece>> region_boundary(const CellRegion& region);

/// Debug dump "x,y,w,cell" of every volume point.
void write_quadrature_csv(const DomainQuadrature& dq, const std::string& path);

}  // namespace trimiga
