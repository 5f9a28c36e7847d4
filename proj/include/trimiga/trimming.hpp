#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "trimiga/hierarchy.hpp"
#include "trimiga/spline.hpp"

namespace trimiga {

/// Point and derivatives of a planar curve.
struct CurvePoint {
  Vec2 x = Vec2::Zero();
  Vec2 d1 = Vec2::Zero();
  Vec2 d2 = Vec2::Zero();
};

/// (Rational) B-spline curve in the parametric square.
class TrimCurve {
 public:
  TrimCurve() = default;
  TrimCurve(KnotVector kv, std::vector<Vec2> control_points, std::vector<double> weights = {});

  /// Straight segment a -> b.
  static TrimCurve line(const Vec2& a, const Vec2& b);
  /// Exact circle (or arc) as a rational quadratic with one segment per quarter.
  /// Counter-clockwise when `ccw`, starting at angle `start`, sweeping |sweep| radians.
  static TrimCurve circle(const Vec2& center, double radius, bool ccw = true, double start = 0.0,
                          double sweep = 2.0 * 3.14159265358979323846);

  const KnotVector& knots() const { return kv_; }
  const std::vector<Vec2>& control_points() const { return cps_; }
  const std::vector<double>& weights() const { return weights_; }
  double t0() const { return kv_.front(); }
  double t1() const { return kv_.back(); }
  Vec2 start() const { return cps_.front(); }
  Vec2 end() const { return cps_.back(); }

  CurvePoint eval(double t, int order = 1) const;
  Vec2 point(double t) const { return eval(t, 0).x; }

 private:
  KnotVector kv_;
  std::vector<Vec2> cps_;
  std::vector<double> weights_;
};

/// Closed chain of curves; material lies to the left of the direction of travel.
struct TrimLoop {
  std::vector<TrimCurve> curves;

  /// Signed enclosed area (positive for counter-clockwise loops).
  double signed_area() const;
};

enum class CellClass { Interior, Exterior, Cut };
const char* to_string(CellClass c);

/// Piece of the boundary of a material region, oriented with material on the left.
struct BoundaryPiece {
  bool is_curve = false;
  Vec2 a = Vec2::Zero();  // line endpoints (also curve endpoints, for convenience)
  Vec2 b = Vec2::Zero();
  int loop = -1;
  int curve = -1;
  double t0 = 0.0;  // curve parameter range, t0 < t1
  double t1 = 0.0;
};

/// Closed boundary of one connected material component inside a rectangle.
struct MaterialCycle {
  std::vector<BoundaryPiece> pieces;
};

/// Material inside a rectangle: either the full rectangle or the regions bounded by cycles.
struct RegionPart {
  Rect rect;
  bool full = false;
  std::vector<MaterialCycle> cycles;
};

/// Intersection of a rectangle with the material domain.
struct CellRegion {
  CellClass cls = CellClass::Interior;
  double area = 0.0;      // material area
  double fraction = 1.0;  // area / rect area
  std::vector<RegionPart> parts;
};

/// Crossing of a curve with an axis-aligned segment.
struct CurveCrossing {
  double t = 0.0;
  int edge = -1;  // 0 bottom, 1 right, 2 top, 3 left (for cell intersections)
  Vec2 point = Vec2::Zero();
};

/// Crossings of a curve with the boundary of `cell`, sorted by parameter. Corner hits within
/// 1e-10 are snapped to the corner.
std::vector<CurveCrossing> curve_cell_intersections(const TrimCurve& c, const Rect& cell);

/// Trimmed parametric square: [0,1]^2 minus the parts to the right of the loops.
class TrimmedDomain {
 public:
  TrimmedDomain() = default;
  explicit TrimmedDomain(std::vector<TrimLoop> loops);

  const std::vector<TrimLoop>& loops() const { return loops_; }
  bool trimmed() const { return !loops_.empty(); }

  /// Material test by winding numbers.
  bool inside(const Vec2& p) const;

  /// Classification and intersection data of a rectangle (not cached).
  CellRegion analyze(const Rect& r) const;

  /// Cached per cell rectangle.
  const CellRegion& region(const Hierarchy& h, const CellId& c) const;
  CellClass classify(const Hierarchy& h, const CellId& c) const { return region(h, c).cls; }

  /// Area fraction below which a cut cell counts as Exterior.
  static constexpr double kMinFraction = 1e-8;
  static constexpr double kSnap = 1e-10;

 private:
  double winding(const Vec2& p) const;
  std::optional<RegionPart> resolve(const Rect& r) const;
  void analyze_rec(const Rect& r, int depth, CellRegion& out) const;

  std::vector<TrimLoop> loops_;
  int base_ = 1;
  std::vector<std::array<Vec2, 2>> loop_boxes_;
  mutable std::map<std::array<double, 4>, CellRegion> cache_;
};

/// Area enclosed by material cycles (Green's theorem).
double region_area(const RegionPart& part, std::span<const TrimLoop> loops);

/// Ghost-cell closure: for every marked cell, the Exterior active cells contained in the supports
/// of the level functions acting on it are added. Result sorted, contains `marked`.
std::vector<CellId> ghost_cell_closure(const Hierarchy& h, const TrimmedDomain& td,
                                       std::span<const CellId> marked);

/// THB basis restricted to the material: Exterior cells are dropped, and with them every function
/// that vanishes on all remaining cells.
ThbBasis trimmed_basis(const Hierarchy& h, const TrimmedDomain& td, BasisKind kind = BasisKind::Truncated);

}  // namespace trimiga
