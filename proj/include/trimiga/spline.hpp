#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace trimiga {

/// Errors raised for invalid input data or violated preconditions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kMaxDegree = 7;     // bubbles need p+1 with p <= 6
inline constexpr int kMaxDerivative = 3;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Axis-aligned rectangle in the parametric square.
struct Rect {
  Vec2 lo = Vec2::Zero();
  Vec2 hi = Vec2::Ones();

  double width() const { return hi.x() - lo.x(); }
  double height() const { return hi.y() - lo.y(); }
  double area() const { return width() * height(); }
  Vec2 center() const { return 0.5 * (lo + hi); }
  bool contains(const Vec2& p, double tol = 0.0) const {
    return p.x() >= lo.x() - tol && p.x() <= hi.x() + tol && p.y() >= lo.y() - tol &&
           p.y() <= hi.y() + tol;
  }
};

/// Nonzero basis functions and their derivatives at one parameter.
/// ders(k, r) is the k-th derivative of function span-p+r.
struct BasisDers {
  int span = 0;
  int degree = 0;
  int order = 0;
  std::array<double, (kMaxDerivative + 1) * (kMaxDegree + 1)> data{};

  double operator()(int k, int r) const { return data[k * (kMaxDegree + 1) + r]; }
  double& operator()(int k, int r) { return data[k * (kMaxDegree + 1) + r]; }
  int first_function() const { return span - degree; }
};

/// Open (clamped) knot vector of a univariate B-spline space.
class KnotVector {
 public:
  KnotVector() = default;
  KnotVector(int degree, std::vector<double> knots);

  /// Open knot vector on [a,b] with `spans` equal intervals.
  static KnotVector uniform(int degree, int spans, double a = 0.0, double b = 1.0);

  int degree() const { return degree_; }
  const std::vector<double>& knots() const { return knots_; }
  int num_basis() const { return static_cast<int>(knots_.size()) - degree_ - 1; }
  double front() const { return knots_.front(); }
  double back() const { return knots_.back(); }

  /// Unique knot values.
  std::vector<double> breakpoints() const;

  /// Nonzero knot spans ("cells"), in increasing order.
  int num_cells() const { return static_cast<int>(cell_span_.size()); }
  int span_of_cell(int cell) const { return cell_span_[cell]; }
  double cell_lo(int cell) const { return knots_[cell_span_[cell]]; }
  double cell_hi(int cell) const { return knots_[cell_span_[cell] + 1]; }
  /// Cell containing t, right end mapped to the last cell.
  int cell_of(double t) const;
  /// First/last cell of the support of function i.
  int first_cell(int i) const { return fn_first_cell_[i]; }
  int last_cell(int i) const { return fn_last_cell_[i]; }

  /// Index i with knots[i] <= t < knots[i+1]; t == back() maps to the last nonzero span.
  int find_span(double t) const;

  /// Nonzero basis functions and derivatives up to `order` at t.
  BasisDers eval(double t, int order) const;
  /// Same, with a span already known.
  BasisDers eval_in_span(int span, double t, int order) const;

  /// Affine image of the knots onto [0,1].
  KnotVector normalized() const;
  /// Inserts the midpoint of every nonzero span once.
  KnotVector dyadic_refined() const;

 private:
  void build_index();

  int degree_ = 0;
  std::vector<double> knots_;
  std::vector<int> cell_span_;
  std::vector<int> fn_first_cell_;
  std::vector<int> fn_last_cell_;
};

/// Coarse functions as nonnegative combinations of fine ones: b_coarse = C * b_fine.
/// Fine must be a knot refinement of coarse with equal degree.
Eigen::SparseMatrix<double, Eigen::RowMajor> two_scale_matrix(const KnotVector& coarse,
                                                              const KnotVector& fine);

/// Tensor product of two univariate spaces on the parametric square.
class TensorSplineSpace {
 public:
  TensorSplineSpace() = default;
  TensorSplineSpace(KnotVector u, KnotVector v) : dir_{std::move(u), std::move(v)} {}

  const KnotVector& dir(int d) const { return dir_[d]; }
  int dimension() const { return dir_[0].num_basis() * dir_[1].num_basis(); }
  int num_cells(int d) const { return dir_[d].num_cells(); }
  TensorSplineSpace dyadic_refined() const {
    return {dir_[0].dyadic_refined(), dir_[1].dyadic_refined()};
  }

 private:
  std::array<KnotVector, 2> dir_;
};

/// Position and parametric derivatives of a geometry map at one point.
struct GeometryPoint {
  Vec3 x = Vec3::Zero();
  std::array<Vec3, 2> d1{Vec3::Zero(), Vec3::Zero()};               // F_,u  F_,v
  std::array<Vec3, 3> d2{Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};  // F_,uu F_,uv F_,vv

  /// det of the in-plane Jacobian (planar maps).
  double jacobian_det() const { return d1[0].x() * d1[1].y() - d1[0].y() * d1[1].x(); }
  /// Area element |F_,u x F_,v| (surfaces and planar maps alike).
  double area_element() const { return d1[0].cross(d1[1]).norm(); }
};

/// (Rational) tensor spline map from [0,1]^2 into R^2 or R^3.
class GeometryMap {
 public:
  GeometryMap() = default;
  /// Control points row-major with the u index fastest; weights empty for polynomial maps.
  GeometryMap(TensorSplineSpace space, std::vector<Vec3> control_points, std::vector<double> weights,
              int dimension);

  /// Bilinear map of the rectangle [x0,x1] x [y0,y1].
  static GeometryMap rectangle(double x0, double x1, double y0, double y1);
  /// Same rectangle as a surface in the plane z = 0.
  static GeometryMap flat_square(double x0, double x1, double y0, double y1);
  /// Cylindrical roof: arc of `radius` over [-half_angle, half_angle] (radians) around the y axis,
  /// extruded over y in [0, length]; z points up at the crown.
  static GeometryMap cylinder_roof(double radius, double length, double half_angle);

  const TensorSplineSpace& space() const { return space_; }
  int dimension() const { return dim_; }
  bool rational() const { return !weights_.empty(); }
  const std::vector<Vec3>& control_points() const { return cps_; }
  const std::vector<double>& weights() const { return weights_; }

  /// order 0: position; 1: adds first derivatives; 2: adds second derivatives.
  GeometryPoint eval(const Vec2& xi, int order) const;

 private:
  TensorSplineSpace space_;
  std::vector<Vec3> cps_;
  std::vector<double> weights_;
  int dim_ = 2;
};

/// Gauss-Legendre rule with n points on [0,1] (nodes ascending, weights sum to 1).
struct GaussRule {
  std::vector<double> x;
  std::vector<double> w;
};
const GaussRule& gauss_legendre(int n);

/// Bernstein polynomials of degree n on [0,1] and derivatives up to `order`; out(k, i).
void bernstein_ders(int n, double t, int order, BasisDers& out);

}  // namespace trimiga
