#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "trimiga/trimming.hpp"

namespace trimiga {

enum class ProblemKind { Poisson, Elasticity, Shell };

int num_components(ProblemKind k);
/// Highest parametric derivative entering the bilinear form.
int form_order(ProblemKind k);
/// Rows of the strain operator: gradient (2), Voigt strain (3), membrane + bending (6).
int strain_size(ProblemKind k);

struct Material {
  double E = 1.0;
  double nu = 0.0;
  double t = 1.0;
  bool plane_stress = false;

  void validate(ProblemKind k) const;
};

/// Geometry at one parametric point, with everything the kernels need.
struct PointFrame {
  GeometryPoint g;
  double measure = 0.0;  // physical area per parametric area
  Eigen::Matrix2d jinv_t = Eigen::Matrix2d::Identity();  // planar: J^{-T}
  Vec3 a3 = Vec3::UnitZ();                                // shell director
  std::array<double, 3> b{};                              // shell curvature b_11, b_22, b_12
  Eigen::Matrix2d metric_inv = Eigen::Matrix2d::Identity();  // shell contravariant metric
};

/// Throws on det J <= 0 (planar) or a degenerate surface metric (shell).
PointFrame make_frame(ProblemKind k, const GeometryMap& map, const Vec2& xi);

/// Strain operator for n scalar functions given by their parametric derivative table
/// ders (n x 6, columns as in PointValues). Unknowns are laid out function-major:
/// column f * ncomp + c multiplies component c of function f.
void strain_operator(ProblemKind k, const PointFrame& fr, const Eigen::Ref<const Eigen::MatrixXd>& ders,
                     Eigen::MatrixXd& B);

/// Constitutive matrix: a(u,v) = integral of (B v)^T D (B u).
Eigen::MatrixXd constitutive(ProblemKind k, const Material& m, const PointFrame& fr);

/// Curvilinear shell material tensor in Voigt form (engineering shear), without thickness.
Eigen::Matrix3d shell_material(const Material& m, const Eigen::Matrix2d& metric_inv);

/// Closed-form solution with data derived from it.
class ExactSolution {
 public:
  virtual ~ExactSolution() = default;
  virtual int components() const = 0;
  /// Value and physical gradient grad(c, d) = du_c / dx_d.
  virtual void eval(const Vec2& x, Eigen::VectorXd& u, Eigen::MatrixXd& grad) const = 0;
  virtual Eigen::VectorXd source(const Vec2& x) const = 0;
  /// Boundary flux for the outward unit normal n (du/dn, or sigma n).
  virtual Eigen::VectorXd flux(const Vec2& x, const Vec2& n) const = 0;
};

/// u = x^a y^a, -Laplace u = f.
class SingularPoisson final : public ExactSolution {
 public:
  explicit SingularPoisson(double alpha = 2.4) : alpha_(alpha) {}
  int components() const override { return 1; }
  void eval(const Vec2& x, Eigen::VectorXd& u, Eigen::MatrixXd& grad) const override;
  Eigen::VectorXd source(const Vec2& x) const override;
  Eigen::VectorXd flux(const Vec2& x, const Vec2& n) const override;
  double alpha() const { return alpha_; }

 private:
  double alpha_;
};

/// Infinite plate with a circular hole of radius R at the origin under remote traction Tx.
class PlateWithHole final : public ExactSolution {
 public:
  PlateWithHole(double tx, double radius, const Material& m);
  int components() const override { return 2; }
  void eval(const Vec2& x, Eigen::VectorXd& u, Eigen::MatrixXd& grad) const override;
  Eigen::VectorXd source(const Vec2&) const override { return Eigen::VectorXd::Zero(2); }
  Eigen::VectorXd flux(const Vec2& x, const Vec2& n) const override;
  /// Closed-form stress (sxx, syy, sxy).
  Eigen::Vector3d stress(const Vec2& x) const;
  Eigen::Vector2d displacement(const Vec2& x) const;
  double kolosov() const { return kappa_; }

 private:
  double tx_, r_, mu_, kappa_;
};

using VectorField = std::function<Eigen::VectorXd(const Vec3& x)>;
using FluxField = std::function<Eigen::VectorXd(const Vec3& x, const Vec3& n)>;

/// Conditions on one edge of the parametric square (0 bottom, 1 right, 2 top, 3 left).
struct EdgeCondition {
  std::array<bool, 3> fixed{false, false, false};  // components with Dirichlet data
  VectorField value;                               // Dirichlet data; empty means zero
  FluxField flux;                                  // Neumann data on free components; empty means zero
  bool dirichlet() const { return fixed[0] || fixed[1] || fixed[2]; }
};

struct PointLoad {
  Vec2 xi = Vec2::Zero();
  Eigen::VectorXd value;
};

/// Pins component `comp` of the active function with the largest value at xi (removes rigid modes).
struct Pin {
  Vec2 xi = Vec2::Zero();
  int comp = 0;
};

struct ProblemSpec {
  std::string name;
  ProblemKind kind = ProblemKind::Poisson;
  Material material;
  GeometryMap geometry;
  TrimmedDomain domain;
  std::array<EdgeCondition, 4> edges;
  FluxField trim_flux;  // Neumann data on trimming curves; empty means traction free
  VectorField body;     // per unit area; empty means zero
  std::vector<PointLoad> point_loads;
  std::vector<Pin> pins;
  std::shared_ptr<const ExactSolution> exact;

  int components() const { return num_components(kind); }
  void validate() const;
};

}  // namespace trimiga
