#include "trimiga/physics.hpp"

#include <cmath>
#include <complex>

namespace trimiga {

int num_components(ProblemKind k) {
  switch (k) {
    case ProblemKind::Poisson: return 1;
    case ProblemKind::Elasticity: return 2;
    case ProblemKind::Shell: return 3;
  }
  return 1;
}

int form_order(ProblemKind k) { return k == ProblemKind::Shell ? 2 : 1; }

int strain_size(ProblemKind k) {
  switch (k) {
    case ProblemKind::Poisson: return 2;
    case ProblemKind::Elasticity: return 3;
    case ProblemKind::Shell: return 6;
  }
  return 2;
}

void Material::validate(ProblemKind k) const {
  if (!(E > 0.0)) throw Error("material: E must be positive");
  if (!(nu >= 0.0 && nu < 0.5)) throw Error("material: nu must lie in [0, 0.5)");
  if (k == ProblemKind::Shell && !(t > 0.0)) throw Error("material: shell thickness must be positive");
}

PointFrame make_frame(ProblemKind k, const GeometryMap& map, const Vec2& xi) {
  PointFrame fr;
  fr.g = map.eval(xi, k == ProblemKind::Shell ? 2 : 1);
  if (k != ProblemKind::Shell) {
    const double det = fr.g.jacobian_det();
    if (!(det > 0.0)) throw Error("singular or inverted Jacobian (det <= 0) at a quadrature point");
    Eigen::Matrix2d j;
    j << fr.g.d1[0].x(), fr.g.d1[1].x(), fr.g.d1[0].y(), fr.g.d1[1].y();
    fr.jinv_t = j.inverse().transpose();
    fr.measure = det;
    return fr;
  }
  const Vec3& a1 = fr.g.d1[0];
  const Vec3& a2 = fr.g.d1[1];
  const Vec3 n = a1.cross(a2);
  const double jac = n.norm();
  if (!(jac > 1e-14 * a1.norm() * a2.norm())) throw Error("degenerate surface metric");
  fr.measure = jac;
  fr.a3 = n / jac;
  fr.b = {fr.g.d2[0].dot(fr.a3), fr.g.d2[2].dot(fr.a3), fr.g.d2[1].dot(fr.a3)};
  Eigen::Matrix2d a;
  a << a1.dot(a1), a1.dot(a2), a2.dot(a1), a2.dot(a2);
  fr.metric_inv = a.inverse();
  return fr;
}

void strain_operator(ProblemKind k, const PointFrame& fr, const Eigen::Ref<const Eigen::MatrixXd>& ders,
                     Eigen::MatrixXd& B) {
  const int n = static_cast<int>(ders.rows());
  const int nc = num_components(k);
  B.setZero(strain_size(k), n * nc);
  if (k == ProblemKind::Poisson || k == ProblemKind::Elasticity) {
    for (int f = 0; f < n; ++f) {
      const Eigen::Vector2d g = fr.jinv_t * Eigen::Vector2d(ders(f, 1), ders(f, 2));
      if (k == ProblemKind::Poisson) {
        B(0, f) = g.x();
        B(1, f) = g.y();
      } else {
        B(0, 2 * f) = g.x();
        B(2, 2 * f) = g.y();
        B(1, 2 * f + 1) = g.y();
        B(2, 2 * f + 1) = g.x();
      }
    }
    return;
  }
  const Vec3& a1 = fr.g.d1[0];
  const Vec3& a2 = fr.g.d1[1];
  const Vec3& a3 = fr.a3;
  const double jac = fr.measure;
  const Vec3 a2xa3 = a2.cross(a3), a3xa1 = a3.cross(a1);
  // second derivatives in Voigt order 11, 22, 12
  const int d2col[3] = {3, 5, 4};
  const Vec3* ab[3] = {&fr.g.d2[0], &fr.g.d2[2], &fr.g.d2[1]};
  Vec3 t1[3], t2[3];
  for (int v = 0; v < 3; ++v) {
    t1[v] = (ab[v]->cross(a2) + fr.b[v] * a2xa3) / jac;
    t2[v] = (a1.cross(*ab[v]) + fr.b[v] * a3xa1) / jac;
  }
  for (int f = 0; f < n; ++f) {
    const double nu = ders(f, 1), nv = ders(f, 2);
    for (int c = 0; c < 3; ++c) {
      const int col = 3 * f + c;
      B(0, col) = nu * a1[c];
      B(1, col) = nv * a2[c];
      B(2, col) = nv * a1[c] + nu * a2[c];
      for (int v = 0; v < 3; ++v) {
        const double kv = -ders(f, d2col[v]) * a3[c] + nu * t1[v][c] + nv * t2[v][c];
        B(3 + v, col) = v == 2 ? 2.0 * kv : kv;
      }
    }
  }
}

Eigen::Matrix3d shell_material(const Material& m, const Eigen::Matrix2d& ai) {
  // Voigt index -> (alpha, beta) with weights for engineering shear
  const int ia[4][2] = {{0, 0}, {1, 1}, {0, 1}, {1, 0}};
  const int voigt[4] = {0, 1, 2, 2};
  const double wgt[4] = {1.0, 1.0, 0.5, 0.5};
  const double c0 = m.E / (1.0 - m.nu * m.nu);
  Eigen::Matrix3d d = Eigen::Matrix3d::Zero();
  for (int p = 0; p < 4; ++p)
    for (int q = 0; q < 4; ++q) {
      const int a = ia[p][0], b = ia[p][1], g = ia[q][0], e = ia[q][1];
      const double c = c0 * (m.nu * ai(a, b) * ai(g, e) + 0.5 * (1.0 - m.nu) * (ai(a, g) * ai(b, e) + ai(a, e) * ai(b, g)));
      d(voigt[p], voigt[q]) += wgt[p] * wgt[q] * c;
    }
  return d;
}

Eigen::MatrixXd constitutive(ProblemKind k, const Material& m, const PointFrame& fr) {
  switch (k) {
    case ProblemKind::Poisson: return Eigen::MatrixXd::Identity(2, 2);
    case ProblemKind::Elasticity: {
      Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 3);
      if (m.plane_stress) {
        const double c = m.E / (1.0 - m.nu * m.nu);
        d << c, c * m.nu, 0, c * m.nu, c, 0, 0, 0, c * 0.5 * (1.0 - m.nu);
      } else {
        const double lam = m.E * m.nu / ((1.0 + m.nu) * (1.0 - 2.0 * m.nu));
        const double mu = m.E / (2.0 * (1.0 + m.nu));
        d << lam + 2 * mu, lam, 0, lam, lam + 2 * mu, 0, 0, 0, mu;
      }
      return d;
    }
    case ProblemKind::Shell: {
      const Eigen::Matrix3d c = shell_material(m, fr.metric_inv);
      Eigen::MatrixXd d = Eigen::MatrixXd::Zero(6, 6);
      d.topLeftCorner<3, 3>() = m.t * c;
      d.bottomRightCorner<3, 3>() = (m.t * m.t * m.t / 12.0) * c;
      return d;
    }
  }
  return {};
}

void SingularPoisson::eval(const Vec2& x, Eigen::VectorXd& u, Eigen::MatrixXd& grad) const {
  const double a = alpha_;
  const double xa = std::pow(x.x(), a), ya = std::pow(x.y(), a);
  u.resize(1);
  grad.resize(1, 2);
  u(0) = xa * ya;
  grad(0, 0) = a * std::pow(x.x(), a - 1) * ya;
  grad(0, 1) = a * xa * std::pow(x.y(), a - 1);
}

Eigen::VectorXd SingularPoisson::source(const Vec2& x) const {
  const double a = alpha_;
  Eigen::VectorXd f(1);
  f(0) = -a * (a - 1) * (std::pow(x.x(), a - 2) * std::pow(x.y(), a) + std::pow(x.x(), a) * std::pow(x.y(), a - 2));
  return f;
}

Eigen::VectorXd SingularPoisson::flux(const Vec2& x, const Vec2& n) const {
  Eigen::VectorXd u;
  Eigen::MatrixXd g;
  eval(x, u, g);
  Eigen::VectorXd q(1);
  q(0) = g(0, 0) * n.x() + g(0, 1) * n.y();
  return q;
}

namespace {

template <class T>
std::array<T, 2> kirsch_displacement(T x, T y, double tx, double r0, double mu, double kappa) {
  const T r = std::sqrt(x * x + y * y);
  const T c = x / r, s = y / r;
  const T c3 = 4.0 * c * c * c - 3.0 * c;
  const T s3 = 3.0 * s - 4.0 * s * s * s;
  const T rr = r / r0, ir = r0 / r, ir3 = ir * ir * ir;
  const double k = tx * r0 / (8.0 * mu);
  return {k * (rr * (kappa + 1.0) * c + 2.0 * ir * ((1.0 + kappa) * c + c3) - 2.0 * ir3 * c3),
          k * (rr * (kappa - 3.0) * s + 2.0 * ir * ((1.0 - kappa) * s + s3) - 2.0 * ir3 * s3)};
}

}  // namespace

PlateWithHole::PlateWithHole(double tx, double radius, const Material& m)
    : tx_(tx), r_(radius), mu_(m.E / (2.0 * (1.0 + m.nu))),
      kappa_(m.plane_stress ? (3.0 - m.nu) / (1.0 + m.nu) : 3.0 - 4.0 * m.nu) {
  m.validate(ProblemKind::Elasticity);
}

Eigen::Vector2d PlateWithHole::displacement(const Vec2& x) const {
  if (x.norm() == 0.0) throw Error("plate with hole: evaluation at r = 0");
  const auto u = kirsch_displacement<double>(x.x(), x.y(), tx_, r_, mu_, kappa_);
  return {u[0], u[1]};
}

void PlateWithHole::eval(const Vec2& x, Eigen::VectorXd& u, Eigen::MatrixXd& grad) const {
  u = displacement(x);
  grad.resize(2, 2);
  // complex-step derivatives are exact to rounding
  using C = std::complex<double>;
  constexpr double h = 1e-30;
  const auto dx = kirsch_displacement<C>(C(x.x(), h), C(x.y(), 0.0), tx_, r_, mu_, kappa_);
  const auto dy = kirsch_displacement<C>(C(x.x(), 0.0), C(x.y(), h), tx_, r_, mu_, kappa_);
  for (int c = 0; c < 2; ++c) {
    grad(c, 0) = dx[c].imag() / h;
    grad(c, 1) = dy[c].imag() / h;
  }
}

Eigen::Vector3d PlateWithHole::stress(const Vec2& x) const {
  const double r = x.norm();
  if (r == 0.0) throw Error("plate with hole: evaluation at r = 0");
  const double th = std::atan2(x.y(), x.x());
  const double q2 = r_ * r_ / (r * r), q4 = q2 * q2;
  const double c2 = std::cos(2 * th), c4 = std::cos(4 * th), s2 = std::sin(2 * th), s4 = std::sin(4 * th);
  return {tx_ * (1.0 - q2 * (1.5 * c2 + c4) + 1.5 * q4 * c4), tx_ * (-q2 * (0.5 * c2 - c4) - 1.5 * q4 * c4),
          tx_ * (-q2 * (0.5 * s2 + s4) + 1.5 * q4 * s4)};
}

Eigen::VectorXd PlateWithHole::flux(const Vec2& x, const Vec2& n) const {
  const Eigen::Vector3d s = stress(x);
  Eigen::VectorXd t(2);
  t << s(0) * n.x() + s(2) * n.y(), s(2) * n.x() + s(1) * n.y();
  return t;
}

void ProblemSpec::validate() const {
  material.validate(kind);
  if (geometry.dimension() != (kind == ProblemKind::Shell ? 3 : 2))
    throw Error("problem '" + name + "': geometry dimension does not match the problem kind");
  bool constrained = !pins.empty();
  for (const auto& e : edges) constrained = constrained || e.dirichlet();
  if (!constrained) throw Error("problem '" + name + "': no Dirichlet boundary");
  const int nc = components();
  for (const auto& pl : point_loads)
    if (pl.value.size() != nc) throw Error("problem '" + name + "': point load has the wrong size");
}

}  // namespace trimiga
