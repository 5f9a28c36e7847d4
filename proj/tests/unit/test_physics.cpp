#include <doctest.h>

#include <cmath>
#include <random>

#include "trimiga/physics.hpp"

using namespace trimiga;

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Derivative table (value, d/du, d/dv, d2/du2, d2/dudv, d2/dv2) of one scalar field.
Eigen::MatrixXd table(double v, double du, double dv, double duu = 0, double duv = 0, double dvv = 0) {
  Eigen::MatrixXd t(1, 6);
  t << v, du, dv, duu, duv, dvv;
  return t;
}

}  // namespace

TEST_CASE("poisson kernel") {
  const auto map = GeometryMap::rectangle(0, 2, 0, 3);
  const auto fr = make_frame(ProblemKind::Poisson, map, {0.3, 0.6});
  CHECK(fr.measure == doctest::Approx(6.0).epsilon(1e-15));
  // u = 2x - y in physical coordinates: du/du = 4, du/dv = -3
  Eigen::MatrixXd B;
  strain_operator(ProblemKind::Poisson, fr, table(0, 4, -3), B);
  CHECK(B(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(B(1, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  const Eigen::MatrixXd k = B.transpose() * constitutive(ProblemKind::Poisson, {}, fr) * B;
  CHECK(k(0, 0) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("singular poisson data") {
  SingularPoisson sp(2.4);
  Eigen::VectorXd u;
  Eigen::MatrixXd g;
  sp.eval({1.0, 0.75}, u, g);
  CHECK(u(0) == doctest::Approx(std::pow(0.75, 2.4)).epsilon(1e-15));
  sp.eval({0.0, 0.4}, u, g);
  CHECK(u(0) == 0.0);
  // source equals -Laplace u by central differences
  const double h = 1e-4;
  for (const Vec2 x : {Vec2(0.3, 0.7), Vec2(0.8, 0.2), Vec2(0.55, 0.55)}) {
    auto val = [&](const Vec2& p) {
      Eigen::VectorXd uu;
      Eigen::MatrixXd gg;
      sp.eval(p, uu, gg);
      return uu(0);
    };
    const double lap = (val(x + Vec2(h, 0)) + val(x - Vec2(h, 0)) + val(x + Vec2(0, h)) + val(x - Vec2(0, h)) - 4 * val(x)) / (h * h);
    CHECK(sp.source(x)(0) == doctest::Approx(-lap).epsilon(1e-6));
    sp.eval(x, u, g);
    CHECK(g(0, 0) == doctest::Approx((val(x + Vec2(h, 0)) - val(x - Vec2(h, 0))) / (2 * h)).epsilon(1e-7));
  }
}

TEST_CASE("elasticity kernels") {
  const auto map = GeometryMap::rectangle(0, 1, 0, 1);
  const auto fr = make_frame(ProblemKind::Elasticity, map, {0.5, 0.5});
  Material m{200.0, 0.0, 1.0, false};
  const auto d = constitutive(ProblemKind::Elasticity, m, fr);
  // uniaxial strain, nu = 0: sigma_xx = E
  CHECK((d * Eigen::Vector3d(1, 0, 0))(0) == doctest::Approx(200.0).epsilon(1e-15));
  // rigid motions: translation (1,0) and rotation (-y, x)
  Eigen::MatrixXd B;
  Eigen::MatrixXd ders(2, 6);
  ders << 1, 0, 0, 0, 0, 0,   // constant
      0, 1, 0, 0, 0, 0;       // x
  strain_operator(ProblemKind::Elasticity, fr, ders, B);
  Eigen::VectorXd trans = Eigen::VectorXd::Zero(4);
  trans(0) = 1.0;
  CHECK((B * trans).norm() == 0.0);
  // rotation: u_x = -y, u_y = x: functions (y, x) with coefficients (-1 on comp 0 of y, 1 on comp 1 of x)
  Eigen::MatrixXd rot(2, 6);
  rot << 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0;
  strain_operator(ProblemKind::Elasticity, fr, rot, B);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(4);
  c(0) = -1.0;
  c(3) = 1.0;
  CHECK((B * c).norm() < 1e-15);
  // symmetry of the kernel
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  Eigen::MatrixXd r(5, 6);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 6; ++j) r(i, j) = U(rng);
  strain_operator(ProblemKind::Elasticity, fr, r, B);
  const Eigen::MatrixXd k = B.transpose() * constitutive(ProblemKind::Elasticity, {1e5, 0.3, 1, false}, fr) * B;
  CHECK((k - k.transpose()).norm() <= 1e-14 * k.norm());
}

TEST_CASE("plate with hole exact solution") {
  Material m{1e5, 0.3, 1.0, false};
  PlateWithHole ph(10.0, 1.0, m);
  CHECK(ph.kolosov() == doctest::Approx(1.8).epsilon(1e-15));
  const auto fr = make_frame(ProblemKind::Elasticity, GeometryMap::rectangle(0, 1, 0, 1), {0.5, 0.5});
  const auto d = constitutive(ProblemKind::Elasticity, m, fr);
  for (const Vec2 x : {Vec2(1.5, 0.2), Vec2(0.3, 2.0), Vec2(3.0, 3.5), Vec2(1.1, 1.1)}) {
    Eigen::VectorXd u;
    Eigen::MatrixXd g;
    ph.eval(x, u, g);
    const Eigen::Vector3d eps(g(0, 0), g(1, 1), g(0, 1) + g(1, 0));
    const Eigen::Vector3d s = d * eps;
    CHECK((s - ph.stress(x)).norm() < 1e-9 * 10.0);
    // equilibrium of the closed-form stress, fourth-order central differences
    const double h = 1e-3;
    auto d_dx = [&](int comp, const Vec2& dir) {
      return (-ph.stress(x + 2 * h * dir)(comp) + 8 * ph.stress(x + h * dir)(comp) - 8 * ph.stress(x - h * dir)(comp) +
              ph.stress(x - 2 * h * dir)(comp)) / (12 * h);
    };
    const Vec2 ex(1, 0), ey(0, 1);
    CHECK(std::abs(d_dx(0, ex) + d_dx(2, ey)) < 1e-8 * 10.0);
    CHECK(std::abs(d_dx(2, ex) + d_dx(1, ey)) < 1e-8 * 10.0);
  }
  // traction free hole
  for (int k = 0; k <= 8; ++k) {
    const double th = 0.5 * kPi * k / 8.0;
    const Vec2 n(std::cos(th), std::sin(th));
    CHECK(ph.flux(n, -n).norm() < 1e-10 * 10.0);
  }
  // far field traction
  const Eigen::VectorXd t = ph.flux({1e4, 0.0}, {1, 0});
  CHECK(t(0) == doctest::Approx(10.0).epsilon(1e-7));
  CHECK_THROWS_AS(ph.displacement({0, 0}), Error);
}

TEST_CASE("shell flat limit") {
  const auto map = GeometryMap::flat_square(0, 1, 0, 1);
  const auto fr = make_frame(ProblemKind::Shell, map, {0.3, 0.4});
  Eigen::MatrixXd B;
  // in-plane field: curvature changes vanish, membrane strain is the 2D small strain
  Eigen::MatrixXd f = table(0, 0.7, -0.2, 1.3, 0.4, -0.9);
  strain_operator(ProblemKind::Shell, fr, f, B);
  for (int c = 0; c < 2; ++c) CHECK(B.block(3, c, 3, 1).norm() < 1e-15);
  CHECK(B(0, 0) == doctest::Approx(0.7));
  CHECK(B(2, 0) == doctest::Approx(-0.2));
  CHECK(B(1, 1) == doctest::Approx(-0.2));
  // transverse deflection: kappa = -w_,ab, no membrane strain
  CHECK(B.block(0, 2, 3, 1).norm() < 1e-15);
  CHECK(B(3, 2) == doctest::Approx(-1.3));
  CHECK(B(4, 2) == doctest::Approx(0.9));
  CHECK(B(5, 2) == doctest::Approx(-0.8));
}

TEST_CASE("shell bending energy of a flat plate matches Kirchhoff") {
  const Material m{1e4, 0.3, 0.1, false};
  const auto map = GeometryMap::flat_square(0, 1, 0, 1);
  const auto& g = gauss_legendre(20);
  double energy = 0.0;
  Eigen::MatrixXd B;
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) {
      const double x = g.x[i], y = g.x[j];
      const auto fr = make_frame(ProblemKind::Shell, map, {x, y});
      const double sx = std::sin(kPi * x), sy = std::sin(kPi * y), cx = std::cos(kPi * x), cy = std::cos(kPi * y);
      strain_operator(ProblemKind::Shell, fr,
                      table(sx * sy, kPi * cx * sy, kPi * sx * cy, -kPi * kPi * sx * sy, kPi * kPi * cx * cy, -kPi * kPi * sx * sy), B);
      const Eigen::VectorXd e = B.col(2);
      energy += g.w[i] * g.w[j] * fr.measure * e.dot(constitutive(ProblemKind::Shell, m, fr) * e);
    }
  const double D = m.E * std::pow(m.t, 3) / (12 * (1 - m.nu * m.nu));
  const double kirchhoff = 0.5 * D * std::pow(kPi, 4);  // D/2 * int (Laplace w)^2
  CHECK(0.5 * energy == doctest::Approx(kirchhoff).epsilon(1e-12));
}

TEST_CASE("shell rigid body motions on the cylinder") {
  const double half = 40.0 * kPi / 180.0;
  const auto map = GeometryMap::cylinder_roof(25.0, 50.0, half);
  const Material m{4.32e8, 0.0, 0.25, false};
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(0, 1), V(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec2 xi(U(rng), U(rng));
    const auto fr = make_frame(ProblemKind::Shell, map, xi);
    // geometric check: the crown is at radius 25
    CHECK(std::abs(std::hypot(fr.g.x.x(), fr.g.x.z()) - 25.0) < 1e-12);
    const Vec3 w(V(rng), V(rng), V(rng)), c(V(rng), V(rng), V(rng));
    // u = c + w x F, as three scalar component fields
    Eigen::MatrixXd ders(3, 6);
    const Vec3 u = c + w.cross(fr.g.x);
    const Vec3 du = w.cross(fr.g.d1[0]), dv = w.cross(fr.g.d1[1]);
    const Vec3 duu = w.cross(fr.g.d2[0]), duv = w.cross(fr.g.d2[1]), dvv = w.cross(fr.g.d2[2]);
    for (int k = 0; k < 3; ++k) ders.row(k) << u[k], du[k], dv[k], duu[k], duv[k], dvv[k];
    Eigen::MatrixXd B;
    strain_operator(ProblemKind::Shell, fr, ders, B);
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(9);
    coef(0) = coef(4) = coef(8) = 1.0;
    const Eigen::VectorXd e = B * coef;
    const auto d = constitutive(ProblemKind::Shell, m, fr);
    const double rigid = e.dot(d * e);
    // scale: energy of a unit membrane strain field of the same magnitude
    Eigen::VectorXd s = Eigen::VectorXd::Zero(6);
    s(0) = w.norm() + c.norm();
    CHECK(rigid <= 1e-20 * s.dot(d * s));
  }
}

TEST_CASE("problem validation") {
  ProblemSpec p;
  p.kind = ProblemKind::Poisson;
  p.geometry = GeometryMap::rectangle(0, 1, 0, 1);
  CHECK_THROWS_AS(p.validate(), Error);
  p.edges[0].fixed[0] = true;
  CHECK_NOTHROW(p.validate());
  p.material.nu = 0.5;
  CHECK_THROWS_AS(p.validate(), Error);
  p.material.nu = 0.0;
  p.kind = ProblemKind::Shell;
  CHECK_THROWS_AS(p.validate(), Error);
  CHECK_THROWS_AS(make_frame(ProblemKind::Poisson, GeometryMap::rectangle(1, 0, 0, 1), {0.5, 0.5}), Error);
}
