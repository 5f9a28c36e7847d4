#include <doctest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "trimiga/estimator.hpp"

using namespace trimiga;
using namespace trimiga::testing;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

double max_of(const std::vector<double>& a) { return *std::max_element(a.begin(), a.end()); }

/// Singular Poisson on the square with Neumann data on the top and right edges and a hole.
ProblemSpec mixed_singular(TrimmedDomain td) {
  auto ex = std::make_shared<SingularPoisson>();
  auto spec = from_exact(ProblemKind::Poisson, ex, GeometryMap::rectangle(0, 1, 0, 1), std::move(td));
  for (int e : {1, 2}) {
    spec.edges[e].fixed = {false, false, false};
    spec.edges[e].flux = spec.trim_flux;
  }
  return spec;
}

ProblemSpec scaled(ProblemSpec s, double f) {
  auto v = s.edges[0].value;
  for (auto& e : s.edges) {
    if (e.value) e.value = [g = e.value, f](const Vec3& x) { return Eigen::VectorXd(f * g(x)); };
    if (e.flux) e.flux = [g = e.flux, f](const Vec3& x, const Vec3& n) { return Eigen::VectorXd(f * g(x, n)); };
  }
  if (s.trim_flux) s.trim_flux = [g = s.trim_flux, f](const Vec3& x, const Vec3& n) { return Eigen::VectorXd(f * g(x, n)); };
  if (s.body) s.body = [g = s.body, f](const Vec3& x) { return Eigen::VectorXd(f * g(x)); };
  return s;
}

/// Clamped flat square plate under a uniform transverse load, as a shell.
ProblemSpec flat_shell() {
  ProblemSpec s;
  s.name = "flat";
  s.kind = ProblemKind::Shell;
  s.geometry = GeometryMap::flat_square(0, 1, 0, 1);
  s.material = {1e4, 0.3, 0.05, false};
  for (auto& e : s.edges) e.fixed = {true, true, true};
  s.body = [](const Vec3&) { return Eigen::Vector3d(0, 0, -1).eval(); };
  s.point_loads.push_back({Vec2(0.3, 0.6), Eigen::Vector3d(0, 0, -0.1)});
  return s;
}

}  // namespace

TEST_CASE("bubble spaces") {
  CHECK(build_bubbles(2, 1).size() == 4);
  CHECK(build_bubbles(3, 1).size() == 9);
  CHECK(build_bubbles(3, 2).size() == 1);
  CHECK(build_bubbles(3, 2).index[0] == std::array<int, 2>{2, 2});
  CHECK(build_bubbles(5, 2).size() == 9);
  CHECK_THROWS_AS(build_bubbles(2, 2), Error);
  CHECK_THROWS_AS(build_bubbles(0, 1), Error);

  const Rect ref{{0, 0}, {1, 1}};
  for (int p : {1, 2, 3, 4, 5}) {
    for (int ord : {1, 2}) {
      if (ord == 2 && p < 3) continue;
      const auto b = build_bubbles(p, ord);
      for (int k = 0; k < 100; ++k) {
        const double t = k / 99.0;
        for (const Vec2& x : {Vec2(t, 0), Vec2(1, t), Vec2(t, 1), Vec2(0, t)}) {
          const auto tab = bernstein_table(b.index, p + 1, ref, x, 1);
          CHECK(tab.col(0).cwiseAbs().maxCoeff() < 1e-14);
          if (ord == 2) CHECK(tab.rightCols(2).cwiseAbs().maxCoeff() < 1e-14);
        }
      }
    }
  }
  // edge bubbles live on one edge only
  for (int e = 0; e < 4; ++e) {
    const auto eb = edge_bubbles(3, e);
    CHECK(eb.size() == 3);
    for (int k = 1; k < 20; ++k) {
      const double t = k / 20.0;
      const Vec2 pts[4] = {Vec2(t, 0), Vec2(1, t), Vec2(t, 1), Vec2(0, t)};
      for (int o = 0; o < 4; ++o) {
        const double mx = bernstein_table(eb, 4, ref, pts[o], 0).cwiseAbs().maxCoeff();
        if (o == e)
          CHECK(mx > 0.01);
        else
          CHECK(mx < 1e-14);
      }
    }
  }
  // mapped derivatives follow the cell size
  const Rect cell{{0.25, 0.5}, {0.375, 0.75}};
  const auto b = build_bubbles(2, 1);
  const Vec2 x(0.3, 0.6);
  const auto t = bernstein_table(b.index, 3, cell, x, 2);
  const double h = 1e-6;
  const auto tu = bernstein_table(b.index, 3, cell, x + Vec2(h, 0), 2);
  const auto td = bernstein_table(b.index, 3, cell, x - Vec2(h, 0), 2);
  for (int r = 0; r < 4; ++r) {
    CHECK(t(r, 1) == doctest::Approx((tu(r, 0) - td(r, 0)) / (2 * h)).epsilon(1e-7));
    CHECK(t(r, 3) == doctest::Approx((tu(r, 1) - td(r, 1)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("estimator vanishes on exactly represented solutions") {
  SUBCASE("linear Poisson with Neumann edges and a trimmed hole") {
    auto spec = from_exact(ProblemKind::Poisson, scalar_affine(0.5, 2.0, -1.5), GeometryMap::rectangle(-1, 2, 0, 1),
                           triangle_hole());
    for (int e : {1, 2}) {
      spec.edges[e].fixed = {false, false, false};
      spec.edges[e].flux = spec.trim_flux;
    }
    for (int p : {1, 2, 3}) {
      Hierarchy h = make(p, 4);
      h.refine(std::array{CellId{0, 1, 1}});
      const auto u = solve(spec, h);
      const auto ind = estimate(spec, u);
      CHECK(ind.total < 1e-11);
      CHECK(ind.singular_blocks == 0);
    }
  }
  SUBCASE("constant-stress elasticity") {
    Material m{200.0, 0.3, 1.0, false};
    Eigen::MatrixXd g(2, 2);
    g << 1e-2, 3e-3, -2e-3, 5e-3;
    const PointFrame fr;
    auto ex = std::make_shared<Affine>(g, Eigen::Vector2d(0.1, -0.2), constitutive(ProblemKind::Elasticity, m, fr));
    auto spec = from_exact(ProblemKind::Elasticity, ex, GeometryMap::rectangle(0, 3, 0, 2), triangle_hole());
    spec.material = m;
    spec.edges[1].fixed = {true, false, false};
    spec.edges[1].flux = spec.trim_flux;
    const auto u = solve(spec, make(2, 4));
    CHECK(estimate(spec, u).total < 1e-10);
  }
  SUBCASE("adapt loop stops after one iteration") {
    auto spec = from_exact(ProblemKind::Poisson, scalar_affine(1, 1, 1), GeometryMap::rectangle(0, 1, 0, 1));
    AdaptOptions opt;
    opt.max_iter = 5;
    const auto res = adapt_loop(spec, make(2, 2), opt);
    CHECK(res.history.size() == 1);
    CHECK(res.stop_reason == "converged");
    CHECK(res.history[0].eta < 1e-12);
    CHECK(res.history[0].marked == 0);
  }
}

TEST_CASE("global bubble solve equals element solves") {
  SUBCASE("Poisson with Neumann edges, hole and local refinement") {
    auto spec = mixed_singular(hole({0.45, 0.55}, 0.2));
    for (int p : {2, 3}) {
      Hierarchy h = make(p, 4);
      h.refine(std::array{CellId{0, 0, 0}, CellId{0, 3, 3}});
      const auto u = solve(spec, h);
      EstimatorOptions opt;
      opt.keep_errors = true;
      const auto a = estimate(spec, u, opt), b = estimate_global(spec, u, opt);
      REQUIRE(a.singular_blocks == 0);
      CHECK(max_abs_diff(a.eta, b.eta) < 1e-12 * max_of(a.eta));
      double de = 0.0, se = 0.0;
      for (std::size_t c = 0; c < a.errors.size(); ++c) {
        de = std::max(de, (a.errors[c] - b.errors[c]).cwiseAbs().maxCoeff());
        se = std::max(se, a.errors[c].cwiseAbs().maxCoeff());
      }
      CHECK(de < 1e-12 * se);
    }
  }
  SUBCASE("flat shell with a point load") {
    const auto spec = flat_shell();
    const auto u = solve(spec, make(3, 4));
    const auto a = estimate(spec, u), b = estimate_global(spec, u);
    CHECK(a.total > 0.0);
    CHECK(max_abs_diff(a.eta, b.eta) < 1e-12 * max_of(a.eta));
  }
}

TEST_CASE("estimator is linear in the data") {
  const auto base = mixed_singular(hole({0.5, 0.5}, 0.2));
  const auto h = make(2, 4);
  const auto ea = estimate(base, solve(base, h));
  for (double s : {0.1, 7.5}) {
    const auto sp = scaled(base, s);
    const auto eb = estimate(sp, solve(sp, h));
    for (std::size_t c = 0; c < ea.eta.size(); ++c)
      CHECK(eb.eta[c] == doctest::Approx(s * ea.eta[c]).epsilon(1e-9));
  }
  // the constant enters linearly
  EstimatorOptions one;
  one.ca = 1.0;
  const auto e1 = estimate(base, solve(base, h), one);
  CHECK(ea.total == doctest::Approx(3.0 * e1.total).epsilon(1e-14));
}

TEST_CASE("maximum marking") {
  const std::vector<double> eta{1.0, 0.6, 0.4};
  CHECK(mark(eta, 0.5) == std::vector<int>{0, 1});
  CHECK(mark(eta, 0.999) == std::vector<int>{0});
  CHECK(mark(std::vector<double>{0, 0, 0}, 0.5).empty());
  CHECK_THROWS_AS(mark(eta, 1.0), Error);
  CHECK_THROWS_AS(mark(eta, 0.0), Error);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> e(30);
    for (auto& x : e) x = u(rng);
    std::size_t prev = e.size() + 1;
    for (double g = 0.05; g < 1.0; g += 0.05) {
      const auto m = mark(e, g);
      CHECK(!m.empty());
      CHECK(m.size() <= prev);
      prev = m.size();
    }
  }
}

TEST_CASE("adaptive loop on the singular problem") {
  auto spec = mixed_singular(hole({0.5, 0.5}, 0.15));
  AdaptOptions opt;
  opt.max_iter = 5;
  std::vector<int> spreads;
  const auto res = adapt_loop(spec, make(2, 4), opt, {},
                              [&](const HistoryRow&, const SolutionField& u, const ErrorIndicators& ind) {
                                CHECK(ind.eta.size() == u.disc.basis->cells().size());
                                spreads.push_back(max_level_spread(*u.disc.mesh, BasisKind::Truncated));
                              });
  REQUIRE(res.history.size() == 5);
  CHECK(res.stop_reason == "max-iter");
  for (int s : spreads) CHECK(s <= 1);
  for (std::size_t i = 1; i < res.history.size(); ++i) {
    CHECK(res.history[i].ndof > res.history[i - 1].ndof);
    CHECK(res.history[i].error < res.history[i - 1].error);
    CHECK(res.history[i].levels >= res.history[i - 1].levels);
  }
  for (const auto& r : res.history) {
    const double eff = r.eta / r.error;
    CHECK(eff > 0.3);
    CHECK(eff < 3.0);
  }
  // ghost closure: refined exterior cells keep the trimmed basis consistent
  const auto& mesh = *res.solution->disc.mesh;
  CHECK(mesh.deepest_level() >= 3);

  AdaptOptions uni = opt;
  uni.adaptive = false;
  uni.max_iter = 3;
  const auto ru = adapt_loop(spec, make(2, 4), uni);
  REQUIRE(ru.history.size() == 3);
  CHECK(ru.history[1].nelems > 3 * ru.history[0].nelems);
  CHECK(ru.history[2].levels == 3);

  AdaptOptions small = opt;
  small.max_dofs = 100;
  const auto rs = adapt_loop(spec, make(2, 4), small);
  CHECK(rs.stop_reason == "max-dofs");
  for (std::size_t i = 1; i < rs.history.size(); ++i) CHECK(rs.history[i].ndof <= 100);
}
