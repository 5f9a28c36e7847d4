#include "trimiga/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace trimiga {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kMaxFanDepth = 6;

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Smooth parameter interval of a boundary piece: P(s) for s in [s0, s1].
struct Segment {
  const TrimCurve* curve = nullptr;  // null: straight line a -> b over [0,1]
  Vec2 a, b;
  double s0 = 0.0, s1 = 1.0;

  void eval(double s, Vec2& x, Vec2& d) const {
    if (!curve) {
      x = a + s * (b - a);
      d = b - a;
      return;
    }
    const auto p = curve->eval(s, 1);
    x = p.x;
    d = p.d1;
  }
};

/// Accumulated tangent turning over [s0,s1] from samples.
double turning(const Segment& seg) {
  constexpr int n = 8;
  double total = 0.0, prev = 0.0;
  for (int k = 0; k <= n; ++k) {
    Vec2 x, d;
    seg.eval(seg.s0 + (seg.s1 - seg.s0) * k / n, x, d);
    const double ang = std::atan2(d.y(), d.x());
    if (k > 0) {
      double da = ang - prev;
      while (da > kPi) da -= 2 * kPi;
      while (da < -kPi) da += 2 * kPi;
      total += std::abs(da);
    }
    prev = ang;
  }
  return total;
}

/// Splits a piece at curve breakpoints and into sub-intervals turning by at most pi/12.
std::vector<Segment> segments(const TrimmedDomain& td, const BoundaryPiece& p) {
  std::vector<Segment> out;
  if (!p.is_curve) {
    out.push_back({nullptr, p.a, p.b, 0.0, 1.0});
    return out;
  }
  const auto& c = td.loops()[p.loop].curves[p.curve];
  const auto br = c.knots().breakpoints();
  std::vector<double> cuts{p.t0};
  for (double t : br)
    if (t > p.t0 && t < p.t1) cuts.push_back(t);
  cuts.push_back(p.t1);
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    Segment whole{&c, p.a, p.b, cuts[k], cuts[k + 1]};
    const int m = std::max(1, static_cast<int>(std::ceil(turning(whole) / (kPi / 12.0))));
    for (int r = 0; r < m; ++r) {
      const double a = cuts[k] + (cuts[k + 1] - cuts[k]) * r / m;
      const double b = cuts[k] + (cuts[k + 1] - cuts[k]) * (r + 1) / m;
      out.push_back({&c, p.a, p.b, a, b});
    }
  }
  return out;
}

/// Smallest sine between P - A and P' over interior samples of every non-degenerate segment;
/// +inf when every segment is collinear with the apex.
double visibility(const std::vector<Segment>& segs, const Vec2& apex, double diam) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& s : segs) {
    constexpr int n = 10;
    double sines[n + 1];
    bool degenerate = true;
    for (int k = 0; k <= n; ++k) {
      Vec2 x, d;
      s.eval(s.s0 + (s.s1 - s.s0) * k / n, x, d);
      const double r = (x - apex).norm(), dn = d.norm();
      if (r < 1e-12 * diam || dn == 0.0) {
        sines[k] = std::numeric_limits<double>::infinity();
        continue;
      }
      sines[k] = cross2(x - apex, d) / (r * dn);
      if (std::abs(sines[k]) > 1e-12) degenerate = false;
    }
    if (degenerate) continue;
    // endpoints may touch the apex ray tangentially (e.g. an arc meeting a cell edge at a corner)
    if (sines[0] < -1e-10 || sines[n] < -1e-10) return -1.0;
    for (int k = 1; k < n; ++k) worst = std::min(worst, sines[k]);
  }
  return worst;
}

void add_tensor(const Rect& r, int q, int sub, CellQuadrature& out) {
  const auto& g = gauss_legendre(q);
  const double a = r.area();
  for (int j = 0; j < q; ++j)
    for (int i = 0; i < q; ++i) {
      out.points.emplace_back(r.lo.x() + r.width() * g.x[i], r.lo.y() + r.height() * g.x[j]);
      out.weights.push_back(a * g.w[i] * g.w[j]);
      out.sub.push_back(sub);
    }
}

void add_part(const TrimmedDomain& td, const RegionPart& part, int q, int depth, CellQuadrature& out,
              std::vector<FanTriangle>* fans, int& sub);

/// Fan rule of one cycle; false when no apex sees the whole cycle.
bool add_fan(const TrimmedDomain& td, const MaterialCycle& cyc, const Rect& rect, int q, bool force,
             CellQuadrature& out, std::vector<FanTriangle>* fans, int& sub) {
  std::vector<Segment> segs;
  for (const auto& p : cyc.pieces) {
    auto s = segments(td, p);
    segs.insert(segs.end(), s.begin(), s.end());
  }
  const double diam = std::hypot(rect.width(), rect.height());

  std::vector<Vec2> candidates;
  for (const auto& p : cyc.pieces) {
    candidates.push_back(p.a);
    if (!p.is_curve) candidates.push_back(0.5 * (p.a + p.b));
  }
  // polygon centroid of a sampled cycle
  {
    std::vector<Vec2> poly;
    for (const auto& s : segs) {
      for (int k = 0; k < 4; ++k) {
        Vec2 x, d;
        s.eval(s.s0 + (s.s1 - s.s0) * k / 4.0, x, d);
        poly.push_back(x);
      }
    }
    double a = 0.0;
    Vec2 c = Vec2::Zero();
    for (std::size_t k = 0; k < poly.size(); ++k) {
      const Vec2& p0 = poly[k];
      const Vec2& p1 = poly[(k + 1) % poly.size()];
      const double cr = cross2(p0, p1);
      a += cr;
      c += cr * (p0 + p1);
    }
    if (std::abs(a) > 0.0) candidates.push_back(c / (3.0 * a));
  }

  double best = -std::numeric_limits<double>::infinity();
  Vec2 apex = Vec2::Zero();
  for (const auto& c : candidates) {
    const double v = visibility(segs, c, diam);
    if (v > best) {
      best = v;
      apex = c;
    }
  }
  // At the depth limit (e.g. a curve touching a cell edge between dyadic points) the fan is kept
  // with signed weights: the rule remains exact on polynomials over the cell.
  if (best < 1e-3 && !force) return false;

  const auto& g = gauss_legendre(q);
  for (const auto& s : segs) {
    const double len = s.s1 - s.s0;
    bool any = false;
    std::vector<Vec2> pts;
    std::vector<double> ws;
    for (int i = 0; i < q; ++i) {
      Vec2 x, d;
      s.eval(s.s0 + len * g.x[i], x, d);
      const double c = cross2(x - apex, d);
      if (std::abs(c) <= 1e-14 * diam * diam * std::max(1.0, d.norm() / diam)) continue;
      any = true;
      for (int j = 0; j < q; ++j) {
        const double v = g.x[j];
        pts.push_back(apex + v * (x - apex));
        ws.push_back(g.w[i] * g.w[j] * len * v * c);
      }
    }
    if (!any) continue;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      out.points.push_back(pts[k]);
      out.weights.push_back(ws[k]);
      out.sub.push_back(sub);
    }
    if (fans) {
      FanTriangle f{apex, {}};
      for (int k = 0; k <= 8; ++k) {
        Vec2 x, d;
        s.eval(s.s0 + len * k / 8.0, x, d);
        f.polyline.push_back(x);
      }
      fans->push_back(std::move(f));
    }
    ++sub;
  }
  return true;
}

void add_part(const TrimmedDomain& td, const RegionPart& part, int q, int depth, CellQuadrature& out,
              std::vector<FanTriangle>* fans, int& sub) {
  if (part.full) {
    add_tensor(part.rect, q, sub++, out);
    return;
  }
  bool ok = true;
  const std::size_t mark = out.points.size();
  const std::size_t fan_mark = fans ? fans->size() : 0;
  const int sub_mark = sub;
  for (const auto& cyc : part.cycles) {
    if (!add_fan(td, cyc, part.rect, q, depth >= kMaxFanDepth, out, fans, sub)) {
      ok = false;
      break;
    }
  }
  if (ok) return;
  out.points.resize(mark);
  out.weights.resize(mark);
  out.sub.resize(mark);
  if (fans) fans->resize(fan_mark);
  sub = sub_mark;
  const Rect& r = part.rect;
  const Vec2 m = r.center();
  const Rect quads[4] = {{r.lo, m}, {{m.x(), r.lo.y()}, {r.hi.x(), m.y()}}, {{r.lo.x(), m.y()}, {m.x(), r.hi.y()}}, {m, r.hi}};
  for (const auto& qr : quads) {
    const auto reg = td.analyze(qr);
    for (const auto& p : reg.parts) add_part(td, p, q, depth + 1, out, fans, sub);
  }
}

int boundary_edge(const BoundaryPiece& p) {
  if (p.is_curve) return -1;
  constexpr double tol = 1e-13;
  if (std::abs(p.a.y()) < tol && std::abs(p.b.y()) < tol) return 0;
  if (std::abs(p.a.x() - 1.0) < tol && std::abs(p.b.x() - 1.0) < tol) return 1;
  if (std::abs(p.a.y() - 1.0) < tol && std::abs(p.b.y() - 1.0) < tol) return 2;
  if (std::abs(p.a.x()) < tol && std::abs(p.b.x()) < tol) return 3;
  return -2;
}

}  // namespace

double CellQuadrature::total() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

CellQuadrature full_cell_rule(const Rect& cell, int q) {
  CellQuadrature out;
  add_tensor(cell, q, -1, out);
  return out;
}

CellQuadrature cut_cell_rule(const TrimmedDomain& td, const CellRegion& region, int q, std::vector<FanTriangle>* fans) {
  CellQuadrature out;
  out.cut = true;
  int sub = 0;
  for (const auto& part : region.parts) add_part(td, part, q, 0, out, fans, sub);
  return out;
}

void boundary_rule(const TrimmedDomain& td, const BoundaryPiece& piece, int q, BoundaryQuadrature& out) {
  const auto& g = gauss_legendre(q);
  for (const auto& s : segments(td, piece)) {
    const double len = s.s1 - s.s0;
    for (int i = 0; i < q; ++i) {
      Vec2 x, d;
      s.eval(s.s0 + len * g.x[i], x, d);
      if (d.norm() == 0.0) throw Error("boundary_rule: zero tangent");
      out.points.push_back(x);
      out.tangents.push_back(d);
      out.weights.push_back(g.w[i] * len);
    }
  }
}

std::vector<std::pair<int, BoundaryPiece>> region_boundary(const CellRegion& region) {
  std::vector<std::pair<int, BoundaryPiece>> out;
  for (const auto& part : region.parts) {
    if (part.full) {
      const Rect& r = part.rect;
      const Vec2 c[4] = {r.lo, {r.hi.x(), r.lo.y()}, r.hi, {r.lo.x(), r.hi.y()}};
      for (int k = 0; k < 4; ++k) {
        BoundaryPiece p;
        p.a = c[k];
        p.b = c[(k + 1) % 4];
        const int e = boundary_edge(p);
        if (e >= 0) out.emplace_back(e, p);
      }
      continue;
    }
    for (const auto& cyc : part.cycles)
      for (const auto& p : cyc.pieces) {
        const int e = boundary_edge(p);
        if (e != -2) out.emplace_back(e, p);
      }
  }
  return out;
}

DomainQuadrature build_quadrature(const ThbBasis& basis, const TrimmedDomain& td, const QuadratureOptions& opt) {
  return build_quadrature(basis.hierarchy(), basis.cells(), td, opt);
}

DomainQuadrature build_quadrature(const Hierarchy& h, std::span<const CellId> cells, const TrimmedDomain& td,
                                  const QuadratureOptions& opt) {
  const int p = std::max(h.degree(0), h.degree(1));
  const int qf = opt.full > 0 ? opt.full : p + 1;
  const int qc = opt.cut > 0 ? opt.cut : p + 2;
  const int qb = opt.boundary > 0 ? opt.boundary : p + 2;
  DomainQuadrature dq;
  dq.cells.resize(cells.size());
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const CellId& c = cells[ci];
    const Rect r = h.cell_rect(c);
    CellRegion full_region;
    const CellRegion* region = &full_region;
    if (td.trimmed()) {
      region = &td.region(h, c);
    } else {
      full_region.parts.push_back({r, true, {}});
      full_region.area = r.area();
    }
    if (region->cls == CellClass::Interior)
      dq.cells[ci] = full_cell_rule(r, qf);
    else
      dq.cells[ci] = cut_cell_rule(td, *region, qc);
    for (const auto& [edge, piece] : region_boundary(*region)) {
      BoundaryQuadrature bq;
      bq.cell = static_cast<int>(ci);
      bq.edge = edge;
      bq.loop = piece.loop;
      boundary_rule(td, piece, qb, bq);
      dq.boundary.push_back(std::move(bq));
    }
  }
  return dq;
}

void write_quadrature_csv(const DomainQuadrature& dq, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f.precision(17);
  f << "x,y,w,cell\n";
  for (std::size_t c = 0; c < dq.cells.size(); ++c)
    for (std::size_t k = 0; k < dq.cells[c].points.size(); ++k)
      f << dq.cells[c].points[k].x() << ',' << dq.cells[c].points[k].y() << ',' << dq.cells[c].weights[k] << ',' << c
        << '\n';
}

}  // namespace trimiga
