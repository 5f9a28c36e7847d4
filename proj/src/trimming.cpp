#include "trimiga/trimming.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

namespace trimiga {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct Sample {
  double t;
  Vec2 x;
};

/// Recursive subdivision of [a,b] that keeps only parameter intervals whose (padded) sample box
/// meets `box`. Leaves are reported as consecutive sample pairs.
void scan_interval(const TrimCurve& c, double a, double b, const Rect& box, double leaf, int depth,
                   const std::function<void(const Sample&, const Sample&)>& emit) {
  constexpr int n = 8;
  std::array<Sample, n + 1> s;
  for (int k = 0; k <= n; ++k) {
    const double t = k == n ? b : a + (b - a) * k / n;
    s[k] = {t, c.point(t)};
  }
  Vec2 lo = s[0].x, hi = s[0].x;
  double chord = 0.0;
  for (int k = 1; k <= n; ++k) {
    lo = lo.cwiseMin(s[k].x);
    hi = hi.cwiseMax(s[k].x);
    chord = std::max(chord, (s[k].x - s[k - 1].x).norm());
  }
  // a degree-1 piece is its own sample hull; curved pieces may bulge by up to a chord
  const double pad = c.knots().degree() == 1 ? 1e-12 : chord + 1e-12;
  if (hi.x() + pad < box.lo.x() || lo.x() - pad > box.hi.x() || hi.y() + pad < box.lo.y() ||
      lo.y() - pad > box.hi.y()) {
    return;
  }
  if (chord <= leaf || depth >= 40) {
    for (int k = 0; k < n; ++k) emit(s[k], s[k + 1]);
    return;
  }
  for (int k = 0; k < n; ++k) scan_interval(c, s[k].t, s[k + 1].t, box, leaf, depth + 1, emit);
}

void scan_curve(const TrimCurve& c, const Rect& box, double leaf,
                const std::function<void(const Sample&, const Sample&)>& emit) {
  const auto& kv = c.knots();
  const auto br = kv.breakpoints();
  for (std::size_t k = 0; k + 1 < br.size(); ++k) scan_interval(c, br[k], br[k + 1], box, leaf, 0, emit);
}

/// Illinois regula falsi for a sign change of f on [a,b].
double illinois(const std::function<double(double)>& f, double a, double b, double fa, double fb) {
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  int side = 0;
  for (int it = 0; it < 200; ++it) {
    const double t = (a * fb - b * fa) / (fb - fa);
    const double ft = f(t);
    if (ft == 0.0 || std::abs(b - a) < 1e-15 * std::max(1.0, std::abs(a))) return t;
    if ((ft > 0) == (fb > 0)) {
      b = t;
      fb = ft;
      if (side == -1) fa *= 0.5;
      side = -1;
    } else {
      a = t;
      fa = ft;
      if (side == 1) fb *= 0.5;
      side = 1;
    }
  }
  return 0.5 * (a + b);
}

/// Crossings of coordinate `axis` of the curve with value `level` on a leaf pair, half-open rule
/// (g <= 0 < g' or g > 0 >= g'), splitting at an interior extremum of g first.
template <class Fn>
void leaf_crossings(const TrimCurve& c, int axis, double level, const Sample& sa, const Sample& sb, Fn&& found) {
  auto g = [&](double t) { return c.point(t)[axis] - level; };
  auto dg = [&](double t) { return c.eval(t, 1).d1[axis]; };
  auto handle = [&](double ta, double ga, double tb, double gb) {
    const bool up = ga <= 0.0 && gb > 0.0;
    const bool down = ga > 0.0 && gb <= 0.0;
    if (!up && !down) return;
    const double t = illinois(g, ta, tb, ga, gb);
    found(t, up ? 1 : -1);
  };
  const double ga = sa.x[axis] - level, gb = sb.x[axis] - level;
  const double lo = std::min(ga, gb), hi = std::max(ga, gb);
  const double span = std::abs(gb - ga) + (sb.x - sa.x).norm();
  // extremum only matters if it can reach the level
  if (lo > span || hi < -span) return;
  const double da = dg(sa.t), db = dg(sb.t);
  if (da * db < 0.0) {
    const double tm = illinois(dg, sa.t, sb.t, da, db);
    if (tm > sa.t && tm < sb.t) {
      const double gm = g(tm);
      handle(sa.t, ga, tm, gm);
      handle(tm, gm, sb.t, gb);
      return;
    }
  }
  handle(sa.t, ga, sb.t, gb);
}

/// Perimeter coordinate in [0,4): bottom, right, top, left, counter-clockwise.
double perimeter_coord(const Rect& r, const Vec2& p) {
  const double d[4] = {std::abs(p.y() - r.lo.y()), std::abs(p.x() - r.hi.x()), std::abs(p.y() - r.hi.y()),
                       std::abs(p.x() - r.lo.x())};
  const int e = static_cast<int>(std::min_element(d, d + 4) - d);
  double u = 0.0;
  switch (e) {
    case 0: u = (p.x() - r.lo.x()) / r.width(); break;
    case 1: u = 1.0 + (p.y() - r.lo.y()) / r.height(); break;
    case 2: u = 2.0 + (r.hi.x() - p.x()) / r.width(); break;
    default: u = 3.0 + (r.hi.y() - p.y()) / r.height(); break;
  }
  u = std::clamp(u, 0.0, 4.0);
  return u >= 4.0 ? 0.0 : u;
}

Vec2 corner(const Rect& r, int k) {
  switch (k % 4) {
    case 0: return r.lo;
    case 1: return {r.hi.x(), r.lo.y()};
    case 2: return r.hi;
    default: return {r.lo.x(), r.hi.y()};
  }
}

bool strictly_inside(const Rect& r, const Vec2& p) {
  const double tol = 1e-13 * std::max(r.width(), r.height());
  return p.x() > r.lo.x() + tol && p.x() < r.hi.x() - tol && p.y() > r.lo.y() + tol && p.y() < r.hi.y() - tol;
}

/// Loop parameter s in [0, n): curve floor(s), local fraction s - floor(s).
struct LoopParam {
  const TrimLoop& loop;
  int n() const { return static_cast<int>(loop.curves.size()); }
  double s_of(int k, double t) const {
    const auto& c = loop.curves[k];
    return k + (t - c.t0()) / (c.t1() - c.t0());
  }
  std::pair<int, double> at(double s) const {
    double f = std::fmod(s, static_cast<double>(n()));
    if (f < 0) f += n();
    int k = std::min(static_cast<int>(std::floor(f)), n() - 1);
    const auto& c = loop.curves[k];
    return {k, c.t0() + (f - k) * (c.t1() - c.t0())};
  }
  Vec2 point(double s) const {
    auto [k, t] = at(s);
    return loop.curves[k].point(t);
  }
};

/// Oriented curve pieces [sa, sb] (sb > sa, loop parameter) split at curve joints.
void append_curve_pieces(const TrimLoop& loop, int li, double sa, double sb, std::vector<BoundaryPiece>& out) {
  LoopParam lp{loop};
  const int n = lp.n();
  double s = sa;
  while (s < sb - 1e-15) {
    const double next = std::min(sb, std::floor(s + 1e-12) + 1.0);
    const int k = ((static_cast<int>(std::floor(s + 1e-12)) % n) + n) % n;
    const auto& c = loop.curves[k];
    const double base = std::floor(s + 1e-12);
    const double t0 = c.t0() + std::clamp(s - base, 0.0, 1.0) * (c.t1() - c.t0());
    const double t1 = c.t0() + std::clamp(next - base, 0.0, 1.0) * (c.t1() - c.t0());
    if (t1 > t0) {
      BoundaryPiece bp;
      bp.is_curve = true;
      bp.loop = li;
      bp.curve = k;
      bp.t0 = t0;
      bp.t1 = t1;
      bp.a = c.point(t0);
      bp.b = c.point(t1);
      out.push_back(bp);
    }
    s = next;
  }
}

struct InsidePiece {
  int loop;
  double sa, sb;
  Vec2 entry, exit;
  double u_in, u_out;
};

double curve_green(const TrimCurve& c, double t0, double t1) {
  const auto& g = gauss_legendre(16);
  const auto br = c.knots().breakpoints();
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < br.size(); ++k) {
    const double a = std::max(t0, br[k]), b = std::min(t1, br[k + 1]);
    if (b <= a) continue;
    for (std::size_t q = 0; q < g.x.size(); ++q) {
      const auto p = c.eval(a + (b - a) * g.x[q], 1);
      sum += g.w[q] * (b - a) * cross2(p.x, p.d1);
    }
  }
  return 0.5 * sum;
}

}  // namespace

const char* to_string(CellClass c) {
  switch (c) {
    case CellClass::Interior: return "interior";
    case CellClass::Exterior: return "exterior";
    default: return "cut";
  }
}

TrimCurve::TrimCurve(KnotVector kv, std::vector<Vec2> control_points, std::vector<double> weights)
    : kv_(std::move(kv)), cps_(std::move(control_points)), weights_(std::move(weights)) {
  if (static_cast<int>(cps_.size()) != kv_.num_basis()) {
    throw Error("TrimCurve: control point count does not match the knot vector");
  }
  if (!weights_.empty()) {
    if (weights_.size() != cps_.size()) throw Error("TrimCurve: weight count mismatch");
    for (double w : weights_)
      if (!(w > 0.0)) throw Error("TrimCurve: weights must be strictly positive");
  }
}

TrimCurve TrimCurve::line(const Vec2& a, const Vec2& b) {
  return TrimCurve(KnotVector(1, {0, 0, 1, 1}), {a, b});
}

TrimCurve TrimCurve::circle(const Vec2& center, double radius, bool ccw, double start, double sweep) {
  if (!(radius > 0.0)) throw Error("TrimCurve::circle: radius must be positive");
  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(sweep) / (0.5 * kPi) - 1e-12)));
  const double d = (ccw ? 1.0 : -1.0) * std::abs(sweep) / n;
  std::vector<double> knots = {0, 0, 0};
  std::vector<Vec2> cps;
  std::vector<double> ws;
  const double w = std::cos(0.5 * d);
  auto on = [&](double a) { return Vec2(center + radius * Vec2(std::cos(a), std::sin(a))); };
  for (int k = 0; k < n; ++k) {
    const double a0 = start + k * d;
    if (k == 0) {
      cps.push_back(on(a0));
      ws.push_back(1.0);
    }
    cps.push_back(center + radius / w * Vec2(std::cos(a0 + 0.5 * d), std::sin(a0 + 0.5 * d)));
    ws.push_back(w);
    cps.push_back(on(a0 + d));
    ws.push_back(1.0);
    if (k + 1 < n) {
      knots.push_back(k + 1.0);
      knots.push_back(k + 1.0);
    }
  }
  knots.insert(knots.end(), 3, static_cast<double>(n));
  if (std::abs(std::abs(sweep) - 2.0 * kPi) < 1e-12) cps.back() = cps.front();
  return TrimCurve(KnotVector(2, knots), cps, ws);
}

CurvePoint TrimCurve::eval(double t, int order) const {
  const int p = kv_.degree();
  const BasisDers b = kv_.eval(t, std::min(order, p));
  auto d = [&](int k, int r) { return k <= b.order ? b(k, r) : 0.0; };
  Vec2 A[3] = {Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
  double W[3] = {0, 0, 0};
  const bool rat = !weights_.empty();
  for (int r = 0; r <= p; ++r) {
    const int i = b.first_function() + r;
    const double w = rat ? weights_[i] : 1.0;
    for (int k = 0; k <= std::min(order, 2); ++k) {
      A[k] += d(k, r) * w * cps_[i];
      W[k] += d(k, r) * w;
    }
  }
  CurvePoint cp;
  cp.x = A[0] / W[0];
  if (order >= 1) cp.d1 = (A[1] - W[1] * cp.x) / W[0];
  if (order >= 2) cp.d2 = (A[2] - 2.0 * W[1] * cp.d1 - W[2] * cp.x) / W[0];
  return cp;
}

double TrimLoop::signed_area() const {
  double a = 0.0;
  for (const auto& c : curves) a += curve_green(c, c.t0(), c.t1());
  return a;
}

std::vector<CurveCrossing> curve_cell_intersections(const TrimCurve& c, const Rect& cell) {
  std::vector<CurveCrossing> out;
  const double size = std::max(cell.width(), cell.height());
  const double tol = 1e-12 * std::max(1.0, size);
  Rect box{cell.lo - Vec2::Constant(tol), cell.hi + Vec2::Constant(tol)};
  const double leaf = 0.125 * std::min(cell.width(), cell.height());
  // edges: axis of the constant coordinate, its value, range of the other coordinate
  const struct {
    int axis;
    double level, lo, hi;
  } edges[4] = {{1, cell.lo.y(), cell.lo.x(), cell.hi.x()},
                {0, cell.hi.x(), cell.lo.y(), cell.hi.y()},
                {1, cell.hi.y(), cell.lo.x(), cell.hi.x()},
                {0, cell.lo.x(), cell.lo.y(), cell.hi.y()}};
  scan_curve(c, box, leaf, [&](const Sample& a, const Sample& b) {
    for (int e = 0; e < 4; ++e) {
      const auto& ed = edges[e];
      leaf_crossings(c, ed.axis, ed.level, a, b, [&](double t, int) {
        Vec2 p = c.point(t);
        const int other = 1 - ed.axis;
        if (p[other] < ed.lo - tol || p[other] > ed.hi + tol) return;
        p[ed.axis] = ed.level;
        p[other] = std::clamp(p[other], ed.lo, ed.hi);
        for (int k = 0; k < 4; ++k) {
          if ((p - corner(cell, k)).norm() <= TrimmedDomain::kSnap) p = corner(cell, k);
        }
        out.push_back({t, e, p});
      });
    }
  });
  std::sort(out.begin(), out.end(), [](const CurveCrossing& a, const CurveCrossing& b) { return a.t < b.t; });
  std::vector<CurveCrossing> merged;
  for (const auto& x : out) {
    if (!merged.empty() && std::abs(x.t - merged.back().t) < 1e-12 * std::max(1.0, std::abs(x.t)) &&
        (x.point - merged.back().point).norm() < 1e-10) {
      continue;
    }
    merged.push_back(x);
  }
  return merged;
}

TrimmedDomain::TrimmedDomain(std::vector<TrimLoop> loops) : loops_(std::move(loops)) {
  bool any_ccw = false;
  for (std::size_t l = 0; l < loops_.size(); ++l) {
    const auto& lp = loops_[l];
    if (lp.curves.empty()) throw Error("TrimmedDomain: empty trimming loop");
    for (std::size_t k = 0; k < lp.curves.size(); ++k) {
      const Vec2 e = lp.curves[k].end();
      const Vec2 s = lp.curves[(k + 1) % lp.curves.size()].start();
      if ((e - s).norm() > 1e-12) {
        std::ostringstream os;
        os << "TrimmedDomain: loop " << l << " is not closed at curve " << k;
        throw Error(os.str());
      }
    }
    const double a = lp.signed_area();
    if (std::abs(a) < 1e-14) throw Error("TrimmedDomain: degenerate loop with zero area");
    any_ccw = any_ccw || a > 0.0;
    Vec2 lo = Vec2::Constant(kInf), hi = Vec2::Constant(-kInf);
    for (const auto& c : lp.curves) {
      for (const auto& p : c.control_points()) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
    }
    loop_boxes_.push_back({lo, hi});
  }
  base_ = any_ccw ? 0 : 1;
  // loops must be pairwise disjoint: no crossings between sampled polylines
  std::vector<std::vector<Vec2>> poly(loops_.size());
  for (std::size_t l = 0; l < loops_.size(); ++l) {
    for (const auto& c : loops_[l].curves) {
      const auto br = c.knots().breakpoints();
      for (std::size_t k = 0; k + 1 < br.size(); ++k)
        for (int q = 0; q < 32; ++q) poly[l].push_back(c.point(br[k] + (br[k + 1] - br[k]) * q / 32.0));
    }
    poly[l].push_back(poly[l].front());
  }
  auto seg_hit = [](const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const double d1 = cross2(b - a, c - a), d2 = cross2(b - a, d - a);
    const double d3 = cross2(d - c, a - c), d4 = cross2(d - c, b - c);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
  };
  for (std::size_t l = 0; l < loops_.size(); ++l) {
    for (std::size_t m = l + 1; m < loops_.size(); ++m) {
      const auto& bl = loop_boxes_[l];
      const auto& bm = loop_boxes_[m];
      if ((bl[1].array() < bm[0].array()).any() || (bm[1].array() < bl[0].array()).any()) continue;
      for (std::size_t i = 0; i + 1 < poly[l].size(); ++i)
        for (std::size_t j = 0; j + 1 < poly[m].size(); ++j)
          if (seg_hit(poly[l][i], poly[l][i + 1], poly[m][j], poly[m][j + 1]))
            throw Error("TrimmedDomain: trimming loops overlap");
    }
  }
}

double TrimmedDomain::winding(const Vec2& p) const {
  double w = 0.0;
  Rect ray{p, Vec2(kInf, p.y())};
  for (std::size_t l = 0; l < loops_.size(); ++l) {
    const auto& bx = loop_boxes_[l];
    if (bx[1].x() < p.x() || bx[0].y() > p.y() || bx[1].y() < p.y()) continue;
    for (const auto& c : loops_[l].curves) {
      scan_curve(c, ray, 1e-3, [&](const Sample& a, const Sample& b) {
        leaf_crossings(c, 1, p.y(), a, b, [&](double t, int dir) {
          if (c.point(t).x() > p.x()) w += dir;
        });
      });
    }
  }
  return w;
}

bool TrimmedDomain::inside(const Vec2& p) const {
  if (loops_.empty()) return true;
  return base_ + winding(p) > 0.5;
}

std::optional<RegionPart> TrimmedDomain::resolve(const Rect& r) const {
  RegionPart part;
  part.rect = r;
  std::vector<InsidePiece> pieces;
  for (std::size_t l = 0; l < loops_.size(); ++l) {
    const auto& bx = loop_boxes_[l];
    if (bx[1].x() < r.lo.x() || bx[0].x() > r.hi.x() || bx[1].y() < r.lo.y() || bx[0].y() > r.hi.y()) continue;
    const auto& loop = loops_[l];
    LoopParam lp{loop};
    std::vector<std::pair<double, Vec2>> xs;
    for (int k = 0; k < lp.n(); ++k) {
      for (const auto& x : curve_cell_intersections(loop.curves[k], r)) xs.emplace_back(lp.s_of(k, x.t), x.point);
    }
    std::sort(xs.begin(), xs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    {
      std::vector<std::pair<double, Vec2>> m;
      for (const auto& x : xs) {
        if (!m.empty() && std::abs(x.first - m.back().first) < 1e-12 && (x.second - m.back().second).norm() < 1e-10)
          continue;
        m.push_back(x);
      }
      if (m.size() > 1 && std::abs(m.front().first + lp.n() - m.back().first) < 1e-12 &&
          (m.front().second - m.back().second).norm() < 1e-10) {
        m.pop_back();
      }
      xs = std::move(m);
    }
    if (xs.empty()) {
      if (strictly_inside(r, loop.curves.front().start())) return std::nullopt;  // loop inside the cell
      continue;
    }
    const int m = static_cast<int>(xs.size());
    std::vector<char> in(m);
    for (int i = 0; i < m; ++i) {
      const double sa = xs[i].first;
      const double sb = i + 1 < m ? xs[i + 1].first : xs[0].first + lp.n();
      // pieces between consecutive crossings are inside or outside as a whole, but may touch the
      // boundary tangentially, so several samples are tried
      in[i] = 0;
      if (sb - sa <= 1e-14) continue;
      for (double f : {0.5, 0.25, 0.75, 0.125, 0.875, 0.375, 0.625}) {
        if (strictly_inside(r, lp.point(sa + f * (sb - sa)))) {
          in[i] = 1;
          break;
        }
      }
    }
    // merge runs of inside pieces (spurious crossings from boundary touches)
    int first = 0;
    while (first < m && in[first] && in[(first + m - 1) % m]) {
      if (++first == m) break;
    }
    if (first == m) {
      // the whole loop is inside apart from touch points
      pieces.push_back({static_cast<int>(l), xs[0].first, xs[0].first + lp.n(), xs[0].second, xs[0].second, 0, 0});
      continue;
    }
    for (int c = 0; c < m;) {
      const int i = (first + c) % m;
      if (!in[i]) {
        ++c;
        continue;
      }
      int j = c;
      while (j + 1 < m && in[(first + j + 1) % m]) ++j;
      const int last = (first + j) % m;
      const double sa = xs[i].first;
      double sb = last + 1 < m ? xs[last + 1].first : xs[0].first + lp.n();
      if (sb < sa) sb += lp.n();
      const Vec2 exit = last + 1 < m ? xs[last + 1].second : xs[0].second;
      pieces.push_back({static_cast<int>(l), sa, sb, xs[i].second, exit, 0, 0});
      c = j + 1;
    }
  }
  if (pieces.empty()) {
    part.full = inside(r.center());
    return part;
  }
  for (auto& p : pieces) {
    p.u_in = perimeter_coord(r, p.entry);
    p.u_out = perimeter_coord(r, p.exit);
  }
  const int np = static_cast<int>(pieces.size());
  std::vector<char> used(np, 0);
  for (int s = 0; s < np; ++s) {
    if (used[s]) continue;
    MaterialCycle cyc;
    int cur = s;
    for (int guard = 0; guard <= np; ++guard) {
      used[cur] = 1;
      const auto& pc = pieces[cur];
      append_curve_pieces(loops_[pc.loop], pc.loop, pc.sa, pc.sb, cyc.pieces);
      // nearest endpoint counter-clockwise from the exit; it must be an entry
      const double ue = pc.u_out;
      double best = kInf;
      int next = -1;
      bool exit_first = false;
      for (int k = 0; k < np; ++k) {
        double d = std::fmod(pieces[k].u_in - ue + 8.0, 4.0);
        if (d > 4.0 - 1e-12) d = 0.0;
        if (d < best - 1e-12) {
          best = d;
          next = k;
          exit_first = false;
        }
      }
      for (int k = 0; k < np; ++k) {
        if (k == cur) continue;
        double d = std::fmod(pieces[k].u_out - ue + 8.0, 4.0);
        if (d > 4.0 - 1e-12) d = 0.0;
        if (d < best - 1e-12) exit_first = true;
      }
      if (exit_first || next < 0) return std::nullopt;
      // boundary walk through the corners between exit and next entry
      Vec2 from = pc.exit;
      for (int k = 1; k <= 4; ++k) {
        const double cu = std::floor(ue) + k;  // corner perimeter values after ue
        const double dc = cu - ue;
        if (dc <= 1e-12 || dc >= best - 1e-12) continue;
        const Vec2 cp = corner(r, static_cast<int>(cu));
        if ((cp - from).norm() > 0.0) cyc.pieces.push_back({false, from, cp});
        from = cp;
      }
      if ((pieces[next].entry - from).norm() > 0.0) cyc.pieces.push_back({false, from, pieces[next].entry});
      cur = next;
      if (cur == s) break;
      if (used[cur]) return std::nullopt;
    }
    if (cur != s) return std::nullopt;
    part.cycles.push_back(std::move(cyc));
  }
  const double a = region_area(part, loops_);
  if (a < -1e-14 * r.area() || a > r.area() * (1.0 + 1e-10)) return std::nullopt;
  return part;
}

void TrimmedDomain::analyze_rec(const Rect& r, int depth, CellRegion& out) const {
  if (auto part = resolve(r)) {
    if (part->full || !part->cycles.empty()) out.parts.push_back(std::move(*part));
    return;
  }
  if (depth >= 6) {
    std::ostringstream os;
    os << "TrimmedDomain: unresolvable trimming topology in cell [" << r.lo.x() << "," << r.hi.x() << "]x["
       << r.lo.y() << "," << r.hi.y() << "]";
    throw Error(os.str());
  }
  const Vec2 m = r.center();
  analyze_rec({r.lo, m}, depth + 1, out);
  analyze_rec({{m.x(), r.lo.y()}, {r.hi.x(), m.y()}}, depth + 1, out);
  analyze_rec({{r.lo.x(), m.y()}, {m.x(), r.hi.y()}}, depth + 1, out);
  analyze_rec({m, r.hi}, depth + 1, out);
}

CellRegion TrimmedDomain::analyze(const Rect& r) const {
  CellRegion out;
  if (loops_.empty()) {
    out.parts.push_back({r, true, {}});
    out.area = r.area();
    return out;
  }
  analyze_rec(r, 0, out);
  bool any_cut = false;
  for (const auto& p : out.parts) {
    out.area += region_area(p, loops_);
    any_cut = any_cut || !p.full;
  }
  out.fraction = out.area / r.area();
  if (!any_cut) {
    out.cls = out.parts.empty() ? CellClass::Exterior : (out.fraction > 1.0 - 1e-12 ? CellClass::Interior : CellClass::Cut);
  } else {
    out.cls = CellClass::Cut;
  }
  if (out.fraction < kMinFraction) {
    out.cls = CellClass::Exterior;
    out.parts.clear();
  }
  return out;
}

const CellRegion& TrimmedDomain::region(const Hierarchy& h, const CellId& c) const {
  const Rect r = h.cell_rect(c);
  const std::array<double, 4> key{r.lo.x(), r.lo.y(), r.hi.x(), r.hi.y()};
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  return cache_.emplace(key, analyze(r)).first->second;
}

double region_area(const RegionPart& part, std::span<const TrimLoop> loops) {
  if (part.full) return part.rect.area();
  double a = 0.0;
  for (const auto& cyc : part.cycles) {
    for (const auto& p : cyc.pieces) {
      a += p.is_curve ? curve_green(loops[p.loop].curves[p.curve], p.t0, p.t1) : 0.5 * cross2(p.a, p.b);
    }
  }
  return a;
}

std::vector<CellId> ghost_cell_closure(const Hierarchy& h, const TrimmedDomain& td, std::span<const CellId> marked) {
  std::set<CellId> out(marked.begin(), marked.end());
  if (!td.trimmed()) return {out.begin(), out.end()};
  for (const auto& c : marked) {
    // only trimmed cells spawn ghosts; ghosts themselves do not
    if (td.classify(h, c) != CellClass::Cut) continue;
    const auto fr = h.functions_on_cell(c.level, c.i, c.j);
    const auto& s = h.space(c.level);
    const int i0 = s.dir(0).first_cell(fr[0]), i1 = s.dir(0).last_cell(fr[1]);
    const int j0 = s.dir(1).first_cell(fr[2]), j1 = s.dir(1).last_cell(fr[3]);
    for (const auto& g : h.active_cells_in(c.level, i0, i1, j0, j1)) {
      if (td.classify(h, g) == CellClass::Exterior) out.insert(g);
    }
  }
  return {out.begin(), out.end()};
}

ThbBasis trimmed_basis(const Hierarchy& h, const TrimmedDomain& td, BasisKind kind) {
  if (!td.trimmed()) return ThbBasis(h, kind);
  return ThbBasis(h, kind, [&](const CellId& c) { return td.classify(h, c) != CellClass::Exterior; });
}

}  // namespace trimiga
