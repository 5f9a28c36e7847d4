#include "trimiga/spline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace trimiga {

KnotVector::KnotVector(int degree, std::vector<double> knots)
    : degree_(degree), knots_(std::move(knots)) {
  if (degree_ < 0 || degree_ > kMaxDegree) {
    throw Error("KnotVector: degree out of range");
  }
  const int m = static_cast<int>(knots_.size());
  if (m - degree_ - 1 < degree_ + 1) {
    throw Error("KnotVector: too few knots for the degree");
  }
  for (int i = 1; i < m; ++i) {
    if (knots_[i] < knots_[i - 1]) throw Error("KnotVector: knots must be non-decreasing");
  }
  for (int i = 0; i <= degree_; ++i) {
    if (knots_[i] != knots_[0] || knots_[m - 1 - i] != knots_[m - 1]) {
      throw Error("KnotVector: knot vector must be open");
    }
  }
  if (!(knots_.back() > knots_.front())) throw Error("KnotVector: empty parameter range");
  int run = 1;
  for (int i = 1; i < m; ++i) {
    run = knots_[i] == knots_[i - 1] ? run + 1 : 1;
    if (run > degree_ + 1) throw Error("KnotVector: knot multiplicity exceeds degree+1");
  }
  build_index();
}

KnotVector KnotVector::uniform(int degree, int spans, double a, double b) {
  if (spans < 1) throw Error("KnotVector::uniform: need at least one span");
  std::vector<double> k(degree + 1, a);
  for (int i = 1; i < spans; ++i) k.push_back(a + (b - a) * i / spans);
  k.insert(k.end(), degree + 1, b);
  return {degree, std::move(k)};
}

void KnotVector::build_index() {
  cell_span_.clear();
  const int m = static_cast<int>(knots_.size());
  std::vector<int> cell_at_span(m, -1);
  for (int s = degree_; s < m - degree_ - 1; ++s) {
    if (knots_[s + 1] > knots_[s]) {
      cell_at_span[s] = static_cast<int>(cell_span_.size());
      cell_span_.push_back(s);
    }
  }
  const int n = num_basis();
  fn_first_cell_.assign(n, 0);
  fn_last_cell_.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    int lo = -1, hi = -1;
    for (int s = i; s <= i + degree_; ++s) {
      if (s < m && cell_at_span[s] >= 0) {
        if (lo < 0) lo = cell_at_span[s];
        hi = cell_at_span[s];
      }
    }
    fn_first_cell_[i] = lo;
    fn_last_cell_[i] = hi;
  }
}

std::vector<double> KnotVector::breakpoints() const {
  std::vector<double> b;
  for (double k : knots_) {
    if (b.empty() || k != b.back()) b.push_back(k);
  }
  return b;
}

int KnotVector::find_span(double t) const {
  if (t < front() || t > back() || std::isnan(t)) {
    std::ostringstream os;
    os << "find_span: parameter " << t << " outside [" << front() << ", " << back() << "]";
    throw std::domain_error(os.str());
  }
  const int n = num_basis();
  if (t >= knots_[n]) return cell_span_.back();
  // last index with knots[i] <= t
  auto it = std::upper_bound(knots_.begin() + degree_, knots_.begin() + n + 1, t);
  return static_cast<int>(it - knots_.begin()) - 1;
}

int KnotVector::cell_of(double t) const {
  const int s = find_span(t);
  auto it = std::lower_bound(cell_span_.begin(), cell_span_.end(), s);
  return static_cast<int>(it - cell_span_.begin());
}

BasisDers KnotVector::eval(double t, int order) const { return eval_in_span(find_span(t), t, order); }

BasisDers KnotVector::eval_in_span(int span, double t, int order) const {
  const int p = degree_;
  if (order < 0 || order > kMaxDerivative) throw Error("eval: derivative order out of range");
  BasisDers out;
  out.span = span;
  out.degree = p;
  out.order = order;
  const auto& U = knots_;
  // Piegl & Tiller, algorithm A2.3
  std::array<std::array<double, kMaxDegree + 1>, kMaxDegree + 1> ndu{};
  std::array<double, kMaxDegree + 1> left{}, right{};
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - U[span + 1 - j];
    right[j] = U[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  for (int j = 0; j <= p; ++j) out(0, j) = ndu[j][p];
  std::array<std::array<double, kMaxDegree + 1>, 2> a{};
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= order; ++k) {
      double d = 0.0;
      const int rk = r - k, pk = p - k;
      if (k > p) {
        out(k, r) = 0.0;
        continue;
      }
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      out(k, r) = d;
      std::swap(s1, s2);
    }
  }
  double fac = p;
  for (int k = 1; k <= order; ++k) {
    for (int j = 0; j <= p; ++j) out(k, j) *= (k > p ? 0.0 : fac);
    fac *= (p - k);
  }
  return out;
}

KnotVector KnotVector::normalized() const {
  const double a = front(), b = back();
  std::vector<double> k(knots_.size());
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = (knots_[i] - a) / (b - a);
  k.front() = 0.0;
  k.back() = 1.0;
  for (int i = 0; i <= degree_; ++i) {
    k[i] = 0.0;
    k[k.size() - 1 - i] = 1.0;
  }
  return {degree_, std::move(k)};
}

KnotVector KnotVector::dyadic_refined() const {
  std::vector<double> k;
  k.reserve(knots_.size() + cell_span_.size());
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    k.push_back(knots_[i]);
    if (i + 1 < knots_.size() && knots_[i + 1] > knots_[i]) {
      k.push_back(0.5 * (knots_[i] + knots_[i + 1]));
    }
  }
  return {degree_, std::move(k)};
}

Eigen::SparseMatrix<double, Eigen::RowMajor> two_scale_matrix(const KnotVector& coarse,
                                                              const KnotVector& fine) {
  const int p = coarse.degree();
  if (fine.degree() != p) throw Error("two_scale_matrix: degrees differ");
  const auto& t = coarse.knots();
  const auto& tau = fine.knots();
  if (t.front() != tau.front() || t.back() != tau.back()) {
    throw Error("two_scale_matrix: parameter ranges differ");
  }
  // every coarse knot must appear in the fine vector with at least the same multiplicity
  {
    std::size_t j = 0;
    for (double k : t) {
      while (j < tau.size() && tau[j] < k) ++j;
      if (j == tau.size() || tau[j] != k) throw Error("two_scale_matrix: knot vectors not nested");
      ++j;
    }
  }
  const int nc = coarse.num_basis();
  const int nf = fine.num_basis();
  std::vector<Eigen::Triplet<double>> trip;
  // Oslo algorithm: discrete B-splines alpha_{i,p}(j)
  std::array<double, kMaxDegree + 2> alpha{};
  auto ratio = [](double num, double den) { return den == 0.0 ? 0.0 : num / den; };
  for (int i = 0; i < nc; ++i) {
    const double lo = t[i], hi = t[i + p + 1];
    for (int j = 0; j < nf; ++j) {
      if (tau[j] < lo || tau[j + p + 1] > hi) continue;
      for (int r = 0; r <= p; ++r) {
        alpha[r] = (t[i + r] <= tau[j] && tau[j] < t[i + r + 1]) ? 1.0 : 0.0;
      }
      for (int k = 1; k <= p; ++k) {
        for (int r = 0; r <= p - k; ++r) {
          const int ii = i + r;
          alpha[r] = ratio(tau[j + k] - t[ii], t[ii + k] - t[ii]) * alpha[r] +
                     ratio(t[ii + k + 1] - tau[j + k], t[ii + k + 1] - t[ii + 1]) * alpha[r + 1];
        }
      }
      if (alpha[0] != 0.0) trip.emplace_back(i, j, alpha[0]);
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> c(nc, nf);
  c.setFromTriplets(trip.begin(), trip.end());
  return c;
}

GeometryMap::GeometryMap(TensorSplineSpace space, std::vector<Vec3> control_points,
                         std::vector<double> weights, int dimension)
    : space_(TensorSplineSpace(space.dir(0).normalized(), space.dir(1).normalized())),
      cps_(std::move(control_points)),
      weights_(std::move(weights)),
      dim_(dimension) {
  if (dim_ != 2 && dim_ != 3) throw Error("GeometryMap: dimension must be 2 or 3");
  if (static_cast<int>(cps_.size()) != space_.dimension()) {
    throw Error("GeometryMap: control point count does not match the spline space");
  }
  if (!weights_.empty()) {
    if (weights_.size() != cps_.size()) throw Error("GeometryMap: weight count mismatch");
    for (double w : weights_) {
      if (!(w > 0.0)) throw Error("GeometryMap: weights must be strictly positive");
    }
  }
  if (dim_ == 2) {
    for (auto& c : cps_) c.z() = 0.0;
  }
}

GeometryMap GeometryMap::rectangle(double x0, double x1, double y0, double y1) {
  TensorSplineSpace s(KnotVector::uniform(1, 1), KnotVector::uniform(1, 1));
  std::vector<Vec3> cps = {{x0, y0, 0}, {x1, y0, 0}, {x0, y1, 0}, {x1, y1, 0}};
  return {s, std::move(cps), {}, 2};
}

GeometryMap GeometryMap::cylinder_roof(double radius, double length, double half_angle) {
  TensorSplineSpace s(KnotVector::uniform(2, 1), KnotVector::uniform(1, 1));
  const double c = std::cos(half_angle), sn = std::sin(half_angle);
  std::vector<Vec3> cps;
  for (double y : {0.0, length}) {
    cps.emplace_back(-radius * sn, y, radius * c);
    cps.emplace_back(0.0, y, radius / c);
    cps.emplace_back(radius * sn, y, radius * c);
  }
  return {s, std::move(cps), {1.0, c, 1.0, 1.0, c, 1.0}, 3};
}

GeometryMap GeometryMap::flat_square(double x0, double x1, double y0, double y1) {
  GeometryMap g = rectangle(x0, x1, y0, y1);
  g.dim_ = 3;
  return g;
}

GeometryPoint GeometryMap::eval(const Vec2& xi, int order) const {
  const auto& ku = space_.dir(0);
  const auto& kv = space_.dir(1);
  const BasisDers bu = ku.eval(xi.x(), std::min(order, ku.degree()));
  const BasisDers bv = kv.eval(xi.y(), std::min(order, kv.degree()));
  const int nu = ku.num_basis();
  const int pu = ku.degree(), pv = kv.degree();
  auto du = [&](int k, int r) { return k <= bu.order ? bu(k, r) : 0.0; };
  auto dv = [&](int k, int r) { return k <= bv.order ? bv(k, r) : 0.0; };
  // homogeneous sums: A (weighted point) and W (weight) with derivatives (0,0),(1,0),(0,1),(2,0),(1,1),(0,2)
  std::array<Vec3, 6> A;
  std::array<double, 6> W{};
  for (auto& a : A) a.setZero();
  const bool rat = rational();
  for (int b = 0; b <= pv; ++b) {
    const int jv = bv.first_function() + b;
    for (int a = 0; a <= pu; ++a) {
      const int iu = bu.first_function() + a;
      const int idx = jv * nu + iu;
      const double w = rat ? weights_[idx] : 1.0;
      const Vec3 pw = cps_[idx] * w;
      const std::array<double, 6> n = {du(0, a) * dv(0, b), du(1, a) * dv(0, b), du(0, a) * dv(1, b),
                                       du(2, a) * dv(0, b), du(1, a) * dv(1, b), du(0, a) * dv(2, b)};
      const int terms = order == 0 ? 1 : (order == 1 ? 3 : 6);
      for (int k = 0; k < terms; ++k) {
        A[k] += n[k] * pw;
        W[k] += n[k] * w;
      }
    }
  }
  GeometryPoint g;
  g.x = A[0] / W[0];
  if (order >= 1) {
    g.d1[0] = (A[1] - W[1] * g.x) / W[0];
    g.d1[1] = (A[2] - W[2] * g.x) / W[0];
  }
  if (order >= 2) {
    g.d2[0] = (A[3] - 2.0 * W[1] * g.d1[0] - W[3] * g.x) / W[0];
    g.d2[1] = (A[4] - W[1] * g.d1[1] - W[2] * g.d1[0] - W[4] * g.x) / W[0];
    g.d2[2] = (A[5] - 2.0 * W[2] * g.d1[1] - W[5] * g.x) / W[0];
  }
  return g;
}

namespace {

GaussRule compute_gauss(int n) {
  GaussRule g;
  g.x.resize(n);
  g.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    // Newton on P_n from the Chebyshev-like initial guess
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    g.x[i] = 0.5 * (1.0 - z);
    g.x[n - 1 - i] = 0.5 * (1.0 + z);
    g.w[i] = g.w[n - 1 - i] = 0.5 * w;
  }
  return g;
}

}  // namespace

const GaussRule& gauss_legendre(int n) {
  static const std::vector<GaussRule> table = [] {
    std::vector<GaussRule> t(65);
    for (int k = 1; k <= 64; ++k) t[k] = compute_gauss(k);
    return t;
  }();
  if (n < 1 || n > 64) throw Error("gauss_legendre: point count out of range");
  return table[n];
}

void bernstein_ders(int n, double t, int order, BasisDers& out) {
  if (n < 0 || n > kMaxDegree) throw Error("bernstein_ders: degree out of range");
  out.degree = n;
  out.order = order;
  out.span = n;
  // B_{i,n}^{(k)} via derivatives of lower-degree polynomials
  std::array<std::array<double, kMaxDegree + 2>, kMaxDegree + 1> b{};
  // b[d][i] = B_{i,d}(t)
  b[0][0] = 1.0;
  for (int d = 1; d <= n; ++d) {
    for (int i = 0; i <= d; ++i) {
      const double left = i > 0 ? b[d - 1][i - 1] : 0.0;
      const double right = i < d ? b[d - 1][i] : 0.0;
      b[d][i] = t * left + (1.0 - t) * right;
    }
  }
  for (int k = 0; k <= order; ++k) {
    if (k > n) {
      for (int i = 0; i <= n; ++i) out(k, i) = 0.0;
      continue;
    }
    // k-th derivative: n!/(n-k)! * sum_j (-1)^{k-j} C(k,j) B_{i-j, n-k}
    double fac = 1.0;
    for (int m = 0; m < k; ++m) fac *= (n - m);
    for (int i = 0; i <= n; ++i) {
      double s = 0.0;
      double binom = 1.0;
      for (int j = 0; j <= k; ++j) {
        const int idx = i - j;
        if (idx >= 0 && idx <= n - k) s += (((k - j) % 2) ? -binom : binom) * b[n - k][idx];
        binom = binom * (k - j) / (j + 1);
      }
      out(k, i) = fac * s;
    }
  }
}

}  // namespace trimiga
