#include "trimiga/hierarchy.hpp"

#include <algorithm>
#include <sstream>

#include <set>

namespace trimiga {

namespace {

std::uint64_t key(const CellId& c) { return grid_key(c.i, c.j); }

/// Memoized subdomain tests shared by the extraction of many cells.
class FunctionStatus {
 public:
  explicit FunctionStatus(const Hierarchy& h) : h_(h), memo_(h.num_levels()) {}

  bool in_subdomain(const FunctionId& f) { return status(f) & 1; }
  bool active(const FunctionId& f) { return (status(f) & 3) == 1; }

 private:
  unsigned status(const FunctionId& f) {
    auto& m = memo_[f.level];
    const auto k = grid_key(f.i, f.j);
    if (auto it = m.find(k); it != m.end()) return it->second;
    unsigned s = 0;
    if (h_.support_in_subdomain(f)) {
      s |= 1;
      if (h_.support_refined(f)) s |= 2;
    }
    m.emplace(k, s);
    return s;
  }

  const Hierarchy& h_;
  std::vector<std::unordered_map<std::uint64_t, unsigned>> memo_;
};

CellExtraction extract(const Hierarchy& h, const CellId& cell, BasisKind kind, FunctionStatus& st) {
  const int pu = h.degree(0), pv = h.degree(1);
  const int nu = pu + 1, nv = pv + 1;
  struct Row {
    FunctionId f;
    Eigen::MatrixXd m;  // nu x nv on the local functions of the current ancestor
  };
  std::vector<Row> rows;
  int prev_u0 = 0, prev_v0 = 0;
  Eigen::MatrixXd au(nu, nu), av(nv, nv);
  for (int m = 0; m <= cell.level; ++m) {
    const CellId q = Hierarchy::ancestor(cell, m);
    const int u0 = h.space(m).dir(0).span_of_cell(q.i) - pu;
    const int v0 = h.space(m).dir(1).span_of_cell(q.j) - pv;
    if (m > 0) {
      for (int a = 0; a < nu; ++a)
        for (int b = 0; b < nu; ++b) au(a, b) = h.two_scale_coef(m - 1, 0, prev_u0 + a, u0 + b);
      for (int a = 0; a < nv; ++a)
        for (int b = 0; b < nv; ++b) av(a, b) = h.two_scale_coef(m - 1, 1, prev_v0 + a, v0 + b);
      std::vector<char> zeroed(nu * nv, 0);
      if (kind == BasisKind::Truncated) {
        for (int b = 0; b < nv; ++b)
          for (int a = 0; a < nu; ++a)
            zeroed[a + nu * b] = st.in_subdomain(FunctionId{m, u0 + a, v0 + b}) ? 1 : 0;
      }
      std::vector<Row> next;
      next.reserve(rows.size());
      for (auto& r : rows) {
        Eigen::MatrixXd nm = au.transpose() * r.m * av;
        bool any = false;
        for (int b = 0; b < nv; ++b) {
          for (int a = 0; a < nu; ++a) {
            if (zeroed[a + nu * b]) nm(a, b) = 0.0;
            any = any || nm(a, b) != 0.0;
          }
        }
        if (any) next.push_back({r.f, std::move(nm)});
      }
      rows = std::move(next);
    }
    for (int b = 0; b < nv; ++b) {
      for (int a = 0; a < nu; ++a) {
        const FunctionId f{m, u0 + a, v0 + b};
        if (st.active(f)) {
          Row r{f, Eigen::MatrixXd::Zero(nu, nv)};
          r.m(a, b) = 1.0;
          rows.push_back(std::move(r));
        }
      }
    }
    prev_u0 = u0;
    prev_v0 = v0;
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.f < b.f; });
  CellExtraction ex;
  ex.cell = cell;
  ex.coefficients.resize(static_cast<Eigen::Index>(rows.size()), nu * nv);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ex.functions.push_back(rows[r].f);
    for (int b = 0; b < nv; ++b)
      for (int a = 0; a < nu; ++a) ex.coefficients(static_cast<Eigen::Index>(r), a + nu * b) = rows[r].m(a, b);
  }
  return ex;
}

}  // namespace

Hierarchy::Hierarchy(TensorSplineSpace base, int depth, int max_depth) : max_depth_(max_depth) {
  if (depth < 1) throw Error("Hierarchy: depth must be at least 1");
  if (max_depth < depth) throw Error("Hierarchy: depth exceeds max_depth");
  Level l0;
  l0.space = TensorSplineSpace(base.dir(0).normalized(), base.dir(1).normalized());
  for (int j = 0; j < l0.space.num_cells(1); ++j)
    for (int i = 0; i < l0.space.num_cells(0); ++i) l0.active.insert(grid_key(i, j));
  levels_.push_back(std::move(l0));
  while (num_levels() < depth) add_level();
}

void Hierarchy::add_level() {
  if (num_levels() >= max_depth_) {
    std::ostringstream os;
    os << "Hierarchy: maximum depth " << max_depth_ << " exceeded";
    throw Error(os.str());
  }
  auto& last = levels_.back();
  Level next;
  next.space = last.space.dyadic_refined();
  last.two_scale[0] = two_scale_matrix(last.space.dir(0), next.space.dir(0));
  last.two_scale[1] = two_scale_matrix(last.space.dir(1), next.space.dir(1));
  levels_.push_back(std::move(next));
}

double Hierarchy::two_scale_coef(int level, int d, int coarse, int fine) const {
  const auto& c = levels_[level].two_scale[d];
  for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(c, coarse); it; ++it) {
    if (it.col() == fine) return it.value();
  }
  return 0.0;
}

bool Hierarchy::valid(const CellId& c) const {
  return c.level >= 0 && c.level < num_levels() && c.i >= 0 && c.j >= 0 &&
         c.i < levels_[c.level].space.num_cells(0) && c.j < levels_[c.level].space.num_cells(1);
}

bool Hierarchy::is_active(const CellId& c) const {
  return valid(c) && levels_[c.level].active.count(key(c)) > 0;
}

bool Hierarchy::is_refined(const CellId& c) const {
  return valid(c) && levels_[c.level].refined.count(key(c)) > 0;
}

bool Hierarchy::in_subdomain(const CellId& c) const {
  if (!valid(c)) return false;
  return c.level == 0 || is_refined(parent(c));
}

std::array<int, 4> Hierarchy::support_cells(const FunctionId& f) const {
  const auto& s = levels_[f.level].space;
  return {s.dir(0).first_cell(f.i), s.dir(0).last_cell(f.i), s.dir(1).first_cell(f.j),
          s.dir(1).last_cell(f.j)};
}

std::array<int, 4> Hierarchy::functions_on_cell(int level, int ci, int cj) const {
  const auto& s = levels_[level].space;
  const int su = s.dir(0).span_of_cell(ci), sv = s.dir(1).span_of_cell(cj);
  return {su - s.dir(0).degree(), su, sv - s.dir(1).degree(), sv};
}

bool Hierarchy::support_in_subdomain(const FunctionId& f) const {
  if (f.level >= num_levels()) return false;
  if (f.level == 0) return true;
  const auto sc = support_cells(f);
  const auto& prev = levels_[f.level - 1].refined;
  for (int j = sc[2] >> 1; j <= sc[3] >> 1; ++j)
    for (int i = sc[0] >> 1; i <= sc[1] >> 1; ++i)
      if (!prev.count(grid_key(i, j))) return false;
  return true;
}

bool Hierarchy::support_refined(const FunctionId& f) const {
  const auto sc = support_cells(f);
  const auto& ref = levels_[f.level].refined;
  if (ref.empty()) return false;
  for (int j = sc[2]; j <= sc[3]; ++j)
    for (int i = sc[0]; i <= sc[1]; ++i)
      if (!ref.count(grid_key(i, j))) return false;
  return true;
}

const std::vector<CellId>& Hierarchy::active_cells() const {
  if (!cache_valid_) {
    active_cache_.clear();
    for (int l = 0; l < num_levels(); ++l) {
      for (auto k : levels_[l].active) {
        active_cache_.push_back({l, static_cast<int>(k & 0xffffffffu), static_cast<int>(k >> 32)});
      }
    }
    std::sort(active_cache_.begin(), active_cache_.end());
    cache_valid_ = true;
  }
  return active_cache_;
}

std::size_t Hierarchy::num_active_cells() const {
  std::size_t n = 0;
  for (const auto& l : levels_) n += l.active.size();
  return n;
}

std::vector<FunctionId> Hierarchy::active_functions() const {
  std::vector<FunctionId> out;
  std::unordered_set<std::uint64_t> seen;
  int cur_level = -1;
  for (const auto& c : active_cells()) {
    if (c.level != cur_level) {
      seen.clear();
      cur_level = c.level;
    }
    const auto fr = functions_on_cell(c.level, c.i, c.j);
    for (int j = fr[2]; j <= fr[3]; ++j) {
      for (int i = fr[0]; i <= fr[1]; ++i) {
        if (!seen.insert(grid_key(i, j)).second) continue;
        const FunctionId f{c.level, i, j};
        if (is_active_function(f)) out.push_back(f);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

int Hierarchy::deepest_level() const {
  for (int l = num_levels() - 1; l >= 0; --l)
    if (!levels_[l].active.empty()) return l;
  return 0;
}

Rect Hierarchy::cell_rect(const CellId& c) const {
  const auto& s = levels_[c.level].space;
  return {Vec2(s.dir(0).cell_lo(c.i), s.dir(1).cell_lo(c.j)),
          Vec2(s.dir(0).cell_hi(c.i), s.dir(1).cell_hi(c.j))};
}

CellId Hierarchy::locate(const Vec2& xi) const {
  const auto& s0 = levels_[0].space;
  CellId c{0, s0.dir(0).cell_of(xi.x()), s0.dir(1).cell_of(xi.y())};
  while (is_refined(c)) {
    const auto& s = levels_[c.level + 1].space;
    const int i = s.dir(0).cell_of(xi.x());
    const int j = s.dir(1).cell_of(xi.y());
    // children of c are 2i..2i+1; clamp to stay inside c
    c = {c.level + 1, std::clamp(i, 2 * c.i, 2 * c.i + 1), std::clamp(j, 2 * c.j, 2 * c.j + 1)};
  }
  return c;
}

std::vector<CellId> Hierarchy::active_cells_in(int level, int i0, int i1, int j0, int j1) const {
  std::vector<CellId> out;
  std::vector<CellId> stack;
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) stack.push_back({level, i, j});
  while (!stack.empty()) {
    const CellId c = stack.back();
    stack.pop_back();
    if (is_active(c)) {
      out.push_back(c);
    } else if (is_refined(c)) {
      for (const auto& ch : children(c)) stack.push_back(ch);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void Hierarchy::refine(std::span<const CellId> marked) {
  for (const auto& c : marked) {
    if (!is_active(c)) {
      std::ostringstream os;
      os << "refine: cell (" << c.level << "," << c.i << "," << c.j << ") is not active";
      throw Error(os.str());
    }
  }
  for (const auto& c : marked) {
    if (c.level + 1 >= num_levels()) add_level();
    levels_[c.level].active.erase(key(c));
    levels_[c.level].refined.insert(key(c));
    for (const auto& ch : children(c)) levels_[ch.level].active.insert(key(ch));
  }
  if (!marked.empty()) cache_valid_ = false;
}

nlohmann::json Hierarchy::to_json() const {
  nlohmann::json j;
  for (int d = 0; d < 2; ++d) {
    j["degree"].push_back(levels_[0].space.dir(d).degree());
    j["knots"].push_back(levels_[0].space.dir(d).knots());
  }
  j["max_depth"] = max_depth_;
  j["levels"] = nlohmann::json::array();
  auto funcs = active_functions();
  for (int l = 0; l < num_levels(); ++l) {
    nlohmann::json lj;
    lj["level"] = l;
    auto sorted = [](const std::unordered_set<std::uint64_t>& s) {
      std::vector<std::pair<int, int>> v;
      for (auto k : s) v.emplace_back(static_cast<int>(k >> 32), static_cast<int>(k & 0xffffffffu));
      std::sort(v.begin(), v.end());
      nlohmann::json a = nlohmann::json::array();
      for (auto [jj, ii] : v) a.push_back({ii, jj});
      return a;
    };
    lj["active_cells"] = sorted(levels_[l].active);
    lj["refined_cells"] = sorted(levels_[l].refined);
    lj["active_functions"] = nlohmann::json::array();
    for (const auto& f : funcs)
      if (f.level == l) lj["active_functions"].push_back({f.i, f.j});
    j["levels"].push_back(std::move(lj));
  }
  return j;
}

Hierarchy Hierarchy::from_json(const nlohmann::json& j) {
  KnotVector u(j.at("degree")[0].get<int>(), j.at("knots")[0].get<std::vector<double>>());
  KnotVector v(j.at("degree")[1].get<int>(), j.at("knots")[1].get<std::vector<double>>());
  Hierarchy h(TensorSplineSpace(u, v), 1, j.value("max_depth", 20));
  for (const auto& lj : j.at("levels")) {
    const int l = lj.at("level").get<int>();
    std::vector<CellId> marked;
    for (const auto& c : lj.at("refined_cells")) marked.push_back({l, c[0].get<int>(), c[1].get<int>()});
    h.refine(marked);
  }
  for (const auto& lj : j.at("levels")) {
    const int l = lj.at("level").get<int>();
    for (const auto& c : lj.at("active_cells")) {
      if (!h.is_active({l, c[0].get<int>(), c[1].get<int>()})) {
        throw Error("Hierarchy::from_json: active cell set inconsistent with refinements");
      }
    }
  }
  return h;
}

CellExtraction compute_extraction(const Hierarchy& h, const CellId& cell, BasisKind kind) {
  if (!h.is_active(cell)) throw Error("compute_extraction: cell is not active");
  FunctionStatus st(h);
  return extract(h, cell, kind, st);
}

double TruncatedFunction::evaluate(const Hierarchy& h, const Vec2& xi) const {
  const CellId c = h.locate(xi);
  const int k = c.level - function.level;
  if (k < 0 || k >= static_cast<int>(levels.size())) return 0.0;
  const auto& s = h.space(c.level);
  const BasisDers bu = s.dir(0).eval(xi.x(), 0);
  const BasisDers bv = s.dir(1).eval(xi.y(), 0);
  double val = 0.0;
  for (const auto& [ij, coef] : levels[k]) {
    const int a = ij.first - bu.first_function();
    const int b = ij.second - bv.first_function();
    if (a < 0 || a > bu.degree || b < 0 || b > bv.degree) continue;
    val += coef * bu(0, a) * bv(0, b);
  }
  return val;
}

TruncatedFunction truncate(const Hierarchy& h, const FunctionId& f) {
  if (!h.is_active_function(f)) throw Error("truncate: function is not active");
  TruncatedFunction t;
  t.function = f;
  t.levels.push_back({{{f.i, f.j}, 1.0}});
  for (int m = f.level + 1; m < h.num_levels(); ++m) {
    std::map<std::pair<int, int>, double> next;
    const auto& cu = h.two_scale(m - 1, 0);
    const auto& cv = h.two_scale(m - 1, 1);
    for (const auto& [ij, coef] : t.levels.back()) {
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator iu(cu, ij.first); iu; ++iu) {
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator iv(cv, ij.second); iv; ++iv) {
          next[{static_cast<int>(iu.col()), static_cast<int>(iv.col())}] += coef * iu.value() * iv.value();
        }
      }
    }
    for (auto it = next.begin(); it != next.end();) {
      if (h.support_in_subdomain(FunctionId{m, it->first.first, it->first.second})) {
        it = next.erase(it);
      } else {
        ++it;
      }
    }
    if (next.empty()) break;
    t.levels.push_back(std::move(next));
  }
  return t;
}

Eigen::MatrixXd local_tensor_basis(const Hierarchy& h, const CellId& c, const Vec2& xi, int order) {
  const auto& s = h.space(c.level);
  const auto& ku = s.dir(0);
  const auto& kv = s.dir(1);
  const BasisDers bu = ku.eval_in_span(ku.span_of_cell(c.i), xi.x(), std::min(order, ku.degree()));
  const BasisDers bv = kv.eval_in_span(kv.span_of_cell(c.j), xi.y(), std::min(order, kv.degree()));
  const int nu = ku.degree() + 1, nv = kv.degree() + 1;
  const int ncols = order == 0 ? 1 : (order == 1 ? 3 : 6);
  Eigen::MatrixXd out(nu * nv, ncols);
  auto du = [&](int k, int a) { return k <= bu.order ? bu(k, a) : 0.0; };
  auto dv = [&](int k, int b) { return k <= bv.order ? bv(k, b) : 0.0; };
  for (int b = 0; b < nv; ++b) {
    for (int a = 0; a < nu; ++a) {
      const int r = a + nu * b;
      out(r, 0) = du(0, a) * dv(0, b);
      if (order >= 1) {
        out(r, 1) = du(1, a) * dv(0, b);
        out(r, 2) = du(0, a) * dv(1, b);
      }
      if (order >= 2) {
        out(r, 3) = du(2, a) * dv(0, b);
        out(r, 4) = du(1, a) * dv(1, b);
        out(r, 5) = du(0, a) * dv(2, b);
      }
    }
  }
  return out;
}

ThbBasis::ThbBasis(const Hierarchy& h, BasisKind kind,
                   const std::function<bool(const CellId&)>& keep_cell)
    : h_(&h), kind_(kind) {
  FunctionStatus st(h);
  for (const auto& c : h.active_cells()) {
    if (keep_cell && !keep_cell(c)) continue;
    cell_lookup_[grid_key(c.i, c.j) ^ (static_cast<std::uint64_t>(c.level) << 58)] =
        static_cast<int>(cells_.size());
    cells_.push_back(c);
    extractions_.push_back(extract(h, c, kind, st));
  }
  std::vector<FunctionId> all;
  for (const auto& ex : extractions_) all.insert(all.end(), ex.functions.begin(), ex.functions.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  functions_ = std::move(all);
  for (std::size_t k = 0; k < functions_.size(); ++k) index_[functions_[k]] = static_cast<int>(k);
  cell_dofs_.resize(cells_.size());
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    for (const auto& f : extractions_[c].functions) cell_dofs_[c].push_back(index_.at(f));
  }
}

int ThbBasis::index_of(const FunctionId& f) const {
  auto it = index_.find(f);
  return it == index_.end() ? -1 : it->second;
}

int ThbBasis::cell_index(const CellId& c) const {
  auto it = cell_lookup_.find(grid_key(c.i, c.j) ^ (static_cast<std::uint64_t>(c.level) << 58));
  return it == cell_lookup_.end() ? -1 : it->second;
}

PointValues ThbBasis::eval_on_cell(int ci, const Vec2& xi, int order) const {
  PointValues pv;
  pv.dofs = cell_dofs_[ci];
  pv.values = extractions_[ci].coefficients * local_tensor_basis(*h_, cells_[ci], xi, order);
  return pv;
}

PointValues ThbBasis::eval(const Vec2& xi, int order) const {
  const int ci = cell_index(h_->locate(xi));
  if (ci < 0) return {};
  return eval_on_cell(ci, xi, order);
}

std::vector<CellId> admissibility_closure(const Hierarchy& h, std::span<const CellId> marked, int m) {
  if (m < 2) throw Error("admissibility_closure: class must be at least 2");
  std::set<CellId> result(marked.begin(), marked.end());
  std::vector<CellId> stack(marked.begin(), marked.end());
  const int pu = h.degree(0), pv = h.degree(1);
  while (!stack.empty()) {
    const CellId q = stack.back();
    stack.pop_back();
    const int coarse = q.level - m + 1;
    if (coarse < 0) continue;
    // support extension of q on level coarse+1, then active parents on level coarse
    const CellId anc = Hierarchy::ancestor(q, coarse + 1);
    const auto& s = h.space(coarse + 1);
    const int su = s.dir(0).span_of_cell(anc.i), sv = s.dir(1).span_of_cell(anc.j);
    const int i0 = s.dir(0).first_cell(su - pu), i1 = s.dir(0).last_cell(su);
    const int j0 = s.dir(1).first_cell(sv - pv), j1 = s.dir(1).last_cell(sv);
    for (int j = j0 >> 1; j <= (j1 >> 1); ++j) {
      for (int i = i0 >> 1; i <= (i1 >> 1); ++i) {
        const CellId nb{coarse, i, j};
        if (h.is_active(nb) && result.insert(nb).second) stack.push_back(nb);
      }
    }
  }
  return {result.begin(), result.end()};
}

int max_level_spread(const Hierarchy& h, BasisKind kind) {
  FunctionStatus st(h);
  int spread = 0;
  for (const auto& c : h.active_cells()) {
    const auto ex = extract(h, c, kind, st);
    for (const auto& f : ex.functions) spread = std::max(spread, c.level - f.level);
  }
  return spread;
}

}  // namespace trimiga
