#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "trimiga/spline.hpp"

namespace trimiga {

/// Cell (i,j) of the tensor grid of one level. Ordered level-major, then row (j), then column (i).
struct CellId {
  int level = 0;
  int i = 0;
  int j = 0;

  friend bool operator==(const CellId&, const CellId&) = default;
  friend std::strong_ordering operator<=>(const CellId& a, const CellId& b) {
    if (auto c = a.level <=> b.level; c != 0) return c;
    if (auto c = a.j <=> b.j; c != 0) return c;
    return a.i <=> b.i;
  }
};

/// Tensor B-spline (i,j) of one level; same ordering convention as CellId.
struct FunctionId {
  int level = 0;
  int i = 0;
  int j = 0;

  friend bool operator==(const FunctionId&, const FunctionId&) = default;
  friend std::strong_ordering operator<=>(const FunctionId& a, const FunctionId& b) {
    if (auto c = a.level <=> b.level; c != 0) return c;
    if (auto c = a.j <=> b.j; c != 0) return c;
    return a.i <=> b.i;
  }
};

inline std::uint64_t grid_key(int i, int j) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(j)) << 32) |
         static_cast<std::uint32_t>(i);
}

enum class BasisKind { Hierarchical, Truncated };

/// Nested dyadic levels with active and refined cell sets per level.
///
/// A level-l cell is in the subdomain Omega^l when l == 0 or its parent is refined. Every
/// cell of Omega^l is either active or refined, so the active cells tile the square.
class Hierarchy {
 public:
  explicit Hierarchy(TensorSplineSpace base, int depth = 1, int max_depth = 20);

  int num_levels() const { return static_cast<int>(levels_.size()); }
  int max_depth() const { return max_depth_; }
  int degree(int d) const { return levels_[0].space.dir(d).degree(); }
  const TensorSplineSpace& space(int level) const { return levels_[level].space; }
  /// 1D two-scale matrix from `level` to `level`+1 along direction d.
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& two_scale(int level, int d) const {
    return levels_[level].two_scale[d];
  }
  double two_scale_coef(int level, int d, int coarse, int fine) const;

  bool is_active(const CellId& c) const;
  bool is_refined(const CellId& c) const;
  bool in_subdomain(const CellId& c) const;
  bool valid(const CellId& c) const;

  /// supp f contained in Omega^{level(f)}.
  bool support_in_subdomain(const FunctionId& f) const;
  /// supp f contained in Omega^{level(f)+1}.
  bool support_refined(const FunctionId& f) const;
  /// Hierarchical (HB) activity: supp in Omega^l and not in Omega^{l+1}.
  bool is_active_function(const FunctionId& f) const {
    return support_in_subdomain(f) && !support_refined(f);
  }

  /// Active cells, sorted.
  const std::vector<CellId>& active_cells() const;
  std::size_t num_active_cells() const;
  /// Active functions of the untrimmed HB/THB basis, sorted.
  std::vector<FunctionId> active_functions() const;
  int deepest_level() const;

  Rect cell_rect(const CellId& c) const;
  static CellId parent(const CellId& c) { return {c.level - 1, c.i >> 1, c.j >> 1}; }
  static std::array<CellId, 4> children(const CellId& c) {
    const int l = c.level + 1, i = 2 * c.i, j = 2 * c.j;
    return {CellId{l, i, j}, CellId{l, i + 1, j}, CellId{l, i, j + 1}, CellId{l, i + 1, j + 1}};
  }
  static CellId ancestor(const CellId& c, int level) {
    const int s = c.level - level;
    return {level, c.i >> s, c.j >> s};
  }
  /// Active cell containing xi (ties resolved towards larger indices, last cell at the end).
  CellId locate(const Vec2& xi) const;
  /// Inclusive cell index ranges {i0, i1, j0, j1} of supp f on its own level.
  std::array<int, 4> support_cells(const FunctionId& f) const;
  /// Functions of `level` that do not vanish on the level-`level` cell (ci, cj).
  std::array<int, 4> functions_on_cell(int level, int ci, int cj) const;
  /// Active cells covering the level-`level` index box [i0,i1]x[j0,j1].
  std::vector<CellId> active_cells_in(int level, int i0, int i1, int j0, int j1) const;

  /// Moves each marked active cell into the refined set and activates its four children.
  /// Levels are appended on demand up to max_depth.
  void refine(std::span<const CellId> marked);

  nlohmann::json to_json() const;
  static Hierarchy from_json(const nlohmann::json& j);

 private:
  struct Level {
    TensorSplineSpace space;
    std::array<Eigen::SparseMatrix<double, Eigen::RowMajor>, 2> two_scale;  // to the next level
    std::unordered_set<std::uint64_t> active;
    std::unordered_set<std::uint64_t> refined;
  };
  void add_level();

  std::vector<Level> levels_;
  int max_depth_;
  mutable std::vector<CellId> active_cache_;
  mutable bool cache_valid_ = false;
};

/// Active function of a cell's extraction: THB function = coefficients . (local tensor basis of the cell).
struct CellExtraction {
  CellId cell;
  std::vector<FunctionId> functions;
  /// rows: functions; columns: local level-k tensor functions a + (pu+1)*b.
  Eigen::MatrixXd coefficients;
};

/// Restriction of every active (H)THB function to an active cell, in the cell's level basis.
CellExtraction compute_extraction(const Hierarchy& h, const CellId& cell, BasisKind kind);

/// Coefficients of a truncated function on the levels l..deepest, sparse per level.
struct TruncatedFunction {
  FunctionId function;
  /// levels[k] holds the representation on level function.level + k.
  std::vector<std::map<std::pair<int, int>, double>> levels;

  /// Value at xi (evaluated through the representation on the level of the active cell).
  double evaluate(const Hierarchy& h, const Vec2& xi) const;
};

/// Recursive truncation of an active function against all finer levels.
TruncatedFunction truncate(const Hierarchy& h, const FunctionId& f);

/// Basis values at a point: one entry per active function, with derivatives
/// (0: value, 1: d/du, 2: d/dv, 3: d2/du2, 4: d2/dudv, 5: d2/dv2).
struct PointValues {
  std::vector<int> dofs;
  Eigen::MatrixXd values;  // rows: dofs, cols: derivative index
};

/// Snapshot of an (H)THB basis: active functions numbered level-major, then lexicographic,
/// and the extraction of every retained active cell.
class ThbBasis {
 public:
  /// `keep_cell` filters active cells (e.g. zero-measure trimmed cells); functions that do
  /// not act on any retained cell are dropped.
  ThbBasis(const Hierarchy& h, BasisKind kind,
           const std::function<bool(const CellId&)>& keep_cell = {});

  const Hierarchy& hierarchy() const { return *h_; }
  BasisKind kind() const { return kind_; }
  int size() const { return static_cast<int>(functions_.size()); }
  const std::vector<FunctionId>& functions() const { return functions_; }
  int index_of(const FunctionId& f) const;

  const std::vector<CellId>& cells() const { return cells_; }
  int cell_index(const CellId& c) const;
  const CellExtraction& extraction(int cell_index) const { return extractions_[cell_index]; }
  const std::vector<int>& cell_dofs(int cell_index) const { return cell_dofs_[cell_index]; }

  /// Values/derivatives of the active functions at xi on a retained cell (parametric derivatives).
  PointValues eval_on_cell(int cell_index, const Vec2& xi, int order) const;
  /// Same, locating the active cell first. Points on unretained cells give an empty result.
  PointValues eval(const Vec2& xi, int order) const;

 private:
  const Hierarchy* h_;
  BasisKind kind_;
  std::vector<FunctionId> functions_;
  std::map<FunctionId, int> index_;
  std::vector<CellId> cells_;
  std::unordered_map<std::uint64_t, int> cell_lookup_;
  std::vector<CellExtraction> extractions_;
  std::vector<std::vector<int>> cell_dofs_;
};

/// Local tensor-product basis of a level cell at xi: values(r, k) for local function r and
/// derivative index k as in PointValues.
Eigen::MatrixXd local_tensor_basis(const Hierarchy& h, const CellId& c, const Vec2& xi, int order);

/// Cells to add so that refining `marked` keeps the mesh admissible of class m
/// (support-extension recursion for truncated bases). Result is sorted and contains `marked`.
std::vector<CellId> admissibility_closure(const Hierarchy& h, std::span<const CellId> marked, int m);

/// Largest level difference between an active cell and a function acting on it.
int max_level_spread(const Hierarchy& h, BasisKind kind);

}  // namespace trimiga
