#ifndef LINKEDMF_LINKED_HPP
#define LINKEDMF_LINKED_HPP

#include "linkedmf/shrinkage.hpp"
#include "linkedmf/types.hpp"

#include <optional>
#include <vector>

namespace linkedmf {

/// Row-set and column-set sizes of a block grid and the offsets they imply in
/// the concatenated `M x N` matrix.
class Layout {
 public:
  Layout() = default;
  Layout(std::vector<Index> row_set_sizes, std::vector<Index> col_set_sizes);

  Index row_sets() const { return static_cast<Index>(row_sizes_.size()); }
  Index col_sets() const { return static_cast<Index>(col_sizes_.size()); }
  Index rows() const { return row_offsets_.back(); }
  Index cols() const { return col_offsets_.back(); }

  Index row_size(Index i) const { return row_sizes_[static_cast<std::size_t>(i)]; }
  Index col_size(Index j) const { return col_sizes_[static_cast<std::size_t>(j)]; }
  Index row_offset(Index i) const { return row_offsets_[static_cast<std::size_t>(i)]; }
  Index col_offset(Index j) const { return col_offsets_[static_cast<std::size_t>(j)]; }

  const std::vector<Index>& row_set_sizes() const { return row_sizes_; }
  const std::vector<Index>& col_set_sizes() const { return col_sizes_; }

  /// Row set containing global row `r`.
  Index row_set_of(Index r) const;
  Index col_set_of(Index c) const;

  bool operator==(const Layout& other) const {
    return row_sizes_ == other.row_sizes_ && col_sizes_ == other.col_sizes_;
  }

 private:
  std::vector<Index> row_sizes_;
  std::vector<Index> col_sizes_;
  std::vector<Index> row_offsets_{0};
  std::vector<Index> col_offsets_{0};
};

/// Which row sets and column sets one module spans.
struct Footprint {
  std::vector<bool> row_sets;
  std::vector<bool> col_sets;

  bool operator==(const Footprint& other) const = default;

  bool spans_all_rows() const;
  bool spans_all_cols() const;
};

/// Global row and column indices covered by a footprint.
struct FootprintIndices {
  std::vector<Index> rows;
  std::vector<Index> cols;
};

FootprintIndices footprint_indices(const Layout& layout, const Footprint& fp);

/// Binary indicator matrices R (I x K) and C (J x K).
class ModuleGrid {
 public:
  ModuleGrid() = default;
  /// Validates: every module spans at least one row set and one column set,
  /// and no footprint repeats.
  explicit ModuleGrid(std::vector<Footprint> footprints);
  /// Build from indicator matrices, `row_indicator` I x K and `col_indicator`
  /// J x K with 0/1 entries.
  static ModuleGrid from_indicators(const Eigen::MatrixXi& row_indicator,
                                    const Eigen::MatrixXi& col_indicator);

  Index size() const { return static_cast<Index>(footprints_.size()); }
  Index row_sets() const { return row_sets_; }
  Index col_sets() const { return col_sets_; }
  const Footprint& footprint(Index k) const {
    return footprints_[static_cast<std::size_t>(k)];
  }
  const std::vector<Footprint>& footprints() const { return footprints_; }

  Eigen::MatrixXi row_indicator() const;
  Eigen::MatrixXi col_indicator() const;

  /// Throws ShapeMismatch when the grid has a different number of sets.
  void check_compatible(const Layout& layout) const;

 private:
  std::vector<Footprint> footprints_;
  Index row_sets_ = 0;
  Index col_sets_ = 0;
};

constexpr Index kDefaultModuleCap = 4095;

/// All `(2^I - 1)(2^J - 1)` non-empty footprints. Row-set masks form the
/// outer loop and column-set masks the inner loop, each counted down in
/// binary from all-ones, so the globally shared module comes first.
ModuleGrid enumerate_modules(Index row_sets, Index col_sets,
                             Index cap = kDefaultModuleCap);

/// I x J grid of linked matrices stored as one concatenated `M x N` matrix.
///
/// When a mask is present (`true` = missing) masked entries are stored as 0
/// and never read.
class BlockGrid {
 public:
  BlockGrid() = default;
  BlockGrid(Layout layout, Matrix data, std::optional<Mask> mask = std::nullopt);
  /// `blocks[i][j]` must be `M_i x N_j`.
  static BlockGrid from_blocks(const std::vector<std::vector<Matrix>>& blocks,
                               std::optional<Mask> mask = std::nullopt);

  const Layout& layout() const { return layout_; }
  const Matrix& data() const { return data_; }
  bool has_mask() const { return mask_.has_value(); }
  /// All-false mask when none was supplied.
  Mask mask_or_empty() const;
  const std::optional<Mask>& mask() const { return mask_; }
  /// True when there is no mask or the mask has no missing entry.
  bool fully_observed() const;

  Eigen::Block<const Matrix> block(Index i, Index j) const;

 private:
  Layout layout_;
  Matrix data_;
  std::optional<Mask> mask_;
};

/// Restriction of a concatenated matrix to a module footprint: rows of the
/// indicated row sets (in set order) by columns of the indicated column sets.
Matrix extract_submatrix(const Eigen::Ref<const Matrix>& full,
                         const Layout& layout, const Footprint& fp);
Matrix extract_submatrix(const BlockGrid& grid, const Footprint& fp);

/// Inverse of `extract_submatrix`: an `M x N` matrix equal to `sub` on the
/// footprint and zero elsewhere.
Matrix embed_submatrix(const Eigen::Ref<const Matrix>& sub,
                       const Layout& layout, const Footprint& fp);

struct FitMeta {
  int iterations = 0;
  bool converged = false;
  double final_relative_change = 0.0;
  /// Relative change of the total structure after each sweep.
  std::vector<double> change_trace;
  /// Penalised objective after each sweep (soft-threshold fits only).
  std::vector<double> objective_trace;
  /// Largest change of any imputed entry in the last cycle (imputation only).
  double final_imputed_change = 0.0;
  /// Sweeps spent on the starting fit, 0 when started from zero.
  int init_iterations = 0;
};

/// Fitted modules of a linked decomposition.
///
/// Each module is kept as the retained SVD factors of its footprint
/// submatrix in noise-scaled units; `sigma(i, j)` maps block (i, j) back to
/// data units. A zero module has a rank-0 triple.
class Decomposition {
 public:
  Decomposition() = default;
  Decomposition(Layout layout, ModuleGrid modules,
                std::vector<SvdTriple> scaled_factors, Matrix sigma,
                FitMeta meta = {});

  const Layout& layout() const { return layout_; }
  const ModuleGrid& modules() const { return modules_; }
  const Matrix& sigma() const { return sigma_; }
  const FitMeta& meta() const { return meta_; }
  FitMeta& meta() { return meta_; }
  const SvdTriple& scaled_factors(Index k) const {
    return factors_[static_cast<std::size_t>(k)];
  }

  Index size() const { return modules_.size(); }
  Index module_rank(Index k) const { return scaled_factors(k).components(); }
  bool module_is_zero(Index k) const { return module_rank(k) == 0; }

  /// Module k in data units on its footprint submatrix.
  Matrix module_submatrix(Index k) const;
  /// Module k in data units, `M x N`, zero outside its footprint.
  Matrix module_matrix(Index k) const;
  /// Sum of all modules in data units.
  Matrix total_structure() const;
  /// Sum of all modules in noise-scaled units.
  Matrix scaled_total_structure() const;

 private:
  Layout layout_;
  ModuleGrid modules_;
  std::vector<SvdTriple> factors_;
  Matrix sigma_;
  FitMeta meta_;
};

/// Multiplies block (i, j) of `full` by `scale(i, j)` in place.
void scale_blocks(Eigen::Ref<Matrix> full, const Layout& layout,
                  const Matrix& scale);

}  // namespace linkedmf

#endif  // LINKEDMF_LINKED_HPP
