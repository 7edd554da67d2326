#ifndef LINKEDMF_IMPUTE_HPP
#define LINKEDMF_IMPUTE_HPP

#include "linkedmf/decompose.hpp"
#include "linkedmf/linked.hpp"

#include <vector>

namespace linkedmf {

enum class MissingKind { None, Entrywise, Blockwise, Mixed };

const char* to_string(MissingKind kind) noexcept;

/// Missing entries of one block. Row and column indices are global.
struct BlockMissing {
  std::vector<Index> missing_rows;  // rows with every entry of the block missing
  std::vector<Index> missing_cols;  // columns with every entry of the block missing
  Index count = 0;                  // all missing entries of the block
  Index entrywise_count = 0;        // missing entries outside missing rows/columns
};

struct MissingPattern {
  MissingKind kind = MissingKind::None;
  Mask mask;
  Layout layout;
  std::vector<BlockMissing> blocks;  // row-major, index i * J + j

  const BlockMissing& block(Index i, Index j) const {
    return blocks[static_cast<std::size_t>(i * layout.col_sets() + j)];
  }
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> per_block_counts() const;
  /// Entries lying in a missing row of their block.
  Mask row_missing_mask() const;
  /// Entries lying in a missing column of their block.
  Mask col_missing_mask() const;
  /// Missing entries in neither a missing row nor a missing column.
  Mask entrywise_mask() const;
};

/// Classifies a mask block by block. Throws Data if any block is entirely
/// missing.
MissingPattern analyze_missing(const Layout& layout, const Mask& mask);

struct MissingSigma {
  Matrix sigma;    // I x J
  Mask iterative;  // I x J; true where sigma is re-estimated every cycle
};

/// Per-block noise scales for incomplete data.
///
/// Blocks with missing rows or columns use the complete sub-rows/columns of
/// the block. Blocks with scattered missing entries use the block with the
/// current imputations (`current_fill`, data units) and multiply the estimate
/// by MN / (MN - |missing|), or by its square root under
/// `SigmaInflation::Variance`. Without `current_fill` (the starting value,
/// before any cycle) the missing positions are zero and no inflation is
/// applied.
/// A block with both uses the complete submatrix and, if scattered entries
/// remain inside it, the same inflation over that submatrix.
MissingSigma sigma_for_missing(const BlockGrid& grid, const MissingPattern& pattern,
                               KappaForm form = KappaForm::AsPrinted,
                               const Matrix* current_fill = nullptr,
                               SigmaInflation inflation = SigmaInflation::AsPrinted);

struct ImputationResult {
  Decomposition decomposition;
  /// Input data with every missing entry replaced by the fitted structure.
  Matrix imputed;
};

/// EM-style linked EVB fit of a masked grid: missing entries are set to the
/// current total structure, every module is updated as in `ev_bidifac`, and
/// the two steps alternate until the structure stops moving. With the default
/// `Initialization::BidifacPlus` the cycles start from `bidifac_plus_impute`
/// with default penalties.
ImputationResult ev_bidifac_impute(const BlockGrid& grid, const ModuleGrid& modules,
                                   const FitOptions& opts);

/// The same EM scheme with fixed-penalty soft thresholding of every module.
/// Noise scales come from `sigma_for_missing` once, before iterating.
ImputationResult bidifac_plus_impute(const BlockGrid& grid, const ModuleGrid& modules,
                                     const std::vector<double>& lambdas, const FitOptions& opts);

struct SingleImputation {
  Matrix imputed;
  Matrix structure;
  FitMeta meta;
};

/// softImpute-style EM with a fixed nuclear-norm penalty. `start` seeds the
/// structure (zero by default), e.g. the fit at a neighbouring penalty.
SingleImputation em_impute_soft(const Matrix& x, const Mask& mask, double lambda,
                                const FitOptions& opts = {}, const Matrix* start = nullptr);
/// Hard-impute EM with a fixed rank.
SingleImputation em_impute_hard(const Matrix& x, const Mask& mask, Index rank,
                                const FitOptions& opts = {}, const Matrix* start = nullptr);

}  // namespace linkedmf

#endif  // LINKEDMF_IMPUTE_HPP
