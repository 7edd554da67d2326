#include "linkedmf/linked.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>

namespace linkedmf {

Layout::Layout(std::vector<Index> row_set_sizes, std::vector<Index> col_set_sizes)
    : row_sizes_(std::move(row_set_sizes)), col_sizes_(std::move(col_set_sizes)) {
  if (row_sizes_.empty() || col_sizes_.empty()) {
    throw Error(ErrorKind::ShapeMismatch,
                "layout needs at least one row set and one column set");
  }
  for (Index m : row_sizes_) {
    if (m < 1) throw Error(ErrorKind::ShapeMismatch, "row set sizes must be positive");
    row_offsets_.push_back(row_offsets_.back() + m);
  }
  for (Index n : col_sizes_) {
    if (n < 1) throw Error(ErrorKind::ShapeMismatch, "column set sizes must be positive");
    col_offsets_.push_back(col_offsets_.back() + n);
  }
}

Index Layout::row_set_of(Index r) const {
  auto it = std::upper_bound(row_offsets_.begin(), row_offsets_.end(), r);
  return static_cast<Index>(it - row_offsets_.begin()) - 1;
}

Index Layout::col_set_of(Index c) const {
  auto it = std::upper_bound(col_offsets_.begin(), col_offsets_.end(), c);
  return static_cast<Index>(it - col_offsets_.begin()) - 1;
}

bool Footprint::spans_all_rows() const {
  return std::all_of(row_sets.begin(), row_sets.end(), [](bool b) { return b; });
}

bool Footprint::spans_all_cols() const {
  return std::all_of(col_sets.begin(), col_sets.end(), [](bool b) { return b; });
}

FootprintIndices footprint_indices(const Layout& layout, const Footprint& fp) {
  FootprintIndices idx;
  for (Index i = 0; i < layout.row_sets(); ++i) {
    if (!fp.row_sets[static_cast<std::size_t>(i)]) continue;
    for (Index r = 0; r < layout.row_size(i); ++r) idx.rows.push_back(layout.row_offset(i) + r);
  }
  for (Index j = 0; j < layout.col_sets(); ++j) {
    if (!fp.col_sets[static_cast<std::size_t>(j)]) continue;
    for (Index c = 0; c < layout.col_size(j); ++c) idx.cols.push_back(layout.col_offset(j) + c);
  }
  return idx;
}

ModuleGrid::ModuleGrid(std::vector<Footprint> footprints)
    : footprints_(std::move(footprints)) {
  if (footprints_.empty()) {
    throw Error(ErrorKind::Usage, "module grid must contain at least one module");
  }
  row_sets_ = static_cast<Index>(footprints_.front().row_sets.size());
  col_sets_ = static_cast<Index>(footprints_.front().col_sets.size());
  std::set<std::pair<std::vector<bool>, std::vector<bool>>> seen;
  for (std::size_t k = 0; k < footprints_.size(); ++k) {
    const Footprint& fp = footprints_[k];
    if (static_cast<Index>(fp.row_sets.size()) != row_sets_ ||
        static_cast<Index>(fp.col_sets.size()) != col_sets_) {
      throw Error(ErrorKind::ShapeMismatch,
                  "module " + std::to_string(k) + " has inconsistent indicator length");
    }
    const bool any_row = std::find(fp.row_sets.begin(), fp.row_sets.end(), true) != fp.row_sets.end();
    const bool any_col = std::find(fp.col_sets.begin(), fp.col_sets.end(), true) != fp.col_sets.end();
    if (!any_row || !any_col) {
      throw Error(ErrorKind::Usage, "module " + std::to_string(k) + " is empty");
    }
    if (!seen.emplace(fp.row_sets, fp.col_sets).second) {
      throw Error(ErrorKind::Usage, "module " + std::to_string(k) + " duplicates an earlier module");
    }
  }
}

ModuleGrid ModuleGrid::from_indicators(const Eigen::MatrixXi& row_indicator,
                                       const Eigen::MatrixXi& col_indicator) {
  if (row_indicator.cols() != col_indicator.cols()) {
    throw Error(ErrorKind::ShapeMismatch,
                "row and column indicators disagree on the number of modules");
  }
  std::vector<Footprint> fps;
  for (Index k = 0; k < row_indicator.cols(); ++k) {
    Footprint fp;
    for (Index i = 0; i < row_indicator.rows(); ++i) {
      const int v = row_indicator(i, k);
      if (v != 0 && v != 1) throw Error(ErrorKind::Usage, "indicators must be 0 or 1");
      fp.row_sets.push_back(v == 1);
    }
    for (Index j = 0; j < col_indicator.rows(); ++j) {
      const int v = col_indicator(j, k);
      if (v != 0 && v != 1) throw Error(ErrorKind::Usage, "indicators must be 0 or 1");
      fp.col_sets.push_back(v == 1);
    }
    fps.push_back(std::move(fp));
  }
  return ModuleGrid(std::move(fps));
}

Eigen::MatrixXi ModuleGrid::row_indicator() const {
  Eigen::MatrixXi r(row_sets_, size());
  for (Index k = 0; k < size(); ++k)
    for (Index i = 0; i < row_sets_; ++i) r(i, k) = footprint(k).row_sets[static_cast<std::size_t>(i)] ? 1 : 0;
  return r;
}

Eigen::MatrixXi ModuleGrid::col_indicator() const {
  Eigen::MatrixXi c(col_sets_, size());
  for (Index k = 0; k < size(); ++k)
    for (Index j = 0; j < col_sets_; ++j) c(j, k) = footprint(k).col_sets[static_cast<std::size_t>(j)] ? 1 : 0;
  return c;
}

void ModuleGrid::check_compatible(const Layout& layout) const {
  if (row_sets_ != layout.row_sets() || col_sets_ != layout.col_sets()) {
    throw Error(ErrorKind::ShapeMismatch,
                "module grid is " + std::to_string(row_sets_) + "x" + std::to_string(col_sets_) +
                    " sets but data has " + std::to_string(layout.row_sets()) + "x" +
                    std::to_string(layout.col_sets()));
  }
}

ModuleGrid enumerate_modules(Index row_sets, Index col_sets, Index cap) {
  if (row_sets < 1 || col_sets < 1) {
    throw Error(ErrorKind::Domain, "enumerate_modules: set counts must be positive");
  }
  const auto count = [](Index sets) -> double { return std::ldexp(1.0, static_cast<int>(std::min<Index>(sets, 62))) - 1.0; };
  if (row_sets > 30 || col_sets > 30 || count(row_sets) * count(col_sets) > static_cast<double>(cap)) {
    throw Error(ErrorKind::Usage,
                "enumerating all modules for " + std::to_string(row_sets) + "x" +
                    std::to_string(col_sets) + " sets exceeds the cap of " + std::to_string(cap) +
                    " modules; supply explicit R/C indicators instead");
  }
  const std::uint64_t row_full = (std::uint64_t{1} << row_sets) - 1;
  const std::uint64_t col_full = (std::uint64_t{1} << col_sets) - 1;
  std::vector<Footprint> fps;
  for (std::uint64_t rmask = row_full; rmask >= 1; --rmask) {
    for (std::uint64_t cmask = col_full; cmask >= 1; --cmask) {
      Footprint fp;
      for (Index i = 0; i < row_sets; ++i) fp.row_sets.push_back(((rmask >> i) & 1u) != 0);
      for (Index j = 0; j < col_sets; ++j) fp.col_sets.push_back(((cmask >> j) & 1u) != 0);
      fps.push_back(std::move(fp));
    }
  }
  return ModuleGrid(std::move(fps));
}

BlockGrid::BlockGrid(Layout layout, Matrix data, std::optional<Mask> mask)
    : layout_(std::move(layout)), data_(std::move(data)), mask_(std::move(mask)) {
  if (data_.rows() != layout_.rows() || data_.cols() != layout_.cols()) {
    throw Error(ErrorKind::ShapeMismatch,
                "data is " + std::to_string(data_.rows()) + "x" + std::to_string(data_.cols()) +
                    " but layout implies " + std::to_string(layout_.rows()) + "x" +
                    std::to_string(layout_.cols()));
  }
  if (mask_) {
    if (mask_->rows() != data_.rows() || mask_->cols() != data_.cols()) {
      throw Error(ErrorKind::ShapeMismatch, "mask shape differs from data shape");
    }
    data_ = mask_->select(Matrix::Zero(data_.rows(), data_.cols()), data_);
  }
  if (!data_.allFinite()) {
    throw Error(ErrorKind::Data, "observed entries must be finite");
  }
}

BlockGrid BlockGrid::from_blocks(const std::vector<std::vector<Matrix>>& blocks,
                                 std::optional<Mask> mask) {
  if (blocks.empty() || blocks.front().empty()) {
    throw Error(ErrorKind::ShapeMismatch, "block grid is empty");
  }
  std::vector<Index> rows;
  std::vector<Index> cols;
  for (const auto& row : blocks) rows.push_back(row.front().rows());
  for (const auto& b : blocks.front()) cols.push_back(b.cols());
  Layout layout(rows, cols);
  Matrix data(layout.rows(), layout.cols());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].size() != cols.size()) {
      throw Error(ErrorKind::ShapeMismatch, "ragged block grid");
    }
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const Matrix& b = blocks[i][j];
      if (b.rows() != rows[i] || b.cols() != cols[j]) {
        throw Error(ErrorKind::ShapeMismatch,
                    "block (" + std::to_string(i) + "," + std::to_string(j) + ") is " +
                        std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ", expected " +
                        std::to_string(rows[i]) + "x" + std::to_string(cols[j]));
      }
      data.block(layout.row_offset(static_cast<Index>(i)), layout.col_offset(static_cast<Index>(j)),
                 rows[i], cols[j]) = b;
    }
  }
  return BlockGrid(std::move(layout), std::move(data), std::move(mask));
}

Mask BlockGrid::mask_or_empty() const {
  if (mask_) return *mask_;
  return Mask::Constant(data_.rows(), data_.cols(), false);
}

bool BlockGrid::fully_observed() const { return !mask_ || !mask_->any(); }

Eigen::Block<const Matrix> BlockGrid::block(Index i, Index j) const {
  return data_.block(layout_.row_offset(i), layout_.col_offset(j), layout_.row_size(i),
                     layout_.col_size(j));
}

Matrix extract_submatrix(const Eigen::Ref<const Matrix>& full, const Layout& layout,
                         const Footprint& fp) {
  if (full.rows() != layout.rows() || full.cols() != layout.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "extract_submatrix: matrix does not match layout");
  }
  const FootprintIndices idx = footprint_indices(layout, fp);
  return full(idx.rows, idx.cols);
}

Matrix extract_submatrix(const BlockGrid& grid, const Footprint& fp) {
  return extract_submatrix(grid.data(), grid.layout(), fp);
}

Matrix embed_submatrix(const Eigen::Ref<const Matrix>& sub, const Layout& layout,
                       const Footprint& fp) {
  const FootprintIndices idx = footprint_indices(layout, fp);
  if (sub.rows() != static_cast<Index>(idx.rows.size()) ||
      sub.cols() != static_cast<Index>(idx.cols.size())) {
    throw Error(ErrorKind::ShapeMismatch,
                "embed_submatrix: submatrix is " + std::to_string(sub.rows()) + "x" +
                    std::to_string(sub.cols()) + " but footprint is " +
                    std::to_string(idx.rows.size()) + "x" + std::to_string(idx.cols.size()));
  }
  Matrix full = Matrix::Zero(layout.rows(), layout.cols());
  full(idx.rows, idx.cols) = sub;
  return full;
}

void scale_blocks(Eigen::Ref<Matrix> full, const Layout& layout, const Matrix& scale) {
  for (Index i = 0; i < layout.row_sets(); ++i)
    for (Index j = 0; j < layout.col_sets(); ++j)
      full.block(layout.row_offset(i), layout.col_offset(j), layout.row_size(i), layout.col_size(j)) *=
          scale(i, j);
}

Decomposition::Decomposition(Layout layout, ModuleGrid modules,
                             std::vector<SvdTriple> scaled_factors, Matrix sigma, FitMeta meta)
    : layout_(std::move(layout)),
      modules_(std::move(modules)),
      factors_(std::move(scaled_factors)),
      sigma_(std::move(sigma)),
      meta_(std::move(meta)) {
  modules_.check_compatible(layout_);
  if (static_cast<Index>(factors_.size()) != modules_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "one factor triple per module required");
  }
  if (sigma_.rows() != layout_.row_sets() || sigma_.cols() != layout_.col_sets()) {
    throw Error(ErrorKind::ShapeMismatch, "sigma must be I x J");
  }
  for (Index k = 0; k < modules_.size(); ++k) {
    const FootprintIndices idx = footprint_indices(layout_, modules_.footprint(k));
    const SvdTriple& f = factors_[static_cast<std::size_t>(k)];
    if (f.rows() != static_cast<Index>(idx.rows.size()) ||
        f.cols() != static_cast<Index>(idx.cols.size())) {
      throw Error(ErrorKind::ShapeMismatch,
                  "factors of module " + std::to_string(k) + " do not match its footprint");
    }
  }
}

Matrix Decomposition::module_submatrix(Index k) const {
  const Footprint& fp = modules_.footprint(k);
  const SvdTriple& f = scaled_factors(k);
  Matrix sub = f.components() == 0 ? Matrix::Zero(f.rows(), f.cols()) : f.reconstruct();
  Index r0 = 0;
  for (Index i = 0; i < layout_.row_sets(); ++i) {
    if (!fp.row_sets[static_cast<std::size_t>(i)]) continue;
    Index c0 = 0;
    for (Index j = 0; j < layout_.col_sets(); ++j) {
      if (!fp.col_sets[static_cast<std::size_t>(j)]) continue;
      sub.block(r0, c0, layout_.row_size(i), layout_.col_size(j)) *= sigma_(i, j);
      c0 += layout_.col_size(j);
    }
    r0 += layout_.row_size(i);
  }
  return sub;
}

Matrix Decomposition::module_matrix(Index k) const {
  return embed_submatrix(module_submatrix(k), layout_, modules_.footprint(k));
}

Matrix Decomposition::total_structure() const {
  Matrix total = scaled_total_structure();
  scale_blocks(total, layout_, sigma_);
  return total;
}

Matrix Decomposition::scaled_total_structure() const {
  Matrix total = Matrix::Zero(layout_.rows(), layout_.cols());
  for (Index k = 0; k < size(); ++k) {
    const SvdTriple& f = scaled_factors(k);
    if (f.components() == 0) continue;
    const FootprintIndices idx = footprint_indices(layout_, modules_.footprint(k));
    total(idx.rows, idx.cols) += f.reconstruct();
  }
  return total;
}

}  // namespace linkedmf
