#ifndef LINKEDMF_SRC_SCALING_HPP
#define LINKEDMF_SRC_SCALING_HPP

#include "linkedmf/linked.hpp"

namespace linkedmf::detail {

/// Block (i, j) of `full` divided by `sigma(i, j)`.
inline Matrix divide_blocks(const Matrix& full, const Layout& layout, const Matrix& sigma) {
  Matrix out = full;
  for (Index i = 0; i < layout.row_sets(); ++i)
    for (Index j = 0; j < layout.col_sets(); ++j)
      out.block(layout.row_offset(i), layout.col_offset(j), layout.row_size(i), layout.col_size(j)) /=
          sigma(i, j);
  return out;
}

}  // namespace linkedmf::detail

#endif  // LINKEDMF_SRC_SCALING_HPP
