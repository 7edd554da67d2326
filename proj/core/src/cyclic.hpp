#ifndef LINKEDMF_SRC_CYCLIC_HPP
#define LINKEDMF_SRC_CYCLIC_HPP

#include "linkedmf/linked.hpp"

#include <functional>
#include <vector>

namespace linkedmf::detail {

/// Replaces module k given its residual submatrix (noise-scaled units).
using ModuleUpdater = std::function<ShrinkageResult(const Matrix& residual, Index k)>;

/// Working state of a cyclic block-coordinate fit in noise-scaled units.
class CyclicState {
 public:
  CyclicState(const Layout& layout, const ModuleGrid& modules);

  /// Seeds the modules from previously fitted factors.
  void warm_start(const std::vector<SvdTriple>& factors);

  /// One pass over all modules in order against the scaled data `xt`.
  void sweep(const Matrix& xt, const ModuleUpdater& update);

  const Matrix& total() const { return total_; }
  const std::vector<SvdTriple>& factors() const { return factors_; }
  /// Sum of nuclear norms weighted by `lambdas`.
  double weighted_nuclear_norm(const std::vector<double>& lambdas) const;

 private:
  Layout layout_;
  std::vector<FootprintIndices> idx_;
  std::vector<SvdTriple> factors_;
  std::vector<Matrix> dense_;
  Matrix total_;
};

/// ||a - b||_F / ||b||_F with the convention 0/0 = 0 and x/0 = inf.
double relative_change(const Matrix& current, const Matrix& previous);

}  // namespace linkedmf::detail

#endif  // LINKEDMF_SRC_CYCLIC_HPP
