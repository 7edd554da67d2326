#include "cyclic.hpp"

#include <cmath>
#include <limits>

namespace linkedmf::detail {

CyclicState::CyclicState(const Layout& layout, const ModuleGrid& modules)
    : layout_(layout), total_(Matrix::Zero(layout.rows(), layout.cols())) {
  modules.check_compatible(layout);
  for (Index k = 0; k < modules.size(); ++k) {
    idx_.push_back(footprint_indices(layout, modules.footprint(k)));
    const auto m = static_cast<Index>(idx_.back().rows.size());
    const auto n = static_cast<Index>(idx_.back().cols.size());
    factors_.push_back(SvdTriple::zero(m, n));
    dense_.emplace_back(Matrix::Zero(m, n));
  }
}

void CyclicState::warm_start(const std::vector<SvdTriple>& factors) {
  total_.setZero();
  for (std::size_t k = 0; k < factors_.size(); ++k) {
    factors_[k] = factors[k];
    dense_[k] = factors[k].components() == 0
                    ? Matrix::Zero(factors[k].rows(), factors[k].cols())
                    : factors[k].reconstruct();
    total_(idx_[k].rows, idx_[k].cols) += dense_[k];
  }
}

void CyclicState::sweep(const Matrix& xt, const ModuleUpdater& update) {
  for (std::size_t k = 0; k < factors_.size(); ++k) {
    const auto& rows = idx_[k].rows;
    const auto& cols = idx_[k].cols;
    Matrix residual = xt(rows, cols) - total_(rows, cols) + dense_[k];
    ShrinkageResult fit = update(residual, static_cast<Index>(k));
    SvdTriple kept = fit.retained();
    Matrix fresh = kept.components() == 0 ? Matrix::Zero(residual.rows(), residual.cols())
                                          : kept.reconstruct();
    total_(rows, cols) += fresh - dense_[k];
    dense_[k] = std::move(fresh);
    factors_[k] = std::move(kept);
  }
}

double CyclicState::weighted_nuclear_norm(const std::vector<double>& lambdas) const {
  double total = 0.0;
  for (std::size_t k = 0; k < factors_.size(); ++k) total += lambdas[k] * factors_[k].values.sum();
  return total;
}

double relative_change(const Matrix& current, const Matrix& previous) {
  const double denom = previous.norm();
  const double num = (current - previous).norm();
  if (denom == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / denom;
}

}  // namespace linkedmf::detail
