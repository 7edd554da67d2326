#include "linkedmf/impute.hpp"

#include "cyclic.hpp"
#include "scaling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace linkedmf {

const char* to_string(MissingKind kind) noexcept {
  switch (kind) {
    case MissingKind::None: return "none";
    case MissingKind::Entrywise: return "entrywise";
    case MissingKind::Blockwise: return "blockwise";
    case MissingKind::Mixed: return "mixed";
  }
  return "unknown";
}

Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> MissingPattern::per_block_counts() const {
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> out(layout.row_sets(), layout.col_sets());
  for (Index i = 0; i < layout.row_sets(); ++i)
    for (Index j = 0; j < layout.col_sets(); ++j) out(i, j) = block(i, j).count;
  return out;
}

Mask MissingPattern::row_missing_mask() const {
  Mask out = Mask::Constant(layout.rows(), layout.cols(), false);
  for (Index i = 0; i < layout.row_sets(); ++i)
    for (Index j = 0; j < layout.col_sets(); ++j)
      for (Index r : block(i, j).missing_rows)
        out.row(r).segment(layout.col_offset(j), layout.col_size(j)).setConstant(true);
  return out;
}

Mask MissingPattern::col_missing_mask() const {
  Mask out = Mask::Constant(layout.rows(), layout.cols(), false);
  for (Index i = 0; i < layout.row_sets(); ++i)
    for (Index j = 0; j < layout.col_sets(); ++j)
      for (Index c : block(i, j).missing_cols)
        out.col(c).segment(layout.row_offset(i), layout.row_size(i)).setConstant(true);
  return out;
}

Mask MissingPattern::entrywise_mask() const {
  return mask && !row_missing_mask() && !col_missing_mask();
}

MissingPattern analyze_missing(const Layout& layout, const Mask& mask) {
  if (mask.rows() != layout.rows() || mask.cols() != layout.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "mask must match the concatenated data shape");
  }
  MissingPattern p;
  p.mask = mask;
  p.layout = layout;
  bool any_entrywise = false;
  bool any_blockwise = false;
  for (Index i = 0; i < layout.row_sets(); ++i) {
    for (Index j = 0; j < layout.col_sets(); ++j) {
      const Index r0 = layout.row_offset(i);
      const Index c0 = layout.col_offset(j);
      const auto b = mask.block(r0, c0, layout.row_size(i), layout.col_size(j));
      BlockMissing bm;
      bm.count = b.count();
      if (bm.count == b.size()) {
        throw Error(ErrorKind::Data, "block (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                                         ") is entirely missing");
      }
      std::vector<bool> row_gone(static_cast<std::size_t>(b.rows()), false);
      std::vector<bool> col_gone(static_cast<std::size_t>(b.cols()), false);
      for (Index r = 0; r < b.rows(); ++r) {
        if (b.row(r).all()) {
          bm.missing_rows.push_back(r0 + r);
          row_gone[static_cast<std::size_t>(r)] = true;
        }
      }
      for (Index c = 0; c < b.cols(); ++c) {
        if (b.col(c).all()) {
          bm.missing_cols.push_back(c0 + c);
          col_gone[static_cast<std::size_t>(c)] = true;
        }
      }
      for (Index c = 0; c < b.cols(); ++c) {
        if (col_gone[static_cast<std::size_t>(c)]) continue;
        for (Index r = 0; r < b.rows(); ++r)
          if (b(r, c) && !row_gone[static_cast<std::size_t>(r)]) ++bm.entrywise_count;
      }
      any_entrywise = any_entrywise || bm.entrywise_count > 0;
      any_blockwise = any_blockwise || !bm.missing_rows.empty() || !bm.missing_cols.empty();
      p.blocks.push_back(std::move(bm));
    }
  }
  if (any_entrywise && any_blockwise) {
    p.kind = MissingKind::Mixed;
  } else if (any_blockwise) {
    p.kind = MissingKind::Blockwise;
  } else if (any_entrywise) {
    p.kind = MissingKind::Entrywise;
  }
  return p;
}

namespace {

std::vector<Index> complement(Index offset, Index size, const std::vector<Index>& gone) {
  std::vector<Index> keep;
  for (Index g = offset; g < offset + size; ++g)
    if (!std::binary_search(gone.begin(), gone.end(), g)) keep.push_back(g - offset);
  return keep;
}

}  // namespace

MissingSigma sigma_for_missing(const BlockGrid& grid, const MissingPattern& pattern, KappaForm form,
                               const Matrix* current_fill, SigmaInflation inflation) {
  const Layout& layout = grid.layout();
  if (!(pattern.layout == layout)) throw Error(ErrorKind::ShapeMismatch, "pattern layout differs from grid");
  const Matrix& fill = current_fill ? *current_fill : grid.data();
  if (fill.rows() != layout.rows() || fill.cols() != layout.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "fill matrix must match the data shape");
  }

  MissingSigma out{Matrix(layout.row_sets(), layout.col_sets()),
                   Mask::Constant(layout.row_sets(), layout.col_sets(), false)};
  for (Index i = 0; i < layout.row_sets(); ++i) {
    for (Index j = 0; j < layout.col_sets(); ++j) {
      const BlockMissing& bm = pattern.block(i, j);
      const bool blockwise = !bm.missing_rows.empty() || !bm.missing_cols.empty();
      if (!blockwise && bm.count == 0) {
        out.sigma(i, j) = estimate_sigma(grid.block(i, j), form).sigma_hat;
        continue;
      }
      const auto block = fill.block(layout.row_offset(i), layout.col_offset(j), layout.row_size(i),
                                    layout.col_size(j));
      Matrix sub;
      if (blockwise) {
        const auto rows = complement(layout.row_offset(i), layout.row_size(i), bm.missing_rows);
        const auto cols = complement(layout.col_offset(j), layout.col_size(j), bm.missing_cols);
        if (rows.size() < 2 || cols.size() < 2) {
          throw Error(ErrorKind::Data,
                      "block (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                          ") has fewer than two complete rows or columns; supply its noise scale");
        }
        sub = block(rows, cols);
      } else {
        sub = block;
      }
      const double size = static_cast<double>(sub.size());
      const double hidden = static_cast<double>(bm.entrywise_count);
      double s = estimate_sigma(sub, form).sigma_hat;
      if (bm.entrywise_count > 0) {
        if (current_fill) {
          const double ratio = size / (size - hidden);
          s *= inflation == SigmaInflation::Variance ? std::sqrt(ratio) : ratio;
        }
        out.iterative(i, j) = true;
      }
      out.sigma(i, j) = s;
    }
  }
  return out;
}

namespace {

void require_partial(const Mask& mask) {
  if (mask.size() > 0 && mask.all()) throw Error(ErrorKind::Data, "every entry is missing");
}

double max_abs_on(const Matrix& x, const Mask& mask) {
  return mask.select(x.cwiseAbs(), Matrix::Zero(x.rows(), x.cols())).maxCoeff();
}

struct EmSettings {
  bool refresh_sigma = false;
  const std::vector<double>* lambdas = nullptr;  // objective trace for soft fits
  const Decomposition* start = nullptr;
};

ImputationResult run_linked_em(const BlockGrid& grid, const ModuleGrid& modules, const FitOptions& opts,
                               const detail::ModuleUpdater& update, const EmSettings& settings) {
  const Layout& layout = grid.layout();
  opts.validate(layout);
  modules.check_compatible(layout);
  const Mask mask = grid.mask_or_empty();
  require_partial(mask);
  const MissingPattern pattern = analyze_missing(layout, mask);

  Matrix sigma;
  Mask iterative = Mask::Constant(layout.row_sets(), layout.col_sets(), false);
  if (opts.sigma_mode == SigmaMode::UserSupplied) {
    sigma = opts.user_sigma;
  } else {
    MissingSigma ms = sigma_for_missing(grid, pattern, opts.kappa_form, nullptr, opts.sigma_inflation);
    sigma = std::move(ms.sigma);
    if (settings.refresh_sigma) iterative = ms.iterative;
  }
  const bool any_missing = pattern.kind != MissingKind::None;
  const bool sigma_moves = iterative.any();

  Matrix xt = detail::divide_blocks(grid.data(), layout, sigma);
  detail::CyclicState state(layout, modules);
  FitMeta meta;
  if (settings.start) {
    std::vector<SvdTriple> f;
    for (Index k = 0; k < settings.start->size(); ++k) f.push_back(settings.start->scaled_factors(k));
    state.warm_start(f);
    meta.init_iterations = settings.start->meta().iterations;
  }

  for (int it = 1; it <= opts.max_iterations; ++it) {
    const Matrix previous = state.total();
    if (any_missing) xt = mask.select(previous, xt);
    state.sweep(xt, update);
    meta.iterations = it;
    if (settings.lambdas) {
      meta.objective_trace.push_back(0.5 * (xt - state.total()).squaredNorm() +
                                     state.weighted_nuclear_norm(*settings.lambdas));
    }
    meta.final_relative_change = detail::relative_change(state.total(), previous);
    meta.change_trace.push_back(meta.final_relative_change);

    bool imputed_ok = true;
    if (any_missing) {
      meta.final_imputed_change = max_abs_on(state.total() - previous, mask);
      imputed_ok = meta.final_imputed_change <= opts.rel_tolerance * max_abs_on(state.total(), mask);
    }

    double sigma_change = 0.0;
    if (sigma_moves) {
      Matrix fill = state.total();
      scale_blocks(fill, layout, sigma);
      fill = mask.select(fill, grid.data());
      const Matrix fresh = sigma_for_missing(grid, pattern, opts.kappa_form, &fill, opts.sigma_inflation).sigma;
      for (Index i = 0; i < layout.row_sets(); ++i) {
        for (Index j = 0; j < layout.col_sets(); ++j) {
          if (!iterative(i, j)) continue;
          sigma_change = std::max(sigma_change, std::abs(fresh(i, j) - sigma(i, j)) / sigma(i, j));
          sigma(i, j) = fresh(i, j);
        }
      }
      xt = detail::divide_blocks(fill, layout, sigma);
    }

    if (meta.final_relative_change < opts.rel_tolerance && imputed_ok &&
        sigma_change < opts.rel_tolerance) {
      meta.converged = true;
      break;
    }
  }

  Decomposition decomp(layout, modules, state.factors(), sigma, std::move(meta));
  Matrix imputed = grid.data();
  if (any_missing) imputed = mask.select(decomp.total_structure(), imputed);
  return ImputationResult{std::move(decomp), std::move(imputed)};
}

}  // namespace

ImputationResult ev_bidifac_impute(const BlockGrid& grid, const ModuleGrid& modules,
                                   const FitOptions& opts) {
  const KappaForm form = opts.kappa_form;
  const detail::ModuleUpdater update = [form](const Matrix& residual, Index) {
    return evb_shrink_matrix(residual, 1.0, form);
  };
  EmSettings settings;
  settings.refresh_sigma = true;
  if (opts.init == Initialization::BidifacPlus && modules.size() > 1) {
    const ImputationResult start =
        bidifac_plus_impute(grid, modules, default_lambdas(modules, grid.layout()), opts);
    settings.start = &start.decomposition;
    return run_linked_em(grid, modules, opts, update, settings);
  }
  return run_linked_em(grid, modules, opts, update, settings);
}

ImputationResult bidifac_plus_impute(const BlockGrid& grid, const ModuleGrid& modules,
                                     const std::vector<double>& lambdas, const FitOptions& opts) {
  if (static_cast<Index>(lambdas.size()) != modules.size()) {
    throw Error(ErrorKind::Usage, "one lambda per module required");
  }
  for (double l : lambdas) {
    if (!(l > 0.0) || !std::isfinite(l)) throw Error(ErrorKind::Domain, "lambdas must be positive");
  }
  const detail::ModuleUpdater update = [&lambdas](const Matrix& residual, Index k) {
    return soft_threshold_matrix(residual, lambdas[static_cast<std::size_t>(k)]);
  };
  EmSettings settings;
  settings.lambdas = &lambdas;
  return run_linked_em(grid, modules, opts, update, settings);
}

namespace {

template <class Threshold>
SingleImputation run_single_em(const Matrix& x, const Mask& mask, const FitOptions& opts, const Matrix* start,
                               Threshold&& threshold) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "mask must match the data shape");
  }
  if (opts.max_iterations < 1) throw Error(ErrorKind::Usage, "max_iterations must be >= 1");
  require_partial(mask);
  const Matrix observed = mask.select(Matrix::Zero(x.rows(), x.cols()), x);
  if (!observed.allFinite()) throw Error(ErrorKind::Data, "observed entries must be finite");

  if (start && (start->rows() != x.rows() || start->cols() != x.cols())) {
    throw Error(ErrorKind::ShapeMismatch, "start must match the data shape");
  }
  SingleImputation out;
  out.structure = start ? *start : Matrix::Zero(x.rows(), x.cols());
  const bool any_missing = mask.any();
  Matrix z = observed;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    if (any_missing) z = mask.select(out.structure, observed);
    Matrix next = threshold(z).reconstruct();
    out.meta.iterations = it;
    out.meta.final_relative_change = detail::relative_change(next, out.structure);
    out.meta.change_trace.push_back(out.meta.final_relative_change);
    if (any_missing) out.meta.final_imputed_change = max_abs_on(next - out.structure, mask);
    out.structure = std::move(next);
    if (!any_missing || out.meta.final_relative_change < opts.rel_tolerance) {
      out.meta.converged = true;
      break;
    }
  }
  out.imputed = mask.select(out.structure, observed);
  return out;
}

}  // namespace

SingleImputation em_impute_soft(const Matrix& x, const Mask& mask, double lambda, const FitOptions& opts,
                                const Matrix* start) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorKind::Domain, "lambda must be >= 0");
  return run_single_em(x, mask, opts, start, [lambda](const Matrix& z) { return soft_threshold_matrix(z, lambda); });
}

SingleImputation em_impute_hard(const Matrix& x, const Mask& mask, Index rank, const FitOptions& opts,
                                const Matrix* start) {
  if (rank < 0 || rank > std::min(x.rows(), x.cols())) {
    throw Error(ErrorKind::Domain, "rank must lie in [0, min(rows, cols)]");
  }
  return run_single_em(x, mask, opts, start, [rank](const Matrix& z) { return hard_threshold_matrix(z, rank); });
}

}  // namespace linkedmf
