#include "linkedmf/decompose.hpp"

#include "cyclic.hpp"
#include "scaling.hpp"

#include <cmath>
#include <string>

namespace linkedmf {

void FitOptions::validate(const Layout& layout) const {
  if (max_iterations < 1) throw Error(ErrorKind::Usage, "max_iterations must be >= 1");
  if (!(rel_tolerance > 0.0)) throw Error(ErrorKind::Usage, "rel_tolerance must be > 0");
  if (sigma_mode == SigmaMode::UserSupplied) {
    if (user_sigma.rows() != layout.row_sets() || user_sigma.cols() != layout.col_sets()) {
      throw Error(ErrorKind::Usage, "user sigma must be I x J");
    }
    if (!(user_sigma.array() > 0.0).all() || !user_sigma.allFinite()) {
      throw Error(ErrorKind::Usage, "user sigma entries must be positive and finite");
    }
  }
}

const char* to_string(Initialization init) noexcept {
  switch (init) {
    case Initialization::BidifacPlus: return "bidifac";
    case Initialization::Zero: return "zero";
  }
  return "unknown";
}

Initialization initialization_from_string(const std::string& name) {
  if (name == "bidifac") return Initialization::BidifacPlus;
  if (name == "zero") return Initialization::Zero;
  throw Error(ErrorKind::Usage, "unknown initialization '" + name + "' (expected bidifac or zero)");
}

const char* to_string(SigmaInflation inflation) noexcept {
  switch (inflation) {
    case SigmaInflation::AsPrinted: return "printed";
    case SigmaInflation::Variance: return "variance";
  }
  return "unknown";
}

SigmaInflation sigma_inflation_from_string(const std::string& name) {
  if (name == "printed") return SigmaInflation::AsPrinted;
  if (name == "variance") return SigmaInflation::Variance;
  throw Error(ErrorKind::Usage, "unknown sigma inflation '" + name + "' (expected printed or variance)");
}

Matrix estimate_block_sigmas(const BlockGrid& grid, KappaForm form) {
  const Layout& layout = grid.layout();
  Matrix sigma(layout.row_sets(), layout.col_sets());
  for (Index i = 0; i < layout.row_sets(); ++i)
    for (Index j = 0; j < layout.col_sets(); ++j) sigma(i, j) = estimate_sigma(grid.block(i, j), form).sigma_hat;
  return sigma;
}

namespace {

void require_observed(const BlockGrid& grid, const char* who) {
  if (!grid.fully_observed()) {
    throw Error(ErrorKind::Usage,
                std::string(who) + " needs fully observed data; use ev_bidifac_impute for masked grids");
  }
}

Matrix resolve_sigma(const BlockGrid& grid, const FitOptions& opts) {
  if (opts.sigma_mode == SigmaMode::UserSupplied) return opts.user_sigma;
  return estimate_block_sigmas(grid, opts.kappa_form);
}

}  // namespace

Decomposition ev_bidifac(const BlockGrid& grid, const ModuleGrid& modules, const FitOptions& opts,
                         const Decomposition* warm_start) {
  const Layout& layout = grid.layout();
  opts.validate(layout);
  modules.check_compatible(layout);
  require_observed(grid, "ev_bidifac");

  const Matrix sigma = warm_start ? warm_start->sigma() : resolve_sigma(grid, opts);
  const Matrix xt = detail::divide_blocks(grid.data(), layout, sigma);

  detail::CyclicState state(layout, modules);
  FitMeta meta;
  if (warm_start) {
    std::vector<SvdTriple> f;
    for (Index k = 0; k < warm_start->size(); ++k) f.push_back(warm_start->scaled_factors(k));
    state.warm_start(f);
  } else if (opts.init == Initialization::BidifacPlus && modules.size() > 1) {
    FitOptions pre = opts;
    pre.sigma_mode = SigmaMode::UserSupplied;
    pre.user_sigma = sigma;
    const Decomposition start = bidifac_plus(grid, modules, default_lambdas(modules, layout), pre);
    std::vector<SvdTriple> f;
    for (Index k = 0; k < start.size(); ++k) f.push_back(start.scaled_factors(k));
    state.warm_start(f);
    meta.init_iterations = start.meta().iterations;
  }

  const KappaForm form = opts.kappa_form;
  const detail::ModuleUpdater update = [form](const Matrix& residual, Index) {
    return evb_shrink_matrix(residual, 1.0, form);
  };

  for (int it = 1; it <= opts.max_iterations; ++it) {
    const Matrix previous = state.total();
    state.sweep(xt, update);
    meta.iterations = it;
    meta.final_relative_change = detail::relative_change(state.total(), previous);
    meta.change_trace.push_back(meta.final_relative_change);
    if (meta.final_relative_change < opts.rel_tolerance) {
      meta.converged = true;
      break;
    }
  }
  return Decomposition(layout, modules, state.factors(), sigma, std::move(meta));
}

double default_lambda(const Footprint& fp, const Layout& layout) {
  double rows = 0.0;
  double cols = 0.0;
  for (Index i = 0; i < layout.row_sets(); ++i)
    if (fp.row_sets[static_cast<std::size_t>(i)]) rows += static_cast<double>(layout.row_size(i));
  for (Index j = 0; j < layout.col_sets(); ++j)
    if (fp.col_sets[static_cast<std::size_t>(j)]) cols += static_cast<double>(layout.col_size(j));
  return std::sqrt(rows) + std::sqrt(cols);
}

std::vector<double> default_lambdas(const ModuleGrid& modules, const Layout& layout) {
  std::vector<double> out;
  for (Index k = 0; k < modules.size(); ++k) out.push_back(default_lambda(modules.footprint(k), layout));
  return out;
}

double bidifac_objective(const Matrix& scaled_data, const Decomposition& decomp,
                         const std::vector<double>& lambdas) {
  double penalty = 0.0;
  for (Index k = 0; k < decomp.size(); ++k)
    penalty += lambdas[static_cast<std::size_t>(k)] * decomp.scaled_factors(k).values.sum();
  return 0.5 * (scaled_data - decomp.scaled_total_structure()).squaredNorm() + penalty;
}

Decomposition bidifac_plus(const BlockGrid& grid, const ModuleGrid& modules,
                           const std::vector<double>& lambdas, const FitOptions& opts,
                           const Decomposition* warm_start) {
  const Layout& layout = grid.layout();
  opts.validate(layout);
  modules.check_compatible(layout);
  require_observed(grid, "bidifac_plus");
  if (static_cast<Index>(lambdas.size()) != modules.size()) {
    throw Error(ErrorKind::Usage, "one lambda per module required");
  }
  for (double l : lambdas) {
    if (!(l > 0.0) || !std::isfinite(l)) throw Error(ErrorKind::Domain, "lambdas must be positive");
  }

  const Matrix sigma = warm_start ? warm_start->sigma() : resolve_sigma(grid, opts);
  const Matrix xt = detail::divide_blocks(grid.data(), layout, sigma);

  detail::CyclicState state(layout, modules);
  if (warm_start) {
    std::vector<SvdTriple> f;
    for (Index k = 0; k < warm_start->size(); ++k) f.push_back(warm_start->scaled_factors(k));
    state.warm_start(f);
  }
  const detail::ModuleUpdater update = [&lambdas](const Matrix& residual, Index k) {
    return soft_threshold_matrix(residual, lambdas[static_cast<std::size_t>(k)]);
  };

  FitMeta meta;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    const Matrix previous = state.total();
    state.sweep(xt, update);
    meta.iterations = it;
    meta.objective_trace.push_back(0.5 * (xt - state.total()).squaredNorm() +
                                   state.weighted_nuclear_norm(lambdas));
    meta.final_relative_change = detail::relative_change(state.total(), previous);
    meta.change_trace.push_back(meta.final_relative_change);
    if (meta.final_relative_change < opts.rel_tolerance) {
      meta.converged = true;
      break;
    }
  }
  return Decomposition(layout, modules, state.factors(), sigma, std::move(meta));
}

bool UniquenessReport::overall_ok() const {
  for (bool b : condition2_ok)
    if (!b) return false;
  for (bool b : condition3_ok)
    if (!b) return false;
  return true;
}

namespace {

// Smallest/largest singular value of column-normalised `stack`; 0 when a
// column vanishes or there are more columns than rows.
double independence_gap(Matrix stack) {
  if (stack.cols() == 0) return 1.0;
  if (stack.cols() > stack.rows()) return 0.0;
  for (Index c = 0; c < stack.cols(); ++c) {
    const double norm = stack.col(c).norm();
    if (norm == 0.0) return 0.0;
    stack.col(c) /= norm;
  }
  Eigen::BDCSVD<Matrix> svd(stack);
  const Vector& s = svd.singularValues();
  return s[s.size() - 1] / s[0];
}

}  // namespace

UniquenessReport check_uniqueness(const Decomposition& decomp, double rank_tolerance) {
  const Layout& layout = decomp.layout();
  const ModuleGrid& modules = decomp.modules();
  std::vector<std::vector<Matrix>> row_parts(static_cast<std::size_t>(layout.row_sets()));
  std::vector<std::vector<Matrix>> col_parts(static_cast<std::size_t>(layout.col_sets()));

  for (Index k = 0; k < decomp.size(); ++k) {
    if (decomp.module_is_zero(k)) continue;
    // Factors of the noise-scaled fit; per-block unscaling can raise the rank.
    const SvdTriple& svd = decomp.scaled_factors(k);
    Index keep = 0;
    while (keep < svd.values.size() && svd.values[keep] > rank_tolerance * svd.values[0]) ++keep;
    if (keep == 0) continue;
    const Footprint& fp = modules.footprint(k);
    Index offset = 0;
    for (Index i = 0; i < layout.row_sets(); ++i) {
      if (!fp.row_sets[static_cast<std::size_t>(i)]) continue;
      row_parts[static_cast<std::size_t>(i)].push_back(svd.left.block(offset, 0, layout.row_size(i), keep));
      offset += layout.row_size(i);
    }
    offset = 0;
    for (Index j = 0; j < layout.col_sets(); ++j) {
      if (!fp.col_sets[static_cast<std::size_t>(j)]) continue;
      col_parts[static_cast<std::size_t>(j)].push_back(svd.right.block(offset, 0, layout.col_size(j), keep));
      offset += layout.col_size(j);
    }
  }

  const auto stack = [](const std::vector<Matrix>& parts, Index rows) {
    Index cols = 0;
    for (const Matrix& p : parts) cols += p.cols();
    Matrix out(rows, cols);
    Index c = 0;
    for (const Matrix& p : parts) {
      out.middleCols(c, p.cols()) = p;
      c += p.cols();
    }
    return out;
  };

  UniquenessReport report;
  for (Index i = 0; i < layout.row_sets(); ++i) {
    const double gap = independence_gap(stack(row_parts[static_cast<std::size_t>(i)], layout.row_size(i)));
    report.row_min_singular_gap.push_back(gap);
    report.condition2_ok.push_back(gap > rank_tolerance);
  }
  for (Index j = 0; j < layout.col_sets(); ++j) {
    const double gap = independence_gap(stack(col_parts[static_cast<std::size_t>(j)], layout.col_size(j)));
    report.col_min_singular_gap.push_back(gap);
    report.condition3_ok.push_back(gap > rank_tolerance);
  }
  return report;
}

}  // namespace linkedmf
