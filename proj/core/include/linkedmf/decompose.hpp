#ifndef LINKEDMF_DECOMPOSE_HPP
#define LINKEDMF_DECOMPOSE_HPP

#include "linkedmf/linked.hpp"
#include "linkedmf/shrinkage.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace linkedmf {

enum class SigmaMode {
  PerBlockTheorem2,  // empirical noise scale per block, estimated before fitting
  UserSupplied,      // FitOptions::user_sigma (I x J)
};

/// Starting point of the linked EVB cycles.
enum class Initialization {
  BidifacPlus,  // modules from a default-penalty structured nuclear-norm fit
  Zero,         // every module zero, as in the plain cyclic scheme
};

const char* to_string(Initialization init) noexcept;
Initialization initialization_from_string(const std::string& name);

/// How scattered missing entries inflate the noise scale estimated from the
/// currently imputed block.
enum class SigmaInflation {
  AsPrinted,  // sigma' * MN / (MN - |missing|)
  Variance,   // sigma' * sqrt(MN / (MN - |missing|)), the ratio applied to sigma^2
};

const char* to_string(SigmaInflation inflation) noexcept;
SigmaInflation sigma_inflation_from_string(const std::string& name);

struct FitOptions {
  int max_iterations = 500;
  /// Stop when the relative Frobenius change of the total structure between
  /// sweeps falls below this.
  double rel_tolerance = 1e-8;
  SigmaMode sigma_mode = SigmaMode::PerBlockTheorem2;
  Matrix user_sigma;
  /// Recorded with results; the cyclic fits themselves are deterministic.
  std::uint64_t rng_seed = 0;
  KappaForm kappa_form = KappaForm::AsPrinted;
  /// Ignored for a single module, where the EVB cycle converges in one sweep.
  Initialization init = Initialization::BidifacPlus;
  /// Used only by the imputation fits.
  SigmaInflation sigma_inflation = SigmaInflation::AsPrinted;

  void validate(const Layout& layout) const;
};

/// Empirical noise scale of every block of a fully observed grid.
Matrix estimate_block_sigmas(const BlockGrid& grid, KappaForm form = KappaForm::AsPrinted);

/// Linked EVB decomposition of a fully observed grid.
///
/// Blocks are divided by their noise scale and modules are cycled in grid
/// order, each replaced by the EVB shrinkage (unit noise) of its residual
/// submatrix, until the total structure stops moving. The cycles start from
/// `opts.init`; passing `warm_start` resumes from its factors and noise
/// scales instead.
Decomposition ev_bidifac(const BlockGrid& grid, const ModuleGrid& modules,
                         const FitOptions& opts,
                         const Decomposition* warm_start = nullptr);

/// Default nuclear-norm weight: sqrt(rows spanned) + sqrt(columns spanned).
double default_lambda(const Footprint& fp, const Layout& layout);
std::vector<double> default_lambdas(const ModuleGrid& modules, const Layout& layout);

/// Structured nuclear-norm decomposition with fixed per-module penalties,
/// solved by cyclic soft singular value thresholding. The objective
///   1/2 ||X~ - sum_k S_k||_F^2 + sum_k lambda_k ||S_k||_*
/// (noise-scaled units) is appended to `meta().objective_trace` every sweep.
Decomposition bidifac_plus(const BlockGrid& grid, const ModuleGrid& modules,
                           const std::vector<double>& lambdas, const FitOptions& opts,
                           const Decomposition* warm_start = nullptr);

/// Penalised objective of `decomp` against `scaled_data` (noise-scaled units).
double bidifac_objective(const Matrix& scaled_data, const Decomposition& decomp,
                         const std::vector<double>& lambdas);

struct UniquenessReport {
  std::vector<bool> condition2_ok;  // per row set
  std::vector<bool> condition3_ok;  // per column set
  /// Smallest / largest singular value of each stacked factor collection;
  /// 1 when the collection is empty.
  std::vector<double> row_min_singular_gap;
  std::vector<double> col_min_singular_gap;

  bool overall_ok() const;
};

/// Checks that, per row set, the row-set slices of all retained left
/// singular vectors of the noise-scaled modules covering it are linearly
/// independent, and
/// likewise for column sets. Penalty minimality is supplied by the fitting
/// algorithm and not checked here.
UniquenessReport check_uniqueness(const Decomposition& decomp, double rank_tolerance = 1e-8);

}  // namespace linkedmf

#endif  // LINKEDMF_DECOMPOSE_HPP
