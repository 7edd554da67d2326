#ifndef LINKEDMF_SHRINKAGE_HPP
#define LINKEDMF_SHRINKAGE_HPP

#include "linkedmf/types.hpp"

namespace linkedmf {

/// Thin singular value decomposition `left * diag(values) * right^T`.
///
/// `values` is non-increasing and non-negative; the columns of `left` and
/// `right` are orthonormal. An `SvdTriple` may also carry only the retained
/// components of a thresholded matrix, in which case it has fewer columns
/// than `min(rows, cols)`.
struct SvdTriple {
  Matrix left;
  Vector values;
  Matrix right;

  Index rows() const { return left.rows(); }
  Index cols() const { return right.rows(); }
  Index components() const { return values.size(); }

  Matrix reconstruct() const;

  /// Rank-zero triple for an `m x n` matrix.
  static SvdTriple zero(Index m, Index n);
};

/// Full thin SVD of `x` with `min(rows, cols)` components.
SvdTriple thin_svd(const Eigen::Ref<const Matrix>& x);

enum class ShrinkageRule { Evb, Soft, Hard, Oracle };

const char* to_string(ShrinkageRule rule) noexcept;

/// Which root equation defines the EVB detection constant kappa.
///
/// `AsPrinted` solves
///   x sqrt(n/m) log(x sqrt(m/n) + 1) + x sqrt(m/n) log(x sqrt(n/m) + 1) = 1,
/// `Reference` solves
///   log(z1 + 1)/z1 + log(z2 + 1)/z2 = 1,  z1 = x sqrt(n/m), z2 = x sqrt(m/n),
/// which gives the larger detection threshold of the original global
/// analytic EVB solution.
enum class KappaForm { AsPrinted, Reference };

const char* to_string(KappaForm form) noexcept;
KappaForm kappa_form_from_string(const std::string& name);

struct ShrinkageResult {
  SvdTriple svd;        // SVD of the input matrix
  Vector shrunk_values; // thresholded singular values, same length as svd.values
  Index rank = 0;       // number of strictly positive shrunk values
  double sigma_used = 1.0;
  ShrinkageRule rule = ShrinkageRule::Evb;

  /// `U diag(shrunk) V^T` at the input's shape.
  Matrix reconstruct() const;

  /// Retained components only (`rank` columns).
  SvdTriple retained() const;
};

struct NoiseFitDiagnostics {
  double sigma_hat = 0.0;
  double objective_value = 0.0;  // Psi(sigma_hat)
  double alpha = 1.0;            // short side / long side
  int grid_evaluations = 0;
};

/// Detection constant kappa for an `m x n` matrix. Symmetric in (m, n).
double kappa(Index m, Index n, KappaForm form = KappaForm::AsPrinted);

/// The root function whose zero defines kappa; exposed for diagnostics.
double kappa_equation(double x, Index m, Index n,
                      KappaForm form = KappaForm::AsPrinted);

/// Singular values strictly below this are zeroed by the EVB rule.
double evb_threshold(Index m, Index n, double sigma,
                     KappaForm form = KappaForm::AsPrinted);

/// EVB shrinkage of one singular value `d` of an `m x n` matrix.
double evb_shrink_value(double d, Index m, Index n, double sigma,
                        KappaForm form = KappaForm::AsPrinted);

ShrinkageResult evb_shrink_matrix(const Eigen::Ref<const Matrix>& x,
                                  double sigma,
                                  KappaForm form = KappaForm::AsPrinted);

/// EVB rule applied to precomputed singular values. Used by the iterative
/// fitters to avoid a second SVD.
ShrinkageResult evb_shrink_svd(SvdTriple svd, double sigma,
                               KappaForm form = KappaForm::AsPrinted);

/// Psi(sigma): the profiled free energy whose global minimiser is the
/// empirical noise scale. `singular_values` are those of an `m x n` matrix
/// (any orientation).
double noise_objective(const Eigen::Ref<const Vector>& singular_values,
                       Index m, Index n, double sigma,
                       KappaForm form = KappaForm::AsPrinted);

/// Global minimiser of `noise_objective` over sigma.
NoiseFitDiagnostics estimate_sigma(const Eigen::Ref<const Matrix>& x,
                                   KappaForm form = KappaForm::AsPrinted);

/// Same as `estimate_sigma` when the singular values are already known.
NoiseFitDiagnostics estimate_sigma_from_values(
    const Eigen::Ref<const Vector>& singular_values, Index m, Index n,
    KappaForm form = KappaForm::AsPrinted);

ShrinkageResult soft_threshold_matrix(const Eigen::Ref<const Matrix>& x,
                                      double lambda);
ShrinkageResult soft_threshold_svd(SvdTriple svd, double lambda);

ShrinkageResult hard_threshold_matrix(const Eigen::Ref<const Matrix>& x,
                                      Index rank);
ShrinkageResult hard_threshold_svd(SvdTriple svd, Index rank);

/// Least-squares diagonal rescaling of `x`'s singular vectors towards the
/// known signal `s_true`, clipped at zero.
ShrinkageResult oracle_operator(const Eigen::Ref<const Matrix>& x,
                                const Eigen::Ref<const Matrix>& s_true);

}  // namespace linkedmf

#endif  // LINKEDMF_SHRINKAGE_HPP
