#include "linkedmf/shrinkage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace linkedmf {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::ShapeMismatch: return "shape";
    case ErrorKind::Data: return "data";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::UndefinedMetric: return "undefined-metric";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

const char* to_string(ShrinkageRule rule) noexcept {
  switch (rule) {
    case ShrinkageRule::Evb: return "evb";
    case ShrinkageRule::Soft: return "soft";
    case ShrinkageRule::Hard: return "hard";
    case ShrinkageRule::Oracle: return "oracle";
  }
  return "unknown";
}

const char* to_string(KappaForm form) noexcept {
  return form == KappaForm::AsPrinted ? "printed" : "reference";
}

KappaForm kappa_form_from_string(const std::string& name) {
  if (name == "printed") return KappaForm::AsPrinted;
  if (name == "reference") return KappaForm::Reference;
  throw Error(ErrorKind::Usage,
              "unknown kappa form '" + name + "' (expected printed|reference)");
}

Matrix SvdTriple::reconstruct() const {
  return left * values.asDiagonal() * right.transpose();
}

SvdTriple SvdTriple::zero(Index m, Index n) {
  return SvdTriple{Matrix(m, 0), Vector(0), Matrix(n, 0)};
}

SvdTriple thin_svd(const Eigen::Ref<const Matrix>& x) {
  const Index m = x.rows();
  const Index n = x.cols();
  if (m == 0 || n == 0) return SvdTriple::zero(m, n);
  if (!x.allFinite()) {
    throw Error(ErrorKind::Data, "thin_svd: matrix contains non-finite values");
  }
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw Error(ErrorKind::Numerical, "thin_svd: SVD did not converge");
  }
  return SvdTriple{svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

namespace {

void require_positive_sigma(double sigma, const char* where) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorKind::Domain,
                std::string(where) + ": sigma must be positive and finite");
  }
}

std::vector<Index> positive_indices(const Vector& v) {
  std::vector<Index> idx;
  for (Index r = 0; r < v.size(); ++r) {
    if (v[r] > 0.0) idx.push_back(r);
  }
  return idx;
}

ShrinkageResult finish(SvdTriple svd, Vector shrunk, double sigma,
                       ShrinkageRule rule) {
  ShrinkageResult out;
  out.rank = static_cast<Index>((shrunk.array() > 0.0).count());
  out.svd = std::move(svd);
  out.shrunk_values = std::move(shrunk);
  out.sigma_used = sigma;
  out.rule = rule;
  return out;
}

// Noise-scale objective pieces, in units of x = d^2 / (M sigma^2).
struct NoiseShape {
  double alpha;
  double sqrt_alpha;
  double c;  // retained-component indicator threshold
};

NoiseShape noise_shape(Index m, Index n, KappaForm form) {
  const Index long_side = std::max(m, n);
  const Index short_side = std::min(m, n);
  NoiseShape s{};
  s.alpha = static_cast<double>(short_side) / static_cast<double>(long_side);
  s.sqrt_alpha = std::sqrt(s.alpha);
  const double k = kappa(long_side, short_side, form);
  s.c = 1.0 + s.alpha + s.sqrt_alpha * (k + 1.0 / k);
  return s;
}

double psi3(double x, const NoiseShape& s) {
  const double shifted = x - (1.0 + s.alpha);
  const double disc = std::max(shifted * shifted - 4.0 * s.alpha, 0.0);
  return (shifted + std::sqrt(disc)) / (2.0 * s.sqrt_alpha);
}

double psi2(double x, const NoiseShape& s) {
  const double t = psi3(x, s);
  return std::log1p(s.sqrt_alpha * t) + s.alpha * std::log1p(t / s.sqrt_alpha) -
         s.sqrt_alpha * t;
}

double psi1(double x, const NoiseShape& s) {
  double v = x - std::log(x);
  if (x > s.c) v += psi2(x, s);
  return v;
}

// x * psi1'(x); dPsi/dsigma = -(2/sigma) * sum_r x_r psi1'(x_r).
double x_dpsi1(double x, const NoiseShape& s) {
  double v = x - 1.0;
  if (x > s.c) {
    const double shifted = x - (1.0 + s.alpha);
    const double root = std::sqrt(shifted * shifted - 4.0 * s.alpha);
    const double t = (shifted + root) / (2.0 * s.sqrt_alpha);
    const double dt = (1.0 + shifted / root) / (2.0 * s.sqrt_alpha);
    const double dpsi2 =
        dt * (s.sqrt_alpha / (1.0 + s.sqrt_alpha * t) +
              s.alpha / (s.sqrt_alpha + t) - s.sqrt_alpha);
    v += x * dpsi2;
  }
  return v;
}

struct NoiseProblem {
  std::vector<double> sq_values;  // positive d_r^2
  double long_side;
  NoiseShape shape;

  double objective(double sigma) const {
    const double scale = 1.0 / (long_side * sigma * sigma);
    double total = 0.0;
    for (double d2 : sq_values) total += psi1(d2 * scale, shape);
    return total;
  }
  double slope_sign_term(double sigma) const {
    const double scale = 1.0 / (long_side * sigma * sigma);
    double total = 0.0;
    for (double d2 : sq_values) total += x_dpsi1(d2 * scale, shape);
    return total;
  }
};

constexpr int kSigmaGridPoints = 400;

}  // namespace

double kappa_equation(double x, Index m, Index n, KappaForm form) {
  const double n_over_m = std::sqrt(static_cast<double>(n) / static_cast<double>(m));
  const double m_over_n = std::sqrt(static_cast<double>(m) / static_cast<double>(n));
  if (form == KappaForm::AsPrinted) {
    return x * n_over_m * std::log1p(x * m_over_n) +
           x * m_over_n * std::log1p(x * n_over_m) - 1.0;
  }
  const double z1 = x * n_over_m;
  const double z2 = x * m_over_n;
  return std::log1p(z1) / z1 + std::log1p(z2) / z2 - 1.0;
}

double kappa(Index m, Index n, KappaForm form) {
  if (m < 1 || n < 1) {
    throw Error(ErrorKind::Domain, "kappa: dimensions must be positive");
  }
  double lo = 1e-8;
  double hi = 10.0;
  const double f_lo = kappa_equation(lo, m, n, form);
  double f_hi = kappa_equation(hi, m, n, form);
  for (int expand = 0; (f_lo < 0.0) == (f_hi < 0.0) && expand < 64; ++expand) {
    hi *= 2.0;
    f_hi = kappa_equation(hi, m, n, form);
  }
  if ((f_lo < 0.0) == (f_hi < 0.0)) {
    throw Error(ErrorKind::Numerical, "kappa: root not bracketed");
  }
  const bool lo_negative = f_lo < 0.0;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double f_mid = kappa_equation(mid, m, n, form);
    if (f_mid == 0.0) return mid;
    if ((f_mid < 0.0) == lo_negative) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double a = std::abs(kappa_equation(lo, m, n, form));
  const double b = std::abs(kappa_equation(hi, m, n, form));
  return a <= b ? lo : hi;
}

double evb_threshold(Index m, Index n, double sigma, KappaForm form) {
  require_positive_sigma(sigma, "evb_threshold");
  const double k = kappa(m, n, form);
  const double md = static_cast<double>(m);
  const double nd = static_cast<double>(n);
  return sigma * std::sqrt(md + nd + std::sqrt(md * nd) * (k + 1.0 / k));
}

namespace {

double shrink_above_threshold(double d, double md, double nd, double s2) {
  const double a = d * d - (md + nd) * s2;
  const double disc = std::max(a * a - 4.0 * md * nd * s2 * s2, 0.0);
  return std::max((a + std::sqrt(disc)) / (2.0 * d), 0.0);
}

}  // namespace

double evb_shrink_value(double d, Index m, Index n, double sigma,
                        KappaForm form) {
  require_positive_sigma(sigma, "evb_shrink_value");
  if (!(d >= 0.0)) {
    throw Error(ErrorKind::Domain, "evb_shrink_value: d must be non-negative");
  }
  if (d < evb_threshold(m, n, sigma, form)) return 0.0;
  return shrink_above_threshold(d, static_cast<double>(m),
                                static_cast<double>(n), sigma * sigma);
}

ShrinkageResult evb_shrink_svd(SvdTriple svd, double sigma, KappaForm form) {
  require_positive_sigma(sigma, "evb_shrink");
  const Index m = svd.rows();
  const Index n = svd.cols();
  Vector shrunk = Vector::Zero(svd.values.size());
  if (m > 0 && n > 0) {
    const double threshold = evb_threshold(m, n, sigma, form);
    const double md = static_cast<double>(m);
    const double nd = static_cast<double>(n);
    for (Index r = 0; r < svd.values.size(); ++r) {
      const double d = svd.values[r];
      if (d >= threshold) shrunk[r] = shrink_above_threshold(d, md, nd, sigma * sigma);
    }
  }
  return finish(std::move(svd), std::move(shrunk), sigma, ShrinkageRule::Evb);
}

ShrinkageResult evb_shrink_matrix(const Eigen::Ref<const Matrix>& x,
                                  double sigma, KappaForm form) {
  require_positive_sigma(sigma, "evb_shrink_matrix");
  return evb_shrink_svd(thin_svd(x), sigma, form);
}

double noise_objective(const Eigen::Ref<const Vector>& singular_values,
                       Index m, Index n, double sigma, KappaForm form) {
  require_positive_sigma(sigma, "noise_objective");
  const NoiseShape shape = noise_shape(m, n, form);
  const double scale =
      1.0 / (static_cast<double>(std::max(m, n)) * sigma * sigma);
  double total = 0.0;
  for (Index r = 0; r < singular_values.size(); ++r) {
    const double d = singular_values[r];
    if (d > 0.0) total += psi1(d * d * scale, shape);
  }
  return total;
}

NoiseFitDiagnostics estimate_sigma_from_values(
    const Eigen::Ref<const Vector>& singular_values, Index m, Index n,
    KappaForm form) {
  if (m < 1 || n < 1) {
    throw Error(ErrorKind::Domain, "estimate_sigma: empty matrix");
  }
  NoiseProblem problem;
  problem.long_side = static_cast<double>(std::max(m, n));
  problem.shape = noise_shape(m, n, form);
  double d_max = 0.0;
  double d_min = std::numeric_limits<double>::infinity();
  for (Index r = 0; r < singular_values.size(); ++r) {
    const double d = singular_values[r];
    if (!std::isfinite(d)) {
      throw Error(ErrorKind::Data, "estimate_sigma: non-finite singular value");
    }
    if (d > 0.0) {
      problem.sq_values.push_back(d * d);
      d_max = std::max(d_max, d);
      d_min = std::min(d_min, d);
    }
  }
  if (problem.sq_values.empty()) {
    throw Error(ErrorKind::Domain,
                "estimate_sigma: matrix is identically zero");
  }

  // Grid over s = sigma / sigma_ref with sigma_ref = d_max / sqrt(M), so the
  // search path depends only on singular value ratios.
  const double sigma_ref = d_max / std::sqrt(problem.long_side);
  const double log_lo = std::log(d_min / d_max * 1e-2);
  const double log_hi = 0.0;
  std::vector<double> grid(kSigmaGridPoints);
  std::vector<double> values(kSigmaGridPoints);
  Index best = 0;
  for (int i = 0; i < kSigmaGridPoints; ++i) {
    const double t = log_lo + (log_hi - log_lo) * i / (kSigmaGridPoints - 1);
    grid[i] = sigma_ref * std::exp(t);
    values[i] = problem.objective(grid[i]);
    if (values[i] < values[best]) best = i;
  }
  int evaluations = kSigmaGridPoints;

  double sigma_hat = grid[best];
  double objective = values[best];

  // Refine by bisection on the sign of dPsi/dsigma inside the neighbouring
  // grid cells; Psi is smooth between indicator switches.
  double lo = grid[std::max<Index>(best - 1, 0)];
  double hi = grid[std::min<Index>(best + 1, kSigmaGridPoints - 1)];
  // Psi decreasing in sigma <=> sum x psi1'(x) > 0.
  if (problem.slope_sign_term(lo) > 0.0 && problem.slope_sign_term(hi) < 0.0) {
    evaluations += 2;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      ++evaluations;
      if (problem.slope_sign_term(mid) > 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
      if (hi - lo <= 1e-15 * hi) break;
    }
    const double refined = 0.5 * (lo + hi);
    const double refined_value = problem.objective(refined);
    ++evaluations;
    if (refined_value <= objective) {
      sigma_hat = refined;
      objective = refined_value;
    }
  }

  NoiseFitDiagnostics diag;
  diag.sigma_hat = sigma_hat;
  diag.objective_value = objective;
  diag.alpha = problem.shape.alpha;
  diag.grid_evaluations = evaluations;
  return diag;
}

NoiseFitDiagnostics estimate_sigma(const Eigen::Ref<const Matrix>& x,
                                   KappaForm form) {
  if (x.size() == 0) {
    throw Error(ErrorKind::Domain, "estimate_sigma: empty matrix");
  }
  if (!x.allFinite()) {
    throw Error(ErrorKind::Data, "estimate_sigma: matrix contains non-finite values");
  }
  Eigen::BDCSVD<Matrix> svd(x);
  if (svd.info() != Eigen::Success) {
    throw Error(ErrorKind::Numerical, "estimate_sigma: SVD did not converge");
  }
  return estimate_sigma_from_values(svd.singularValues(), x.rows(), x.cols(),
                                    form);
}

ShrinkageResult soft_threshold_svd(SvdTriple svd, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorKind::Domain, "soft_threshold: lambda must be >= 0");
  }
  Vector shrunk = (svd.values.array() - lambda).cwiseMax(0.0).matrix();
  return finish(std::move(svd), std::move(shrunk), 1.0, ShrinkageRule::Soft);
}

ShrinkageResult soft_threshold_matrix(const Eigen::Ref<const Matrix>& x,
                                      double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorKind::Domain, "soft_threshold: lambda must be >= 0");
  }
  return soft_threshold_svd(thin_svd(x), lambda);
}

ShrinkageResult hard_threshold_svd(SvdTriple svd, Index rank) {
  if (rank < 0 || rank > std::min(svd.rows(), svd.cols())) {
    throw Error(ErrorKind::Domain,
                "hard_threshold: rank " + std::to_string(rank) +
                    " exceeds min(rows, cols)");
  }
  Vector shrunk = svd.values;
  for (Index r = rank; r < shrunk.size(); ++r) shrunk[r] = 0.0;
  return finish(std::move(svd), std::move(shrunk), 1.0, ShrinkageRule::Hard);
}

ShrinkageResult hard_threshold_matrix(const Eigen::Ref<const Matrix>& x,
                                      Index rank) {
  if (rank < 0 || rank > std::min(x.rows(), x.cols())) {
    throw Error(ErrorKind::Domain,
                "hard_threshold: rank " + std::to_string(rank) +
                    " exceeds min(rows, cols)");
  }
  return hard_threshold_svd(thin_svd(x), rank);
}

ShrinkageResult oracle_operator(const Eigen::Ref<const Matrix>& x,
                                const Eigen::Ref<const Matrix>& s_true) {
  if (x.rows() != s_true.rows() || x.cols() != s_true.cols()) {
    throw Error(ErrorKind::ShapeMismatch,
                "oracle_operator: x and s_true differ in shape");
  }
  SvdTriple svd = thin_svd(x);
  const Matrix sv = s_true * svd.right;
  Vector shrunk(svd.values.size());
  for (Index r = 0; r < shrunk.size(); ++r) {
    shrunk[r] = std::max(svd.left.col(r).dot(sv.col(r)), 0.0);
  }
  return finish(std::move(svd), std::move(shrunk), 1.0, ShrinkageRule::Oracle);
}

SvdTriple ShrinkageResult::retained() const {
  const std::vector<Index> keep = positive_indices(shrunk_values);
  const Index k = static_cast<Index>(keep.size());
  SvdTriple out{Matrix(svd.rows(), k), Vector(k), Matrix(svd.cols(), k)};
  for (Index c = 0; c < k; ++c) {
    out.left.col(c) = svd.left.col(keep[c]);
    out.values[c] = shrunk_values[keep[c]];
    out.right.col(c) = svd.right.col(keep[c]);
  }
  return out;
}

Matrix ShrinkageResult::reconstruct() const {
  if (rank == 0) return Matrix::Zero(svd.rows(), svd.cols());
  return retained().reconstruct();
}

}  // namespace linkedmf
