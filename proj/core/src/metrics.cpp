#include "linkedmf/simbench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace linkedmf {

namespace {

void same_shape(const Matrix& a, const Matrix& b, const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::ShapeMismatch, std::string(who) + ": shapes differ");
  }
}

double ratio(double num, double den, const char* who) {
  if (!(den > 0.0)) throw Error(ErrorKind::UndefinedMetric, std::string(who) + ": zero denominator");
  return num / den;
}

double masked_sq(const Matrix& x, const Mask& mask) {
  return mask.select(x.array().square(), 0.0).sum();
}

}  // namespace

double rse(const Matrix& truth, const Matrix& estimate) {
  same_shape(truth, estimate, "rse");
  return ratio((truth - estimate).squaredNorm(), truth.squaredNorm(), "rse");
}

double onse(const Matrix& truth, const Matrix& estimate, const Matrix& oracle) {
  same_shape(truth, estimate, "onse");
  same_shape(truth, oracle, "onse");
  return ratio((truth - estimate).squaredNorm(), (truth - oracle).squaredNorm(), "onse");
}

double rdse(const std::vector<Matrix>& truth, const std::vector<Matrix>& estimate) {
  if (truth.size() != estimate.size()) throw Error(ErrorKind::ShapeMismatch, "rdse: module counts differ");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    same_shape(truth[k], estimate[k], "rdse");
    num += (truth[k] - estimate[k]).squaredNorm();
    den += truth[k].squaredNorm();
  }
  return ratio(num, den, "rdse");
}

double rse_miss(const Matrix& truth, const Matrix& estimate, const Mask& mask) {
  same_shape(truth, estimate, "rse_miss");
  if (mask.rows() != truth.rows() || mask.cols() != truth.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "rse_miss: mask shape differs");
  }
  return ratio(masked_sq(truth - estimate, mask), masked_sq(truth, mask), "rse_miss");
}

double rse_miss_blockwise(const std::vector<Matrix>& truth, const ModuleGrid& modules, const Matrix& estimate,
                          const Mask& row_missing, const Mask& col_missing) {
  if (static_cast<Index>(truth.size()) != modules.size()) {
    throw Error(ErrorKind::ShapeMismatch, "rse_miss_blockwise: one truth matrix per module required");
  }
  Matrix s_col = Matrix::Zero(estimate.rows(), estimate.cols());
  Matrix s_row = Matrix::Zero(estimate.rows(), estimate.cols());
  for (Index k = 0; k < modules.size(); ++k) {
    const Matrix& t = truth[static_cast<std::size_t>(k)];
    same_shape(t, estimate, "rse_miss_blockwise");
    if (modules.footprint(k).spans_all_cols()) s_col += t;
    if (modules.footprint(k).spans_all_rows()) s_row += t;
  }
  const double num = masked_sq(s_col - estimate, row_missing) + masked_sq(s_row - estimate, col_missing);
  const double den = masked_sq(s_col, row_missing) + masked_sq(s_row, col_missing);
  return ratio(num, den, "rse_miss_blockwise");
}

double mrse_miss(const Layout& layout, const Matrix& data, const Matrix& estimate, const Mask& mask) {
  same_shape(data, estimate, "mrse_miss");
  if (data.rows() != layout.rows() || data.cols() != layout.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "mrse_miss: data does not match layout");
  }
  double total = 0.0;
  int blocks = 0;
  for (Index i = 0; i < layout.row_sets(); ++i) {
    for (Index j = 0; j < layout.col_sets(); ++j) {
      const Index r0 = layout.row_offset(i);
      const Index c0 = layout.col_offset(j);
      const Index m = layout.row_size(i);
      const Index n = layout.col_size(j);
      const Mask mb = mask.block(r0, c0, m, n);
      if (!mb.any()) continue;
      const Matrix xb = data.block(r0, c0, m, n);
      total += ratio(masked_sq(xb - estimate.block(r0, c0, m, n), mb), masked_sq(xb, mb), "mrse_miss");
      ++blocks;
    }
  }
  if (blocks == 0) throw Error(ErrorKind::UndefinedMetric, "mrse_miss: no missing entries");
  return total / blocks;
}

Matrix evb_estimate(const Matrix& x, KappaForm form) {
  SvdTriple svd = thin_svd(x);
  const double sigma = estimate_sigma_from_values(svd.values, x.rows(), x.cols(), form).sigma_hat;
  return evb_shrink_svd(std::move(svd), sigma, form).reconstruct();
}

Matrix rmt_estimate(const Matrix& x, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::Domain, "rmt_estimate: sigma must be > 0");
  SvdTriple svd = thin_svd(x);
  const double big = static_cast<double>(std::max(x.rows(), x.cols()));
  const double beta = static_cast<double>(std::min(x.rows(), x.cols())) / big;
  const double scale = sigma * std::sqrt(big);
  Vector shrunk = Vector::Zero(svd.values.size());
  for (Index r = 0; r < svd.values.size(); ++r) {
    const double y = svd.values[r] / scale;
    if (y <= 1.0 + std::sqrt(beta)) continue;
    const double t = y * y - beta - 1.0;
    shrunk[r] = scale * std::sqrt(std::max(t * t - 4.0 * beta, 0.0)) / y;
  }
  return svd.left * shrunk.asDiagonal() * svd.right.transpose();
}

namespace {

// u_r^T S v_r for every component.
Vector projections(const SvdTriple& svd, const Matrix& truth) {
  return ((svd.left.transpose() * truth).cwiseProduct(svd.right.transpose())).rowwise().sum();
}

}  // namespace

Matrix ht_opt_estimate(const Matrix& x, const Matrix& truth) {
  same_shape(x, truth, "ht_opt_estimate");
  SvdTriple svd = thin_svd(x);
  const Vector a = projections(svd, truth);
  double err = 0.0;  // error minus ||S||^2
  double best = 0.0;
  Index best_rank = 0;
  for (Index r = 0; r < svd.values.size(); ++r) {
    const double d = svd.values[r];
    err += d * d - 2.0 * d * a[r];
    if (err < best) {
      best = err;
      best_rank = r + 1;
    }
  }
  return hard_threshold_svd(std::move(svd), best_rank).reconstruct();
}

Matrix nn_opt_estimate(const Matrix& x, const Matrix& truth) {
  same_shape(x, truth, "nn_opt_estimate");
  SvdTriple svd = thin_svd(x);
  if (svd.values.size() == 0 || svd.values[0] == 0.0) return Matrix::Zero(x.rows(), x.cols());
  const Vector a = projections(svd, truth);
  const double d1 = svd.values[0];
  double best = std::numeric_limits<double>::infinity();
  double best_lambda = d1;
  for (int g = 0; g < 50; ++g) {
    const double lambda = d1 * std::pow(10.0, -3.0 + 3.0 * g / 49.0);
    double err = 0.0;
    for (Index r = 0; r < svd.values.size(); ++r) {
      const double t = std::max(svd.values[r] - lambda, 0.0);
      err += t * t - 2.0 * t * a[r];
    }
    if (err < best) {
      best = err;
      best_lambda = lambda;
    }
  }
  return soft_threshold_svd(std::move(svd), best_lambda).reconstruct();
}

}  // namespace linkedmf
