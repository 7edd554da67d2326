#include "linkedmf/simbench.hpp"

#include <algorithm>
#include <cmath>

namespace linkedmf {

SingleSim gen_single_fixed(double c, std::uint64_t seed, Index m, Index n, Index rank) {
  if (!(c > 0.0) || !std::isfinite(c)) throw Error(ErrorKind::Domain, "signal multiplier c must be > 0");
  if (m < 1 || n < 1 || rank < 0) throw Error(ErrorKind::Domain, "invalid dimensions");
  Rng rng(seed);
  const Matrix u = rng.normal_matrix(m, rank);
  const Matrix v = rng.normal_matrix(n, rank);
  SingleSim out;
  out.signal = c * u * v.transpose();
  out.x = out.signal + rng.normal_matrix(m, n);
  return out;
}

Matrix het_signal(Rng& rng, Index m, Index n, Index rank, double lo, double hi) {
  if (!(lo > 0.0) || !(hi > lo)) throw Error(ErrorKind::Domain, "het_signal needs 0 < lo < hi");
  if (rank < 1 || rank > std::min(m, n)) throw Error(ErrorKind::Domain, "rank must lie in [1, min(m, n)]");
  const Matrix u = rng.normal_matrix(m, rank);
  const Matrix v = rng.normal_matrix(n, rank);
  Vector d(rank);
  const double scale = std::sqrt(static_cast<double>(m) * static_cast<double>(n));
  for (Index r = 0; r < rank; ++r) d[r] = rng.log_uniform(lo * scale, hi * scale);
  std::sort(d.begin(), d.end(), std::greater<>());

  // Singular vectors of U V^T via QR of each factor and an r x r SVD.
  Eigen::HouseholderQR<Matrix> qu(u);
  Eigen::HouseholderQR<Matrix> qv(v);
  const Matrix q_u = qu.householderQ() * Matrix::Identity(m, rank);
  const Matrix q_v = qv.householderQ() * Matrix::Identity(n, rank);
  const Matrix r_u = qu.matrixQR().topRows(rank).triangularView<Eigen::Upper>();
  const Matrix r_v = qv.matrixQR().topRows(rank).triangularView<Eigen::Upper>();
  const SvdTriple core = thin_svd(r_u * r_v.transpose());
  return (q_u * core.left) * d.asDiagonal() * (q_v * core.right).transpose();
}

SingleSim gen_hetero(std::uint64_t seed, Index m, Index n, Index rank, double lo, double hi) {
  Rng rng(seed);
  SingleSim out;
  out.signal = het_signal(rng, m, n, rank, lo, hi);
  out.x = out.signal + rng.normal_matrix(m, n);
  return out;
}

LinkedSim gen_linked(const Layout& layout, const ModuleGrid& modules, const std::vector<bool>& active,
                     Index rank, const SignalSpec& signal, Rng& rng) {
  modules.check_compatible(layout);
  if (static_cast<Index>(active.size()) != modules.size()) {
    throw Error(ErrorKind::ShapeMismatch, "one active flag per module required");
  }
  LinkedSim out;
  out.modules = modules;
  out.active = active;
  out.signal = Matrix::Zero(layout.rows(), layout.cols());
  for (Index k = 0; k < modules.size(); ++k) {
    const Footprint& fp = modules.footprint(k);
    if (!active[static_cast<std::size_t>(k)]) {
      out.truth.push_back(Matrix::Zero(layout.rows(), layout.cols()));
      continue;
    }
    const FootprintIndices idx = footprint_indices(layout, fp);
    const auto m = static_cast<Index>(idx.rows.size());
    const auto n = static_cast<Index>(idx.cols.size());
    Matrix sub;
    if (signal.kind == SignalSpec::Kind::Fixed) {
      if (!(signal.c > 0.0)) throw Error(ErrorKind::Domain, "signal multiplier c must be > 0");
      const Matrix u = rng.normal_matrix(m, rank);
      const Matrix v = rng.normal_matrix(n, rank);
      sub = signal.c * u * v.transpose();
    } else {
      sub = het_signal(rng, m, n, rank, signal.lo, signal.hi);
    }
    out.truth.push_back(embed_submatrix(sub, layout, fp));
    out.signal += out.truth.back();
  }
  out.grid = BlockGrid(layout, out.signal + rng.normal_matrix(layout.rows(), layout.cols()));
  return out;
}

LinkedSim gen_two_linked(const SignalSpec& signal, std::uint64_t seed, Index rows_each, Index cols,
                         Index rank) {
  const Layout layout({rows_each, rows_each}, {cols});
  const ModuleGrid modules = enumerate_modules(2, 1);
  Rng rng(seed);
  return gen_linked(layout, modules, std::vector<bool>(static_cast<std::size_t>(modules.size()), true), rank,
                    signal, rng);
}

LinkedSim gen_bidim(std::uint64_t seed, Index rows_each, Index cols_each, Index rank, Index active_count) {
  const Layout layout({rows_each, rows_each}, {cols_each, cols_each});
  const ModuleGrid modules = enumerate_modules(2, 2);
  if (active_count < 0 || active_count > modules.size()) {
    throw Error(ErrorKind::Domain, "active module count out of range");
  }
  Rng rng(seed);
  std::vector<bool> active(static_cast<std::size_t>(modules.size()), false);
  for (Index k : rng.sample(modules.size(), active_count)) active[static_cast<std::size_t>(k)] = true;
  return gen_linked(layout, modules, active, rank, SignalSpec{}, rng);
}

HoldOut make_holdout(const Layout& layout, const HoldOutFractions& f, Rng& rng, bool keep_anchor) {
  for (double x : {f.rows, f.cols, f.entries}) {
    if (!(x >= 0.0) || !(x < 1.0)) throw Error(ErrorKind::Domain, "hold-out fractions must lie in [0, 1)");
  }
  const Index m_all = layout.rows();
  const Index n_all = layout.cols();
  HoldOut h{Mask::Constant(m_all, n_all, false), Mask::Constant(m_all, n_all, false),
            Mask::Constant(m_all, n_all, false), Mask::Constant(m_all, n_all, false)};
  const Index skip = keep_anchor ? 1 : 0;
  const auto count = [](double frac, Index size) { return static_cast<Index>(std::llround(frac * static_cast<double>(size))); };

  for (Index i = 0; i < layout.row_sets(); ++i) {
    for (Index j = 0; j < layout.col_sets(); ++j) {
      const Index r0 = layout.row_offset(i);
      const Index c0 = layout.col_offset(j);
      const Index m = layout.row_size(i);
      const Index n = layout.col_size(j);
      const Index n_rows = std::min(count(f.rows, m), m - skip - 1);
      const Index n_cols = std::min(count(f.cols, n), n - skip - 1);
      std::vector<bool> row_out(static_cast<std::size_t>(m), false);
      std::vector<bool> col_out(static_cast<std::size_t>(n), false);
      if (n_rows > 0) {
        for (Index r : rng.sample(m - skip, n_rows)) {
          row_out[static_cast<std::size_t>(r + skip)] = true;
          h.row_missing.block(r0 + r + skip, c0, 1, n).setConstant(true);
        }
      }
      if (n_cols > 0) {
        for (Index c : rng.sample(n - skip, n_cols)) {
          col_out[static_cast<std::size_t>(c + skip)] = true;
          h.col_missing.block(r0, c0 + c + skip, m, 1).setConstant(true);
        }
      }
      std::vector<Index> remaining;  // column-major positions within the block
      for (Index c = 0; c < n; ++c) {
        if (col_out[static_cast<std::size_t>(c)]) continue;
        for (Index r = 0; r < m; ++r)
          if (!row_out[static_cast<std::size_t>(r)]) remaining.push_back(c * m + r);
      }
      const Index n_entries =
          std::min(count(f.entries, static_cast<Index>(remaining.size())),
                   static_cast<Index>(remaining.size()) - 1);
      if (keep_anchor) remaining.erase(remaining.begin());  // position (0, 0)
      if (n_entries > 0) {
        for (Index e : rng.sample(static_cast<Index>(remaining.size()), n_entries)) {
          const Index pos = remaining[static_cast<std::size_t>(e)];
          h.entry_missing(r0 + pos % m, c0 + pos / m) = true;
        }
      }
    }
  }
  h.mask = h.row_missing || h.col_missing || h.entry_missing;
  return h;
}

}  // namespace linkedmf
