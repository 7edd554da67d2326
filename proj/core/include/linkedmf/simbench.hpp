#ifndef LINKEDMF_SIMBENCH_HPP
#define LINKEDMF_SIMBENCH_HPP

#include "linkedmf/decompose.hpp"
#include "linkedmf/impute.hpp"
#include "linkedmf/linked.hpp"
#include "linkedmf/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace linkedmf {

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

struct SingleSim {
  Matrix x;
  Matrix signal;
};

/// X = c U V^T + E with standard normal U (m x rank), V (n x rank), E.
/// Draw order: U, V, E.
SingleSim gen_single_fixed(double c, std::uint64_t seed, Index m = 1000, Index n = 100,
                           Index rank = 10);

/// Rank-`rank` signal with orthonormal factors taken from a product of
/// Gaussian matrices and singular values log-uniform on
/// [lo sqrt(mn), hi sqrt(mn)], sorted descending.
Matrix het_signal(Rng& rng, Index m, Index n, Index rank, double lo, double hi);

/// het_signal plus standard normal noise.
SingleSim gen_hetero(std::uint64_t seed, Index m = 1000, Index n = 100, Index rank = 10,
                     double lo = 0.05, double hi = 1.0);

struct LinkedSim {
  BlockGrid grid;
  ModuleGrid modules;
  /// Per module, `M x N` and zero outside its footprint.
  std::vector<Matrix> truth;
  std::vector<bool> active;
  Matrix signal;
};

/// How an active module's signal is drawn.
struct SignalSpec {
  enum class Kind { Fixed, Hetero } kind = Kind::Hetero;
  double c = 1.0;      // Fixed: c U V^T
  double lo = 0.05;    // Hetero: bounds relative to sqrt(rows * cols)
  double hi = 1.0;
};

/// Draws every active module on its footprint (modules in grid order), then
/// standard normal noise for the whole concatenated matrix.
LinkedSim gen_linked(const Layout& layout, const ModuleGrid& modules, const std::vector<bool>& active,
                     Index rank, const SignalSpec& signal, Rng& rng);

/// Two row sets of `rows_each` sharing `cols` columns: one shared module and
/// one specific module per row set, all of rank `rank`.
LinkedSim gen_two_linked(const SignalSpec& signal, std::uint64_t seed, Index rows_each = 500,
                         Index cols = 100, Index rank = 5);

/// 2 x 2 grid with all 9 modules enumerated; `active_count` of them, chosen
/// uniformly, get rank-`rank` heterogeneous structure and the rest are zero.
LinkedSim gen_bidim(std::uint64_t seed, Index rows_each = 500, Index cols_each = 50,
                    Index rank = 2, Index active_count = 5);

// ---------------------------------------------------------------------------
// Held-out masks
// ---------------------------------------------------------------------------

struct HoldOut {
  Mask mask;         // union of the three below
  Mask row_missing;  // entries in a held-out row of their block
  Mask col_missing;  // entries in a held-out column of their block
  Mask entry_missing;
};

struct HoldOutFractions {
  double rows = 0.0;     // fraction of each block's rows
  double cols = 0.0;     // fraction of each block's columns
  double entries = 0.0;  // fraction of each block's entries left after rows/columns
};

/// Independently per block: round(rows * M_i) rows, round(cols * N_j)
/// columns, then round(entries * remaining) of the remaining entries. When
/// `keep_anchor` is set the first row, first column and first entry of each
/// block are never held out, so no collection of such masks can cover a
/// block.
HoldOut make_holdout(const Layout& layout, const HoldOutFractions& fractions, Rng& rng,
                     bool keep_anchor);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double rse(const Matrix& truth, const Matrix& estimate);
double onse(const Matrix& truth, const Matrix& estimate, const Matrix& oracle);
/// Module-wise relative error; `truth` and `estimate` pair up by index.
double rdse(const std::vector<Matrix>& truth, const std::vector<Matrix>& estimate);
double rse_miss(const Matrix& truth, const Matrix& estimate, const Mask& mask);
/// Row-missing entries are scored against the column-spanning truth (modules
/// covering every column set), column-missing entries against the
/// row-spanning truth. Entries in both count in both sums.
double rse_miss_blockwise(const std::vector<Matrix>& truth, const ModuleGrid& modules,
                          const Matrix& estimate, const Mask& row_missing, const Mask& col_missing);
/// Mean over blocks that contain masked entries of each block's relative
/// squared error against the (held-out) data.
double mrse_miss(const Layout& layout, const Matrix& data, const Matrix& estimate, const Mask& mask);

// ---------------------------------------------------------------------------
// Single-matrix estimators used by the experiments
// ---------------------------------------------------------------------------

/// EVB shrinkage at the empirical noise scale, from one SVD.
Matrix evb_estimate(const Matrix& x, KappaForm form = KappaForm::AsPrinted);
/// Frobenius-optimal asymptotic shrinkage with known noise scale.
Matrix rmt_estimate(const Matrix& x, double sigma);
/// Best hard-threshold rank in [0, min(m, n)] against the true signal.
Matrix ht_opt_estimate(const Matrix& x, const Matrix& truth);
/// Best soft threshold on a 50-point log grid over [1e-3 d_1, d_1].
Matrix nn_opt_estimate(const Matrix& x, const Matrix& truth);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

enum class Scenario {
  SingleFixedS2N,
  SingleHetero,
  TwoLinked,
  TwoLinkedHetero,
  Bidim,
  BidimImpute,
  CvImpute,
};

const char* to_string(Scenario s) noexcept;
Scenario scenario_from_string(const std::string& name);

struct ExperimentSpec {
  Scenario scenario = Scenario::SingleFixedS2N;
  Index replicates = 20;
  std::uint64_t seed = 0;
  /// Row/column set sizes; empty means the scenario default.
  std::vector<Index> row_sizes;
  std::vector<Index> col_sizes;
  /// 0 means the scenario default.
  Index rank = 0;
  /// Signal multipliers for fixed-signal scenarios; empty means 10 points
  /// log-uniformly spaced over [c_lo, c_hi].
  std::vector<double> c_grid;
  double c_lo = 0.05;
  double c_hi = 1.0;
  /// Heterogeneous singular value bounds relative to sqrt(rows * cols).
  double signal_lo = 0.05;
  double signal_hi = 1.0;
  /// SingleHetero: also run EM imputation at each fraction.
  std::vector<double> missing_fractions;
  /// Run rank/penalty-oracle EM imputations (one EM fit per grid point).
  bool oracle_imputation = false;
  /// Empty runs every method of the scenario.
  std::vector<std::string> methods;

  // CvImpute
  int folds = 20;
  HoldOutFractions holdout{0.05, 0.05, 0.05};

  int max_iterations = 500;
  double rel_tolerance = 1e-6;
  KappaForm kappa_form = KappaForm::AsPrinted;
  Initialization init = Initialization::BidifacPlus;
  SigmaInflation sigma_inflation = SigmaInflation::AsPrinted;

  std::vector<Index> resolved_row_sizes() const;
  std::vector<Index> resolved_col_sizes() const;
  Index resolved_rank() const;
  std::vector<double> resolved_c_grid() const;
  bool wants(const std::string& method) const;
  void validate() const;
};

/// Method names each scenario can run.
std::vector<std::string> scenario_methods(Scenario s);

struct ResultRow {
  std::string scenario;
  std::string setting;
  std::string method;
  Index replicate = 0;
  std::string metric;
  double value = 0.0;
};

struct Failure {
  std::string setting;
  std::string method;
  Index replicate = 0;
  std::string message;
};

struct SummaryRow {
  std::string scenario;
  std::string setting;
  std::string method;
  std::string metric;
  Index count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

class ResultTable {
 public:
  std::string scenario;
  std::uint64_t seed = 0;
  std::string dims;
  std::vector<ResultRow> rows;
  std::vector<Failure> failures;

  void add(const std::string& setting, const std::string& method, Index replicate,
           const std::string& metric, double value);
  void append(const ResultTable& other);

  /// Values of one (setting, method, metric) cell across replicates.
  std::vector<double> values(const std::string& setting, const std::string& method,
                             const std::string& metric) const;
  /// Settings in first-appearance order.
  std::vector<std::string> settings() const;

  /// Tab-separated with a header; values printed with 17 significant digits.
  void write_tsv(std::ostream& out) const;
  /// Grouped by (setting, method, metric) in first-appearance order; NaN
  /// values are skipped.
  std::vector<SummaryRow> summarize() const;
};

double median(std::vector<double> v);
/// Linear-interpolation quantile (type 7).
double quantile(std::vector<double> v, double p);

/// Runs every replicate of `spec`. Each replicate draws from its own seed
/// stream and results are stored in replicate order, so the table does not
/// depend on `threads`.
ResultTable run_experiment(const ExperimentSpec& spec, int threads = 1);

/// Held-out imputation benchmark on `grid` (modules enumerated). Per fold,
/// rows, columns and entries of every block are withheld and imputed by each
/// method; MRSE_miss is reported overall and per missingness type.
ResultTable cv_impute(const BlockGrid& grid, const ExperimentSpec& spec, int threads = 1);

}  // namespace linkedmf

#endif  // LINKEDMF_SIMBENCH_HPP
