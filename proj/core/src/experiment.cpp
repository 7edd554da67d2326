#include "linkedmf/simbench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

namespace linkedmf {

const char* to_string(Scenario s) noexcept {
  switch (s) {
    case Scenario::SingleFixedS2N: return "SingleFixedS2N";
    case Scenario::SingleHetero: return "SingleHetero";
    case Scenario::TwoLinked: return "TwoLinked";
    case Scenario::TwoLinkedHetero: return "TwoLinkedHetero";
    case Scenario::Bidim: return "Bidim";
    case Scenario::BidimImpute: return "BidimImpute";
    case Scenario::CvImpute: return "CvImpute";
  }
  return "unknown";
}

Scenario scenario_from_string(const std::string& name) {
  for (Scenario s : {Scenario::SingleFixedS2N, Scenario::SingleHetero, Scenario::TwoLinked,
                     Scenario::TwoLinkedHetero, Scenario::Bidim, Scenario::BidimImpute, Scenario::CvImpute}) {
    if (name == to_string(s)) return s;
  }
  throw Error(ErrorKind::Usage, "unknown scenario '" + name + "'");
}

std::vector<std::string> scenario_methods(Scenario s) {
  switch (s) {
    case Scenario::SingleFixedS2N: return {"OPT", "EVB", "HT", "NN"};
    case Scenario::SingleHetero: return {"OPT", "EVB", "HT", "NN", "RMT", "HT-OPT", "NN-OPT"};
    case Scenario::TwoLinked:
    case Scenario::TwoLinkedHetero: return {"EVB", "UNIFAC"};
    case Scenario::Bidim: return {"EB-BIDI", "BIDIFAC", "EB-SEP", "EB-JOINT"};
    case Scenario::BidimImpute: return {"EB-BIDI", "BIDIFAC", "EB-SEP", "EB-JOINT", "HT-OPT", "NN-OPT"};
    case Scenario::CvImpute:
      return {"EV-BIDIFAC", "BIDIFAC", "EB-SEP", "EB-JOINT", "NN-SEP", "NN-JOINT", "ZERO"};
  }
  return {};
}

std::vector<Index> ExperimentSpec::resolved_row_sizes() const {
  if (!row_sizes.empty()) return row_sizes;
  switch (scenario) {
    case Scenario::SingleFixedS2N:
    case Scenario::SingleHetero: return {1000};
    default: return {500, 500};
  }
}

std::vector<Index> ExperimentSpec::resolved_col_sizes() const {
  if (!col_sizes.empty()) return col_sizes;
  switch (scenario) {
    case Scenario::SingleFixedS2N:
    case Scenario::SingleHetero:
    case Scenario::TwoLinked:
    case Scenario::TwoLinkedHetero: return {100};
    default: return {50, 50};
  }
}

Index ExperimentSpec::resolved_rank() const {
  if (rank > 0) return rank;
  switch (scenario) {
    case Scenario::SingleFixedS2N:
    case Scenario::SingleHetero: return 10;
    case Scenario::TwoLinked:
    case Scenario::TwoLinkedHetero: return 5;
    default: return 2;
  }
}

std::vector<double> ExperimentSpec::resolved_c_grid() const {
  if (!c_grid.empty()) return c_grid;
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(std::exp(std::log(c_lo) + (std::log(c_hi) - std::log(c_lo)) * i / 9.0));
  return out;
}

bool ExperimentSpec::wants(const std::string& method) const {
  return methods.empty() || std::find(methods.begin(), methods.end(), method) != methods.end();
}

void ExperimentSpec::validate() const {
  if (replicates < 1) throw Error(ErrorKind::Usage, "replicates must be >= 1");
  if (max_iterations < 1) throw Error(ErrorKind::Usage, "max_iterations must be >= 1");
  if (!(rel_tolerance > 0.0)) throw Error(ErrorKind::Usage, "rel_tolerance must be > 0");
  if (!(c_lo > 0.0) || !(c_hi >= c_lo)) throw Error(ErrorKind::Usage, "c range must satisfy 0 < c_lo <= c_hi");
  for (double c : c_grid)
    if (!(c > 0.0) || !std::isfinite(c)) throw Error(ErrorKind::Usage, "c grid values must be > 0");
  if (!(signal_lo > 0.0) || !(signal_hi > signal_lo)) {
    throw Error(ErrorKind::Usage, "signal bounds must satisfy 0 < lo < hi");
  }
  for (double f : missing_fractions)
    if (!(f > 0.0) || !(f < 1.0)) throw Error(ErrorKind::Usage, "missing fractions must lie in (0, 1)");
  if (folds < 1) throw Error(ErrorKind::Usage, "folds must be >= 1");
  for (double f : {holdout.rows, holdout.cols, holdout.entries})
    if (!(f >= 0.0) || !(f < 1.0)) throw Error(ErrorKind::Usage, "hold-out fractions must lie in [0, 1)");
  const auto known = scenario_methods(scenario);
  for (const std::string& m : methods) {
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      throw Error(ErrorKind::Usage, "method '" + m + "' is not part of scenario " + to_string(scenario));
    }
  }
  const auto rows = resolved_row_sizes();
  const auto cols = resolved_col_sizes();
  const bool single = scenario == Scenario::SingleFixedS2N || scenario == Scenario::SingleHetero;
  if (single && (rows.size() != 1 || cols.size() != 1)) {
    throw Error(ErrorKind::Usage, "single-matrix scenarios take one row size and one column size");
  }
  const bool two = scenario == Scenario::TwoLinked || scenario == Scenario::TwoLinkedHetero;
  if (two && cols.size() != 1) throw Error(ErrorKind::Usage, "two-linked scenarios take one column set");
  Layout(rows, cols);  // validates sizes
  const Index r = resolved_rank();
  for (Index m : rows)
    for (Index n : cols)
      if (r > std::min(m, n)) throw Error(ErrorKind::Usage, "rank exceeds a block dimension");
}

// ---------------------------------------------------------------------------

void ResultTable::add(const std::string& setting, const std::string& method, Index replicate,
                      const std::string& metric, double value) {
  rows.push_back(ResultRow{scenario, setting, method, replicate, metric, value});
}

void ResultTable::append(const ResultTable& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  failures.insert(failures.end(), other.failures.begin(), other.failures.end());
}

std::vector<double> ResultTable::values(const std::string& setting, const std::string& method,
                                        const std::string& metric) const {
  std::vector<double> out;
  for (const ResultRow& r : rows)
    if (r.setting == setting && r.method == method && r.metric == metric) out.push_back(r.value);
  return out;
}

std::vector<std::string> ResultTable::settings() const {
  std::vector<std::string> out;
  for (const ResultRow& r : rows)
    if (std::find(out.begin(), out.end(), r.setting) == out.end()) out.push_back(r.setting);
  return out;
}

void ResultTable::write_tsv(std::ostream& out) const {
  out << "scenario\tsetting\tmethod\treplicate\tmetric\tvalue\n";
  char buf[64];
  for (const ResultRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    out << r.scenario << '\t' << r.setting << '\t' << r.method << '\t' << r.replicate << '\t' << r.metric << '\t'
        << buf << '\n';
  }
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw Error(ErrorKind::UndefinedMetric, "quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

std::vector<SummaryRow> ResultTable::summarize() const {
  std::vector<SummaryRow> out;
  std::vector<std::vector<double>> samples;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> where;
  for (const ResultRow& r : rows) {
    const auto key = std::make_tuple(r.setting, r.method, r.metric);
    auto it = where.find(key);
    if (it == where.end()) {
      it = where.emplace(key, out.size()).first;
      out.push_back(SummaryRow{r.scenario, r.setting, r.method, r.metric});
      samples.emplace_back();
    }
    if (!std::isnan(r.value)) samples[it->second].push_back(r.value);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    const auto& s = samples[g];
    out[g].count = static_cast<Index>(s.size());
    if (s.empty()) {
      out[g].mean = out[g].median = out[g].q1 = out[g].q3 = std::nan("");
      continue;
    }
    double sum = 0.0;
    for (double x : s) sum += x;
    out[g].mean = sum / static_cast<double>(s.size());
    out[g].median = quantile(s, 0.5);
    out[g].q1 = quantile(s, 0.25);
    out[g].q3 = quantile(s, 0.75);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt_setting(const char* key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s=%.6g", key, v);
  return buf;
}

std::string dims_string(const std::vector<Index>& rows, const std::vector<Index>& cols) {
  std::ostringstream s;
  for (std::size_t i = 0; i < rows.size(); ++i) s << (i ? "+" : "") << rows[i];
  s << 'x';
  for (std::size_t j = 0; j < cols.size(); ++j) s << (j ? "+" : "") << cols[j];
  return s.str();
}

/// Runs `task(i)` for i in [0, n) on up to `threads` workers and returns the
/// tables in index order.
std::vector<ResultTable> parallel_tasks(Index n, int threads, const std::function<ResultTable(Index)>& task) {
  std::vector<ResultTable> out(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<Index> next{0};
  const auto worker = [&] {
    for (Index i = next++; i < n; i = next++) {
      try {
        out[static_cast<std::size_t>(i)] = task(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const int workers = static_cast<int>(std::clamp<Index>(threads, 1, std::max<Index>(n, 1)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Records `fn()` as a failure instead of propagating.
void guarded(ResultTable& t, const std::string& setting, const std::string& method, Index rep,
             const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    t.failures.push_back(Failure{setting, method, rep, e.what()});
  }
}

FitOptions fit_options(const ExperimentSpec& spec) {
  FitOptions o;
  o.max_iterations = spec.max_iterations;
  o.rel_tolerance = spec.rel_tolerance;
  o.kappa_form = spec.kappa_form;
  o.init = spec.init;
  o.sigma_inflation = spec.sigma_inflation;
  o.rng_seed = spec.seed;
  return o;
}

FitOptions unit_sigma(FitOptions o, const Layout& layout) {
  o.sigma_mode = SigmaMode::UserSupplied;
  o.user_sigma = Matrix::Ones(layout.row_sets(), layout.col_sets());
  return o;
}

std::vector<Matrix> module_estimates(const Decomposition& d) {
  std::vector<Matrix> out;
  for (Index k = 0; k < d.size(); ++k) out.push_back(d.module_matrix(k));
  return out;
}

Mask random_entries(Index m, Index n, double fraction, Rng& rng) {
  Mask mask = Mask::Constant(m, n, false);
  const auto k = std::min<Index>(static_cast<Index>(std::llround(fraction * static_cast<double>(m * n))), m * n - 1);
  for (Index e : rng.sample(m * n, k)) mask(e % m, e / m) = true;
  return mask;
}

/// Per-block EVB fits assembled into one matrix (imputed where masked).
Matrix separate_evb(const BlockGrid& grid, const FitOptions& opts) {
  const Layout& layout = grid.layout();
  const Mask mask = grid.mask_or_empty();
  Matrix out(layout.rows(), layout.cols());
  const ModuleGrid single = enumerate_modules(1, 1);
  for (Index i = 0; i < layout.row_sets(); ++i) {
    for (Index j = 0; j < layout.col_sets(); ++j) {
      const Index r0 = layout.row_offset(i);
      const Index c0 = layout.col_offset(j);
      const Index m = layout.row_size(i);
      const Index n = layout.col_size(j);
      const Mask mb = mask.block(r0, c0, m, n);
      if (mb.any()) {
        const BlockGrid g(Layout({m}, {n}), grid.data().block(r0, c0, m, n), mb);
        out.block(r0, c0, m, n) = ev_bidifac_impute(g, single, opts).decomposition.total_structure();
      } else {
        out.block(r0, c0, m, n) = evb_estimate(grid.data().block(r0, c0, m, n), opts.kappa_form);
      }
    }
  }
  return out;
}

/// EVB on the concatenated matrix as one block.
Matrix joint_evb(const BlockGrid& grid, const FitOptions& opts) {
  const Layout& layout = grid.layout();
  if (grid.fully_observed()) return evb_estimate(grid.data(), opts.kappa_form);
  const BlockGrid g(Layout({layout.rows()}, {layout.cols()}), grid.data(), grid.mask_or_empty());
  return ev_bidifac_impute(g, enumerate_modules(1, 1), opts).decomposition.total_structure();
}

/// Single-matrix EM imputation with the tuning value that minimises the
/// imputation error of the true signal. Penalties are walked downwards and
/// ranks upwards, each fit starting from its neighbour, and the walk stops
/// once the error has risen for three consecutive grid points.
Matrix oracle_em(const Matrix& x, const Mask& mask, const Matrix& truth, bool soft, Index rank_hint,
                 FitOptions opts) {
  opts.rel_tolerance = std::max(opts.rel_tolerance, 1e-4);
  opts.max_iterations = std::min(opts.max_iterations, 200);
  double best = std::numeric_limits<double>::infinity();
  double last = best;
  int rising = 0;
  Matrix best_fit;
  Matrix previous = Matrix::Zero(x.rows(), x.cols());
  const auto consider = [&](const SingleImputation& fit) {
    const double e = rse_miss(truth, fit.structure, mask);
    if (e < best) {
      best = e;
      best_fit = fit.structure;
    }
    rising = e > last ? rising + 1 : 0;
    last = e;
    previous = fit.structure;
    return rising < 3;
  };
  if (soft) {
    const double d1 = thin_svd(mask.select(0.0, x)).values[0];
    for (int g = 19; g >= 0; --g) {
      if (!consider(em_impute_soft(x, mask, d1 * std::pow(10.0, -2.0 + 2.0 * g / 19.0), opts, &previous))) break;
    }
  } else {
    const Index top = std::min<Index>(2 * rank_hint, std::min(x.rows(), x.cols()));
    for (Index r = 1; r <= top; ++r) {
      if (!consider(em_impute_hard(x, mask, r, opts, &previous))) break;
    }
  }
  return best_fit;
}

// --- scenarios --------------------------------------------------------------

ResultTable run_single_fixed(const ExperimentSpec& spec, Index task, const std::vector<double>& grid) {
  ResultTable t;
  t.scenario = to_string(spec.scenario);
  const Index rep = task % spec.replicates;
  const double c = grid[static_cast<std::size_t>(task / spec.replicates)];
  const std::string setting = fmt_setting("c", c);
  const Index m = spec.resolved_row_sizes()[0];
  const Index n = spec.resolved_col_sizes()[0];
  const Index rank = spec.resolved_rank();
  const SingleSim sim = gen_single_fixed(c, derive_seed(spec.seed, static_cast<std::uint64_t>(task)), m, n, rank);
  const Matrix opt = oracle_operator(sim.x, sim.signal).reconstruct();
  const auto record = [&](const std::string& method, const std::function<Matrix()>& fit) {
    if (!spec.wants(method)) return;
    guarded(t, setting, method, rep, [&] {
      const Matrix est = fit();
      t.add(setting, method, rep, "rse", rse(sim.signal, est));
      t.add(setting, method, rep, "onse", onse(sim.signal, est, opt));
    });
  };
  record("OPT", [&] { return opt; });
  record("EVB", [&] { return evb_estimate(sim.x, spec.kappa_form); });
  record("HT", [&] { return hard_threshold_matrix(sim.x, rank).reconstruct(); });
  record("NN", [&] {
    return soft_threshold_matrix(sim.x, std::sqrt(static_cast<double>(m)) + std::sqrt(static_cast<double>(n)))
        .reconstruct();
  });
  return t;
}

ResultTable run_single_hetero(const ExperimentSpec& spec, Index rep) {
  ResultTable t;
  t.scenario = to_string(spec.scenario);
  const Index m = spec.resolved_row_sizes()[0];
  const Index n = spec.resolved_col_sizes()[0];
  const Index rank = spec.resolved_rank();
  const std::uint64_t seed = derive_seed(spec.seed, static_cast<std::uint64_t>(rep));
  const SingleSim sim = gen_hetero(seed, m, n, rank, spec.signal_lo, spec.signal_hi);
  const Matrix opt = oracle_operator(sim.x, sim.signal).reconstruct();
  const double opt_rse = rse(sim.signal, opt);
  const double nn_lambda = std::sqrt(static_cast<double>(m)) + std::sqrt(static_cast<double>(n));

  const std::string complete = "complete";
  const auto record = [&](const std::string& method, const std::function<Matrix()>& fit) {
    if (!spec.wants(method)) return;
    guarded(t, complete, method, rep, [&] {
      const Matrix est = fit();
      t.add(complete, method, rep, "rse", rse(sim.signal, est));
      t.add(complete, method, rep, "onse", onse(sim.signal, est, opt));
    });
  };
  record("OPT", [&] { return opt; });
  record("EVB", [&] { return evb_estimate(sim.x, spec.kappa_form); });
  record("HT", [&] { return hard_threshold_matrix(sim.x, rank).reconstruct(); });
  record("NN", [&] { return soft_threshold_matrix(sim.x, nn_lambda).reconstruct(); });
  record("RMT", [&] { return rmt_estimate(sim.x, 1.0); });
  record("HT-OPT", [&] { return ht_opt_estimate(sim.x, sim.signal); });
  record("NN-OPT", [&] { return nn_opt_estimate(sim.x, sim.signal); });

  const FitOptions opts = fit_options(spec);
  for (std::size_t f = 0; f < spec.missing_fractions.size(); ++f) {
    const double frac = spec.missing_fractions[f];
    const std::string setting = fmt_setting("miss", frac);
    Rng rng(derive_seed(seed, f + 1));
    const Mask mask = random_entries(m, n, frac, rng);
    const auto impute = [&](const std::string& method, bool oracle, const std::function<Matrix()>& fit) {
      if (!spec.wants(method) || (oracle && !spec.oracle_imputation)) return;
      guarded(t, setting, method, rep, [&] {
        const double e = rse_miss(sim.signal, fit(), mask);
        t.add(setting, method, rep, "rse_miss", e);
        t.add(setting, method, rep, "onse_miss", e / opt_rse);
      });
    };
    impute("EVB", false, [&] {
      const BlockGrid g(Layout({m}, {n}), sim.x, mask);
      return ev_bidifac_impute(g, enumerate_modules(1, 1), opts).decomposition.total_structure();
    });
    impute("NN", false, [&] { return em_impute_soft(sim.x, mask, nn_lambda, opts).structure; });
    impute("HT", false, [&] { return em_impute_hard(sim.x, mask, rank, opts).structure; });
    impute("HT-OPT", true, [&] { return oracle_em(sim.x, mask, sim.signal, false, rank, opts); });
    impute("NN-OPT", true, [&] { return oracle_em(sim.x, mask, sim.signal, true, rank, opts); });
  }
  return t;
}

ResultTable run_two_linked(const ExperimentSpec& spec, Index task, const std::vector<double>& grid) {
  ResultTable t;
  t.scenario = to_string(spec.scenario);
  const bool hetero = spec.scenario == Scenario::TwoLinkedHetero;
  const Index rep = hetero ? task : task % spec.replicates;
  SignalSpec signal;
  std::string setting = "hetero";
  if (!hetero) {
    signal.kind = SignalSpec::Kind::Fixed;
    signal.c = grid[static_cast<std::size_t>(task / spec.replicates)];
    setting = fmt_setting("c", signal.c);
  } else {
    signal.lo = spec.signal_lo;
    signal.hi = spec.signal_hi;
  }
  const Layout layout(spec.resolved_row_sizes(), spec.resolved_col_sizes());
  const ModuleGrid modules = enumerate_modules(layout.row_sets(), layout.col_sets());
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(task)));
  const LinkedSim sim = gen_linked(layout, modules, std::vector<bool>(static_cast<std::size_t>(modules.size()), true),
                                   spec.resolved_rank(), signal, rng);
  const FitOptions opts = fit_options(spec);
  const auto record = [&](const std::string& method, const std::function<Decomposition()>& fit) {
    if (!spec.wants(method)) return;
    guarded(t, setting, method, rep, [&] {
      const Decomposition d = fit();
      t.add(setting, method, rep, "rse", rse(sim.signal, d.total_structure()));
      t.add(setting, method, rep, "rdse", rdse(sim.truth, module_estimates(d)));
    });
  };
  record("EVB", [&] { return ev_bidifac(sim.grid, modules, opts); });
  record("UNIFAC", [&] {
    return bidifac_plus(sim.grid, modules, default_lambdas(modules, layout), unit_sigma(opts, layout));
  });
  return t;
}

LinkedSim bidim_sim(const ExperimentSpec& spec, std::uint64_t seed) {
  const Layout layout(spec.resolved_row_sizes(), spec.resolved_col_sizes());
  const ModuleGrid modules = enumerate_modules(layout.row_sets(), layout.col_sets());
  Rng rng(seed);
  std::vector<bool> active(static_cast<std::size_t>(modules.size()), false);
  for (Index k : rng.sample(modules.size(), std::min<Index>(5, modules.size())))
    active[static_cast<std::size_t>(k)] = true;
  SignalSpec signal;
  signal.lo = spec.signal_lo;
  signal.hi = spec.signal_hi;
  return gen_linked(layout, modules, active, spec.resolved_rank(), signal, rng);
}

void record_sparsity(ResultTable& t, const std::string& setting, const std::string& method, Index rep,
                     const LinkedSim& sim, const Decomposition& d) {
  double zero_truth = 0, zero_hit = 0, nonzero_truth = 0, nonzero_hit = 0;
  for (Index k = 0; k < d.size(); ++k) {
    if (sim.active[static_cast<std::size_t>(k)]) {
      ++nonzero_truth;
      if (!d.module_is_zero(k)) ++nonzero_hit;
    } else {
      ++zero_truth;
      if (d.module_is_zero(k)) ++zero_hit;
    }
  }
  t.add(setting, method, rep, "zero_truth_modules", zero_truth);
  t.add(setting, method, rep, "zero_truth_recovered", zero_hit);
  t.add(setting, method, rep, "nonzero_truth_modules", nonzero_truth);
  t.add(setting, method, rep, "nonzero_truth_detected", nonzero_hit);
}

ResultTable run_bidim(const ExperimentSpec& spec, Index rep) {
  ResultTable t;
  t.scenario = to_string(spec.scenario);
  const LinkedSim sim = bidim_sim(spec, derive_seed(spec.seed, static_cast<std::uint64_t>(rep)));
  const Layout& layout = sim.grid.layout();
  const FitOptions opts = fit_options(spec);
  const std::string setting = "full";
  const auto record = [&](const std::string& method, const std::function<Decomposition()>& fit) {
    if (!spec.wants(method)) return;
    guarded(t, setting, method, rep, [&] {
      const Decomposition d = fit();
      t.add(setting, method, rep, "rse", rse(sim.signal, d.total_structure()));
      t.add(setting, method, rep, "rdse", rdse(sim.truth, module_estimates(d)));
      record_sparsity(t, setting, method, rep, sim, d);
    });
  };
  record("EB-BIDI", [&] { return ev_bidifac(sim.grid, sim.modules, opts); });
  record("BIDIFAC", [&] {
    return bidifac_plus(sim.grid, sim.modules, default_lambdas(sim.modules, layout), unit_sigma(opts, layout));
  });
  const auto record_total = [&](const std::string& method, const std::function<Matrix()>& fit) {
    if (!spec.wants(method)) return;
    guarded(t, setting, method, rep, [&] { t.add(setting, method, rep, "rse", rse(sim.signal, fit())); });
  };
  record_total("EB-SEP", [&] { return separate_evb(sim.grid, opts); });
  record_total("EB-JOINT", [&] { return joint_evb(sim.grid, opts); });
  return t;
}

ResultTable run_bidim_impute(const ExperimentSpec& spec, Index rep) {
  ResultTable t;
  t.scenario = to_string(spec.scenario);
  const std::uint64_t seed = derive_seed(spec.seed, static_cast<std::uint64_t>(rep));
  const LinkedSim sim = bidim_sim(spec, seed);
  const Layout& layout = sim.grid.layout();
  const FitOptions opts = fit_options(spec);

  struct Setting {
    const char* name;
    HoldOutFractions fractions;
  };
  const Setting settings[] = {{"entrywise", {0.0, 0.0, 0.2}}, {"blockwise", {0.1, 0.1, 0.0}}};
  for (std::size_t s = 0; s < 2; ++s) {
    const std::string setting = settings[s].name;
    Rng rng(derive_seed(seed, s + 1));
    const HoldOut h = make_holdout(layout, settings[s].fractions, rng, false);
    const BlockGrid masked(layout, sim.grid.data(), h.mask);
    const auto score = [&](const Matrix& est) {
      return s == 0 ? rse_miss(sim.signal, est, h.mask)
                    : rse_miss_blockwise(sim.truth, sim.modules, est, h.row_missing, h.col_missing);
    };
    const auto record = [&](const std::string& method, bool oracle, const std::function<Matrix()>& fit) {
      if (!spec.wants(method) || (oracle && !spec.oracle_imputation)) return;
      guarded(t, setting, method, rep, [&] { t.add(setting, method, rep, "rse_miss", score(fit())); });
    };
    record("EB-BIDI", false,
           [&] { return ev_bidifac_impute(masked, sim.modules, opts).decomposition.total_structure(); });
    record("BIDIFAC", false, [&] {
      return bidifac_plus_impute(masked, sim.modules, default_lambdas(sim.modules, layout), unit_sigma(opts, layout))
          .decomposition.total_structure();
    });
    record("EB-SEP", false, [&] { return separate_evb(masked, opts); });
    record("EB-JOINT", false, [&] { return joint_evb(masked, opts); });
    record("HT-OPT", true, [&] {
      return oracle_em(sim.grid.data(), h.mask, sim.signal, false, spec.resolved_rank() * sim.modules.size(), opts);
    });
    record("NN-OPT", true, [&] { return oracle_em(sim.grid.data(), h.mask, sim.signal, true, 0, opts); });
  }
  return t;
}

/// Soft-impute with the noise-calibrated penalty sigma (sqrt(m) + sqrt(n)).
Matrix nn_calibrated(const Matrix& x, const Mask& mask, const FitOptions& opts) {
  const BlockGrid g(Layout({x.rows()}, {x.cols()}), x, mask);
  const double sigma = sigma_for_missing(g, analyze_missing(g.layout(), mask), opts.kappa_form, nullptr, opts.sigma_inflation).sigma(0, 0);
  const double lambda =
      sigma * (std::sqrt(static_cast<double>(x.rows())) + std::sqrt(static_cast<double>(x.cols())));
  return em_impute_soft(x, mask, lambda, opts).structure;
}

ResultTable run_cv_fold(const BlockGrid& grid, const ExperimentSpec& spec, Index fold) {
  ResultTable t;
  t.scenario = to_string(Scenario::CvImpute);
  const Layout& layout = grid.layout();
  const ModuleGrid modules = enumerate_modules(layout.row_sets(), layout.col_sets());
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(fold)));
  const HoldOut h = make_holdout(layout, spec.holdout, rng, true);
  Mask mask = h.mask;
  if (grid.has_mask()) mask = mask || *grid.mask();
  const BlockGrid masked(layout, grid.data(), mask);
  const FitOptions opts = fit_options(spec);
  const std::string setting = "fold";

  const auto score = [&](const std::string& method, const Matrix& est) {
    // Entries missing from the input itself have no held-out value to score.
    const Mask observed = grid.has_mask() ? Mask(!grid.mask()->array()) : Mask::Constant(layout.rows(), layout.cols(), true);
    const auto one = [&](const char* metric, const Mask& m) {
      const Mask scored = m && observed;
      t.add(setting, method, fold, metric, scored.any() ? mrse_miss(layout, grid.data(), est, scored) : std::nan(""));
    };
    one("mrse_miss", h.mask);
    one("mrse_miss_entry", h.entry_missing);
    one("mrse_miss_row", h.row_missing);
    one("mrse_miss_col", h.col_missing);
  };
  const auto record = [&](const std::string& method, const std::function<Matrix()>& fit) {
    if (!spec.wants(method)) return;
    guarded(t, setting, method, fold, [&] { score(method, fit()); });
  };
  record("EV-BIDIFAC", [&] { return ev_bidifac_impute(masked, modules, opts).decomposition.total_structure(); });
  record("BIDIFAC", [&] {
    const MissingSigma ms = sigma_for_missing(masked, analyze_missing(layout, mask), opts.kappa_form, nullptr,
                                              opts.sigma_inflation);
    FitOptions o = opts;
    o.sigma_mode = SigmaMode::UserSupplied;
    o.user_sigma = ms.sigma;
    return bidifac_plus_impute(masked, modules, default_lambdas(modules, layout), o).decomposition.total_structure();
  });
  record("EB-SEP", [&] { return separate_evb(masked, opts); });
  record("EB-JOINT", [&] { return joint_evb(masked, opts); });
  record("NN-SEP", [&] {
    Matrix out(layout.rows(), layout.cols());
    for (Index i = 0; i < layout.row_sets(); ++i) {
      for (Index j = 0; j < layout.col_sets(); ++j) {
        const Index r0 = layout.row_offset(i), c0 = layout.col_offset(j);
        const Index m = layout.row_size(i), n = layout.col_size(j);
        out.block(r0, c0, m, n) = nn_calibrated(grid.data().block(r0, c0, m, n), mask.block(r0, c0, m, n), opts);
      }
    }
    return out;
  });
  record("NN-JOINT", [&] { return nn_calibrated(grid.data(), mask, opts); });
  record("ZERO", [&] { return Matrix::Zero(layout.rows(), layout.cols()).eval(); });
  return t;
}

}  // namespace

ResultTable cv_impute(const BlockGrid& grid, const ExperimentSpec& spec, int threads) {
  spec.validate();
  ResultTable table;
  table.scenario = to_string(Scenario::CvImpute);
  table.seed = spec.seed;
  table.dims = dims_string(grid.layout().row_set_sizes(), grid.layout().col_set_sizes());
  for (const ResultTable& t :
       parallel_tasks(spec.folds, threads, [&](Index f) { return run_cv_fold(grid, spec, f); })) {
    table.append(t);
  }
  return table;
}

ResultTable run_experiment(const ExperimentSpec& spec, int threads) {
  spec.validate();
  ResultTable table;
  table.scenario = to_string(spec.scenario);
  table.seed = spec.seed;
  table.dims = dims_string(spec.resolved_row_sizes(), spec.resolved_col_sizes());
  const std::vector<double> grid = spec.resolved_c_grid();

  if (spec.scenario == Scenario::CvImpute) {
    const LinkedSim sim = bidim_sim(spec, derive_seed(spec.seed, 0));
    ResultTable t = cv_impute(sim.grid, spec, threads);
    table.append(t);
    return table;
  }

  Index tasks = spec.replicates;
  std::function<ResultTable(Index)> task;
  switch (spec.scenario) {
    case Scenario::SingleFixedS2N:
      tasks = spec.replicates * static_cast<Index>(grid.size());
      task = [&](Index i) { return run_single_fixed(spec, i, grid); };
      break;
    case Scenario::SingleHetero: task = [&](Index i) { return run_single_hetero(spec, i); }; break;
    case Scenario::TwoLinked:
      tasks = spec.replicates * static_cast<Index>(grid.size());
      task = [&](Index i) { return run_two_linked(spec, i, grid); };
      break;
    case Scenario::TwoLinkedHetero: task = [&](Index i) { return run_two_linked(spec, i, grid); }; break;
    case Scenario::Bidim: task = [&](Index i) { return run_bidim(spec, i); }; break;
    case Scenario::BidimImpute: task = [&](Index i) { return run_bidim_impute(spec, i); }; break;
    case Scenario::CvImpute: break;
  }
  for (const ResultTable& t : parallel_tasks(tasks, threads, task)) table.append(t);
  return table;
}

}  // namespace linkedmf
