#include "linkedmf/cli/commands.hpp"

#include "linkedmf/cli/io.hpp"
#include "linkedmf/cli/manifest.hpp"
#include "linkedmf/decompose.hpp"
#include "linkedmf/impute.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <unistd.h>

namespace linkedmf::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage: return kUsage;
    case ErrorKind::Numerical: return kNumerical;
    case ErrorKind::Domain:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::Data:
    case ErrorKind::UndefinedMetric: return kData;
  }
  return kData;
}

// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void spec_error(const std::string& what) { throw Error(ErrorKind::Usage, "experiment spec: " + what); }

template <class T>
T field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    spec_error(std::string("bad value for '") + key + "'");
  }
}

}  // namespace

ExperimentSpec experiment_spec_from_json(const json& j) {
  if (!j.is_object()) spec_error("top level must be an object");
  if (!j.contains("scenario")) spec_error("'scenario' is required");
  ExperimentSpec s;
  for (const auto& [key, v] : j.items()) {
    if (key == "scenario") {
      s.scenario = scenario_from_string(field<std::string>(j, "scenario"));
    } else if (key == "replicates") {
      s.replicates = field<Index>(j, "replicates");
    } else if (key == "seed") {
      if (!v.is_number_unsigned()) spec_error("'seed' must be a non-negative integer");
      s.seed = v.get<std::uint64_t>();
    } else if (key == "row_sizes") {
      s.row_sizes = field<std::vector<Index>>(j, "row_sizes");
    } else if (key == "col_sizes") {
      s.col_sizes = field<std::vector<Index>>(j, "col_sizes");
    } else if (key == "rank") {
      s.rank = field<Index>(j, "rank");
    } else if (key == "c_grid") {
      s.c_grid = field<std::vector<double>>(j, "c_grid");
    } else if (key == "c_lo") {
      s.c_lo = field<double>(j, "c_lo");
    } else if (key == "c_hi") {
      s.c_hi = field<double>(j, "c_hi");
    } else if (key == "signal_lo") {
      s.signal_lo = field<double>(j, "signal_lo");
    } else if (key == "signal_hi") {
      s.signal_hi = field<double>(j, "signal_hi");
    } else if (key == "missing_fractions") {
      s.missing_fractions = field<std::vector<double>>(j, "missing_fractions");
    } else if (key == "oracle_imputation") {
      s.oracle_imputation = field<bool>(j, "oracle_imputation");
    } else if (key == "methods") {
      s.methods = field<std::vector<std::string>>(j, "methods");
    } else if (key == "folds") {
      s.folds = field<int>(j, "folds");
    } else if (key == "holdout") {
      if (!v.is_object()) spec_error("'holdout' must be an object");
      for (const auto& [hk, hv] : v.items()) {
        if (!hv.is_number()) spec_error("holdout fractions must be numbers");
        if (hk == "rows") s.holdout.rows = hv.get<double>();
        else if (hk == "cols") s.holdout.cols = hv.get<double>();
        else if (hk == "entries") s.holdout.entries = hv.get<double>();
        else spec_error("unknown holdout key '" + hk + "'");
      }
    } else if (key == "max_iterations") {
      s.max_iterations = field<int>(j, "max_iterations");
    } else if (key == "rel_tolerance") {
      s.rel_tolerance = field<double>(j, "rel_tolerance");
    } else if (key == "kappa_form") {
      s.kappa_form = kappa_form_from_string(field<std::string>(j, "kappa_form"));
    } else if (key == "init") {
      s.init = initialization_from_string(field<std::string>(j, "init"));
    } else if (key == "sigma_inflation") {
      s.sigma_inflation = sigma_inflation_from_string(field<std::string>(j, "sigma_inflation"));
    } else {
      spec_error("unknown key '" + key + "'");
    }
  }
  return s;
}

ordered_json experiment_spec_to_json(const ExperimentSpec& s) {
  ordered_json j;
  j["scenario"] = to_string(s.scenario);
  j["replicates"] = s.replicates;
  j["seed"] = s.seed;
  j["row_sizes"] = s.resolved_row_sizes();
  j["col_sizes"] = s.resolved_col_sizes();
  j["rank"] = s.resolved_rank();
  j["c_grid"] = s.resolved_c_grid();
  j["signal_lo"] = s.signal_lo;
  j["signal_hi"] = s.signal_hi;
  j["missing_fractions"] = s.missing_fractions;
  j["oracle_imputation"] = s.oracle_imputation;
  j["methods"] = s.methods.empty() ? scenario_methods(s.scenario) : s.methods;
  j["folds"] = s.folds;
  j["holdout"] = {{"rows", s.holdout.rows}, {"cols", s.holdout.cols}, {"entries", s.holdout.entries}};
  j["max_iterations"] = s.max_iterations;
  j["rel_tolerance"] = s.rel_tolerance;
  j["kappa_form"] = to_string(s.kappa_form);
  j["init"] = to_string(s.init);
  j["sigma_inflation"] = to_string(s.sigma_inflation);
  return j;
}

ordered_json summary_to_json(const ResultTable& table) {
  ordered_json j;
  j["scenario"] = table.scenario;
  j["seed"] = table.seed;
  j["dims"] = table.dims;
  j["failures"] = table.failures.size();
  ordered_json rows = ordered_json::array();
  for (const SummaryRow& r : table.summarize()) {
    ordered_json row;
    row["setting"] = r.setting;
    row["method"] = r.method;
    row["metric"] = r.metric;
    row["count"] = r.count;
    if (r.count > 0) {
      row["mean"] = r.mean;
      row["median"] = r.median;
      row["q1"] = r.q1;
      row["q3"] = r.q3;
      row["iqr"] = r.q3 - r.q1;
    }
    rows.push_back(std::move(row));
  }
  j["summary"] = std::move(rows);
  return j;
}

Matrix block_row_means(const BlockGrid& grid) {
  const Layout& layout = grid.layout();
  const Mask mask = grid.mask_or_empty();
  Matrix means = Matrix::Zero(layout.rows(), layout.col_sets());
  for (Index j = 0; j < layout.col_sets(); ++j) {
    for (Index r = 0; r < layout.rows(); ++r) {
      double sum = 0.0;
      Index n = 0;
      for (Index c = layout.col_offset(j); c < layout.col_offset(j) + layout.col_size(j); ++c) {
        if (mask(r, c)) continue;
        sum += grid.data()(r, c);
        ++n;
      }
      if (n > 0) means(r, j) = sum / static_cast<double>(n);
    }
  }
  return means;
}

void shift_by_row_means(Matrix& x, const Layout& layout, const Matrix& means, double sign) {
  for (Index j = 0; j < layout.col_sets(); ++j)
    x.middleCols(layout.col_offset(j), layout.col_size(j)).colwise() += sign * means.col(j);
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kMarker = ".linkedmf-output";

}  // namespace

StagedDir::StagedDir(fs::path target) : target_(std::move(target)) {
  if (target_.empty()) throw Error(ErrorKind::Usage, "--out must name a directory");
  if (fs::exists(target_)) {
    if (!fs::is_directory(target_)) throw Error(ErrorKind::Usage, target_.string() + " exists and is not a directory");
    if (!fs::is_empty(target_) && !fs::exists(target_ / kMarker)) {
      throw Error(ErrorKind::Usage, target_.string() + " is not empty and was not written by linkedmf; refusing to overwrite");
    }
  }
  fs::path abs = fs::absolute(target_).lexically_normal();
  if (abs.filename().empty()) abs = abs.parent_path();
  tmp_ = abs.parent_path() / ("." + abs.filename().string() + ".tmp-" + std::to_string(::getpid()));
  fs::remove_all(tmp_);
  fs::create_directories(tmp_);
  std::ofstream(tmp_ / kMarker) << "linkedmf\n";
}

StagedDir::~StagedDir() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(tmp_, ec);
  }
}

void StagedDir::commit() {
  if (fs::exists(target_)) fs::remove_all(target_);
  fs::rename(tmp_, target_);
  committed_ = true;
}

// ---------------------------------------------------------------------------

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::optional<int> max_iter;
  bool center = false;
  int threads = 1;
  std::optional<std::string> kappa_form;
  std::optional<std::string> init;
  std::optional<std::string> sigma_inflation;
};

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Data, "failed writing " + path.string());
}

std::vector<int> flags(const std::vector<bool>& v) {
  std::vector<int> out;
  for (bool b : v) out.push_back(b ? 1 : 0);
  return out;
}

std::vector<std::vector<double>> rows_of(const Matrix& m) {
  std::vector<std::vector<double>> out;
  for (Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row;
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

FitOptions fit_options(const Manifest& m, const Globals& g) {
  FitOptions o;
  if (m.tol) o.rel_tolerance = *m.tol;
  if (m.max_iter) o.max_iterations = *m.max_iter;
  if (m.seed) o.rng_seed = *m.seed;
  if (m.kappa_form) o.kappa_form = *m.kappa_form;
  if (m.init) o.init = *m.init;
  if (m.sigma_inflation) o.sigma_inflation = *m.sigma_inflation;
  if (m.sigma) {
    o.sigma_mode = SigmaMode::UserSupplied;
    o.user_sigma = *m.sigma;
  }
  if (g.tol) o.rel_tolerance = *g.tol;
  if (g.max_iter) o.max_iterations = *g.max_iter;
  if (g.seed) o.rng_seed = *g.seed;
  if (g.kappa_form) o.kappa_form = kappa_form_from_string(*g.kappa_form);
  if (g.init) o.init = initialization_from_string(*g.init);
  if (g.sigma_inflation) o.sigma_inflation = sigma_inflation_from_string(*g.sigma_inflation);
  return o;
}

/// Module files, sigma and the shared part of the summary.
ordered_json write_decomposition(const fs::path& dir, const Decomposition& d, const FitOptions& opts) {
  const Layout& layout = d.layout();
  std::vector<double> energy;
  double total = 0.0;
  for (Index k = 0; k < d.size(); ++k) {
    energy.push_back(d.module_submatrix(k).squaredNorm());
    total += energy.back();
  }
  ordered_json modules = ordered_json::array();
  for (Index k = 0; k < d.size(); ++k) {
    const std::string file = "module_" + std::to_string(k + 1) + ".tsv";
    write_matrix(dir / file, d.module_submatrix(k));
    ordered_json mj;
    mj["index"] = k + 1;
    mj["row_sets"] = flags(d.modules().footprint(k).row_sets);
    mj["col_sets"] = flags(d.modules().footprint(k).col_sets);
    mj["rank"] = d.module_rank(k);
    mj["zero"] = d.module_is_zero(k);
    mj["variance_explained_pct"] = total > 0.0 ? 100.0 * energy[static_cast<std::size_t>(k)] / total : 0.0;
    mj["file"] = file;
    modules.push_back(std::move(mj));
  }
  write_matrix(dir / "sigma.tsv", d.sigma());

  const UniquenessReport u = check_uniqueness(d);
  ordered_json uj;
  uj["row_sets_ok"] = u.condition2_ok;
  uj["col_sets_ok"] = u.condition3_ok;
  uj["row_min_singular_gap"] = u.row_min_singular_gap;
  uj["col_min_singular_gap"] = u.col_min_singular_gap;
  uj["overall_ok"] = u.overall_ok();

  ordered_json j;
  j["row_sets"] = layout.row_set_sizes();
  j["col_sets"] = layout.col_set_sizes();
  j["sigma_mode"] = opts.sigma_mode == SigmaMode::UserSupplied ? "user" : "estimated";
  j["sigma"] = rows_of(d.sigma());
  j["kappa_form"] = to_string(opts.kappa_form);
  j["init"] = to_string(opts.init);
  j["init_iterations"] = d.meta().init_iterations;
  j["iterations"] = d.meta().iterations;
  j["converged"] = d.meta().converged;
  j["final_relative_change"] = d.meta().final_relative_change;
  j["modules"] = std::move(modules);
  j["uniqueness"] = std::move(uj);
  return j;
}

std::vector<double> parse_lambdas(const std::string& text, Index modules) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Usage, "--lambda: cannot parse '" + tok + "'");
    }
  }
  if (static_cast<Index>(out.size()) != modules) {
    throw Error(ErrorKind::Usage, "--lambda needs " + std::to_string(modules) + " comma-separated values or 'default'");
  }
  return out;
}

void write_failures(const fs::path& path, const ResultTable& t) {
  std::ofstream out(path);
  out << "setting\tmethod\treplicate\tmessage\n";
  for (const Failure& f : t.failures) out << f.setting << '\t' << f.method << '\t' << f.replicate << '\t' << f.message << '\n';
}

int cmd_decompose(const std::string& manifest_path, const std::string& out_dir, const std::string& method,
                  const std::string& lambda_text, const Globals& g, std::ostream& out) {
  const Manifest m = parse_manifest(manifest_path);
  if (!m.grid.fully_observed()) {
    throw Error(ErrorKind::Usage, "the data has missing entries; use the impute command");
  }
  const FitOptions opts = fit_options(m, g);
  const bool center = g.center || m.center;
  BlockGrid grid = m.grid;
  Matrix means;
  if (center) {
    means = block_row_means(grid);
    Matrix x = grid.data();
    shift_by_row_means(x, m.layout, means, -1.0);
    grid = BlockGrid(m.layout, std::move(x));
  }

  if (method != "evb" && method != "bidifac") throw Error(ErrorKind::Usage, "--method must be evb or bidifac");
  StagedDir dir(out_dir);
  Decomposition d;
  std::vector<double> lambdas;
  if (method == "evb") {
    d = ev_bidifac(grid, m.modules, opts);
  } else {
    lambdas = lambda_text == "default" ? default_lambdas(m.modules, m.layout) : parse_lambdas(lambda_text, m.modules.size());
    d = bidifac_plus(grid, m.modules, lambdas, opts);
  }
  ordered_json summary;
  summary["command"] = "decompose";
  summary["method"] = method;
  if (!lambdas.empty()) summary["lambdas"] = lambdas;
  summary["centered"] = center;
  summary.update(write_decomposition(dir.path(), d, opts));
  Matrix total = d.total_structure();
  if (center) {
    shift_by_row_means(total, m.layout, means, 1.0);
    write_matrix(dir.path() / "row_means.tsv", means);
  }
  write_matrix(dir.path() / "total.tsv", total);
  write_json(dir.path() / "summary.json", summary);
  dir.commit();
  out << "decompose: " << d.size() << " modules, " << d.meta().iterations << " sweeps, converged="
      << (d.meta().converged ? "yes" : "no") << ", output in " << out_dir << '\n';
  return kOk;
}

int cmd_impute(const std::string& manifest_path, const std::string& out_dir, const Globals& g, std::ostream& out) {
  const Manifest m = parse_manifest(manifest_path);
  const FitOptions opts = fit_options(m, g);
  const bool center = g.center || m.center;
  const Mask mask = m.grid.mask_or_empty();
  BlockGrid grid = m.grid;
  Matrix means;
  if (center) {
    means = block_row_means(grid);
    Matrix x = grid.data();
    shift_by_row_means(x, m.layout, means, -1.0);
    grid = BlockGrid(m.layout, mask.select(0.0, x), mask);
  }
  const MissingPattern pattern = analyze_missing(m.layout, mask);

  StagedDir dir(out_dir);
  const ImputationResult r = ev_bidifac_impute(grid, m.modules, opts);
  Matrix imputed = r.imputed;
  Matrix total = r.decomposition.total_structure();
  if (center) {
    shift_by_row_means(imputed, m.layout, means, 1.0);
    shift_by_row_means(total, m.layout, means, 1.0);
    write_matrix(dir.path() / "row_means.tsv", means);
  }
  // Observed entries are copied from the input rather than round-tripped.
  imputed = mask.select(imputed, m.grid.data());

  ordered_json summary;
  summary["command"] = "impute";
  summary["method"] = "evb";
  summary["centered"] = center;
  summary["missing_pattern"] = to_string(pattern.kind);
  summary["missing_count"] = mask.count();
  summary["per_block_missing"] = rows_of(pattern.per_block_counts().cast<double>());
  summary["final_imputed_change"] = r.decomposition.meta().final_imputed_change;
  summary["sigma_inflation"] = to_string(opts.sigma_inflation);
  summary.update(write_decomposition(dir.path(), r.decomposition, opts));
  write_matrix(dir.path() / "imputed.tsv", imputed);
  write_matrix(dir.path() / "total.tsv", total);
  {
    std::ofstream idx(dir.path() / "imputed_indices.tsv");
    idx << "row\tcol\tvalue\n";
    for (Index r2 = 0; r2 < mask.rows(); ++r2)
      for (Index c = 0; c < mask.cols(); ++c)
        if (mask(r2, c)) idx << r2 << '\t' << c << '\t' << format_double(imputed(r2, c)) << '\n';
  }
  write_json(dir.path() / "summary.json", summary);
  dir.commit();
  out << "impute: " << mask.count() << " entries imputed (" << to_string(pattern.kind) << "), "
      << r.decomposition.meta().iterations << " cycles, converged=" << (r.decomposition.meta().converged ? "yes" : "no")
      << ", output in " << out_dir << '\n';
  return kOk;
}

int cmd_estimate_sigma(const std::string& path, const Globals& g, std::ostream& out) {
  const LoadedMatrix x = load_matrix(path);
  if (x.mask.any()) throw Error(ErrorKind::Data, path + ": estimate-sigma needs a matrix without missing entries");
  Matrix data = x.values;
  if (g.center) data.colwise() -= data.rowwise().mean();
  const KappaForm form = g.kappa_form ? kappa_form_from_string(*g.kappa_form) : KappaForm::AsPrinted;
  const NoiseFitDiagnostics d = estimate_sigma(data, form);
  out << "sigma_hat\t" << format_double(d.sigma_hat) << '\n'
      << "objective\t" << format_double(d.objective_value) << '\n'
      << "alpha\t" << format_double(d.alpha) << '\n'
      << "rows\t" << data.rows() << '\n'
      << "cols\t" << data.cols() << '\n'
      << "grid_evaluations\t" << d.grid_evaluations << '\n'
      << "kappa_form\t" << to_string(form) << '\n';
  return kOk;
}

ExperimentSpec load_spec(const std::string& path, const Globals& g) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Usage, "cannot open spec " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Usage, path + ": " + e.what());
  }
  ExperimentSpec s = experiment_spec_from_json(j);
  if (g.seed) s.seed = *g.seed;
  if (g.tol) s.rel_tolerance = *g.tol;
  if (g.max_iter) s.max_iterations = *g.max_iter;
  if (g.kappa_form) s.kappa_form = kappa_form_from_string(*g.kappa_form);
  if (g.init) s.init = initialization_from_string(*g.init);
  if (g.sigma_inflation) s.sigma_inflation = sigma_inflation_from_string(*g.sigma_inflation);
  s.validate();
  return s;
}

void write_table(const fs::path& dir, const std::string& name, const ResultTable& t) {
  std::ofstream tsv(dir / name);
  t.write_tsv(tsv);
  write_failures(dir / "failures.tsv", t);
  write_json(dir / "summary.json", summary_to_json(t));
}

int cmd_simulate(const std::string& spec_path, const std::string& out_dir, const Globals& g, std::ostream& out,
                 std::ostream& err) {
  const ExperimentSpec spec = load_spec(spec_path, g);
  StagedDir dir(out_dir);
  const auto start = std::chrono::steady_clock::now();
  const ResultTable t = run_experiment(spec, g.threads);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_table(dir.path(), "results.tsv", t);
  write_json(dir.path() / "spec.json", experiment_spec_to_json(spec));
  dir.commit();
  out << "simulate: " << t.rows.size() << " result rows, " << t.failures.size() << " failures, output in " << out_dir
      << '\n';
  err << "wall time: " << seconds << " s\n";
  return kOk;
}

int cmd_cv_impute(const std::string& manifest_path, const std::string& out_dir, int folds, double col_frac,
                  double row_frac, double entry_frac, const std::vector<std::string>& methods, const Globals& g,
                  std::ostream& out, std::ostream& err) {
  const Manifest m = parse_manifest(manifest_path);
  ExperimentSpec spec;
  spec.scenario = Scenario::CvImpute;
  spec.folds = folds;
  spec.holdout = HoldOutFractions{row_frac, col_frac, entry_frac};
  spec.methods = methods;
  spec.seed = g.seed.value_or(m.seed.value_or(0));
  const FitOptions opts = fit_options(m, g);
  spec.rel_tolerance = opts.rel_tolerance;
  spec.max_iterations = opts.max_iterations;
  spec.kappa_form = opts.kappa_form;
  spec.init = opts.init;
  spec.sigma_inflation = opts.sigma_inflation;
  spec.validate();

  BlockGrid grid = m.grid;
  if (g.center || m.center) {
    const Mask mask = grid.mask_or_empty();
    Matrix x = grid.data();
    shift_by_row_means(x, m.layout, block_row_means(grid), -1.0);
    x = mask.select(0.0, x);
    grid = grid.has_mask() ? BlockGrid(m.layout, std::move(x), mask) : BlockGrid(m.layout, std::move(x));
  }
  StagedDir dir(out_dir);
  const auto start = std::chrono::steady_clock::now();
  const ResultTable t = cv_impute(grid, spec, g.threads);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_table(dir.path(), "folds.tsv", t);
  dir.commit();
  out << "cv-impute: " << folds << " folds, " << t.failures.size() << " failures, output in " << out_dir << '\n';
  err << "wall time: " << seconds << " s\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linked low-rank matrix decomposition with empirical variational Bayes shrinkage", "linkedmf"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed = 0;
  double tol = 0.0;
  int max_iter = 0;
  std::string kappa_form;
  std::string init;
  std::string inflation;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed");
  auto* tol_opt = app.add_option("--tol", tol, "Relative convergence tolerance")->check(CLI::PositiveNumber);
  auto* iter_opt = app.add_option("--max-iter", max_iter, "Maximum sweeps or EM cycles")->check(CLI::PositiveNumber);
  app.add_flag("--center", g.center, "Subtract per-row block means of observed entries before fitting");
  app.add_option("--threads", g.threads, "Worker threads for replicates and folds")->check(CLI::PositiveNumber);
  auto* kappa_opt = app.add_option("--kappa-form", kappa_form, "Detection constant equation: printed or reference")
                        ->check(CLI::IsMember({"printed", "reference"}));
  auto* init_opt = app.add_option("--init", init, "Starting point of the EVB cycles: bidifac or zero")
                       ->check(CLI::IsMember({"bidifac", "zero"}));
  auto* inflation_opt =
      app.add_option("--sigma-inflation", inflation, "Noise scale correction for scattered missing entries: printed or variance")
          ->check(CLI::IsMember({"printed", "variance"}));

  std::string manifest, out_dir, method = "evb", lambda = "default", matrix, spec;
  int folds = 20;
  double col_frac = 0.05, row_frac = 0.05, entry_frac = 0.05;
  std::vector<std::string> methods;

  auto* dec = app.add_subcommand("decompose", "Linked decomposition of a fully observed grid");
  dec->add_option("--manifest", manifest, "Grid manifest (JSON)")->required();
  dec->add_option("--out", out_dir, "Output directory")->required();
  dec->add_option("--method", method, "evb or bidifac")->check(CLI::IsMember({"evb", "bidifac"}));
  dec->add_option("--lambda", lambda, "bidifac penalties: default or comma-separated values");

  auto* imp = app.add_subcommand("impute", "Impute missing entries of a grid");
  imp->add_option("--manifest", manifest, "Grid manifest (JSON)")->required();
  imp->add_option("--out", out_dir, "Output directory")->required();

  auto* est = app.add_subcommand("estimate-sigma", "Empirical noise scale of one matrix");
  est->add_option("--matrix", matrix, "Delimited matrix file")->required();

  auto* sim = app.add_subcommand("simulate", "Run a simulation experiment");
  sim->add_option("--spec", spec, "Experiment spec (JSON)")->required();
  sim->add_option("--out", out_dir, "Output directory")->required();

  auto* cv = app.add_subcommand("cv-impute", "Held-out imputation benchmark");
  cv->add_option("--manifest", manifest, "Grid manifest (JSON)")->required();
  cv->add_option("--out", out_dir, "Output directory")->required();
  cv->add_option("--folds", folds, "Number of folds")->check(CLI::PositiveNumber);
  cv->add_option("--col-frac", col_frac, "Fraction of each block's columns held out")->check(CLI::Range(0.0, 0.99));
  cv->add_option("--row-frac", row_frac, "Fraction of each block's rows held out")->check(CLI::Range(0.0, 0.99));
  cv->add_option("--entry-frac", entry_frac, "Fraction of remaining entries held out")->check(CLI::Range(0.0, 0.99));
  cv->add_option("--methods", methods, "Subset of methods to run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << '\n';
    return kUsage;
  }
  if (*seed_opt) g.seed = seed;
  if (*tol_opt) g.tol = tol;
  if (*iter_opt) g.max_iter = max_iter;
  if (*kappa_opt) g.kappa_form = kappa_form;
  if (*init_opt) g.init = init;
  if (*inflation_opt) g.sigma_inflation = inflation;

  try {
    if (*dec) return cmd_decompose(manifest, out_dir, method, lambda, g, out);
    if (*imp) return cmd_impute(manifest, out_dir, g, out);
    if (*est) return cmd_estimate_sigma(matrix, g, out);
    if (*sim) return cmd_simulate(spec, out_dir, g, out, err);
    if (*cv) return cmd_cv_impute(manifest, out_dir, folds, col_frac, row_frac, entry_frac, methods, g, out, err);
  } catch (const Error& e) {
    err << "error[" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error[data]: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace linkedmf::cli
