// Acceptance checks. Prints one PASS/FAIL line per criterion plus INFO lines
// with the measured values; the exit status is always 0.

#include "linkedmf/cli/commands.hpp"
#include "linkedmf/cli/io.hpp"
#include "linkedmf/impute.hpp"
#include "linkedmf/simbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace linkedmf;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void report(int id, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
}

void info(int id, const std::string& detail) {
  std::printf("INFO criterion %d: %s\n", id, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Runs a criterion, turning an unexpected exception into a FAIL line.
void guarded(std::initializer_list<int> ids, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    for (int id : ids) report(id, false, std::string("exception: ") + e.what());
  }
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

// Independent bisection on 2x log(x + 1) = 1.
double square_kappa_oracle() {
  long double lo = 0.0L, hi = 10.0L;
  for (int it = 0; it < 200; ++it) {
    const long double mid = 0.5L * (lo + hi);
    if (2.0L * mid * std::log(mid + 1.0L) - 1.0L < 0.0L) lo = mid;
    else hi = mid;
  }
  return static_cast<double>(0.5L * (lo + hi));
}

void criterion1() {
  const auto t0 = Clock::now();
  const double k = kappa(100, 100);
  const double residual = std::abs(kappa_equation(k, 100, 100));
  const double thr = evb_threshold(100, 100, 1.0);
  const double secs = seconds_since(t0);
  const double k_ref = square_kappa_oracle();
  const double thr_ref = std::sqrt(200.0 + 100.0 * (k_ref + 1.0 / k_ref));
  const bool pass = std::abs(k - 0.8285) < 5e-5 && std::abs(k - k_ref) < 1e-12 && residual < 1e-12 &&
                    std::abs(thr - 20.089) < 5e-4 && std::abs(thr - thr_ref) < 1e-10 && secs < 1.0;
  std::ostringstream d;
  d.precision(16);
  d << "kappa=" << k << " |f|=" << residual << " threshold=" << thr << " time=" << secs << "s";
  report(1, pass, d.str());
}

void criterion2() {
  int rank_zero = 0;
  std::vector<double> top;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(derive_seed(2001, s));
    const Matrix x = rng.normal_matrix(1000, 100);
    const ShrinkageResult r = evb_shrink_matrix(x, 1.0);
    if (r.rank == 0) ++rank_zero;
    top.push_back(r.svd.values[0]);
  }
  const double expected = std::sqrt(1000.0) + std::sqrt(100.0);
  const double rel = std::abs(mean(top) - expected) / expected;
  std::ostringstream d;
  d << "rank 0 in " << rank_zero << "/100 (need >= 95); mean top singular value " << mean(top) << " vs "
    << expected << " (rel diff " << rel << ")";
  report(2, rank_zero >= 95 && rel < 0.02, d.str());
  int reference_zero = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(derive_seed(2001, s));
    if (evb_shrink_matrix(rng.normal_matrix(1000, 100), 1.0, KappaForm::Reference).rank == 0) ++reference_zero;
  }
  info(2, "threshold " + fmt("%.3f", evb_threshold(1000, 100, 1.0)) + " with the printed kappa, " +
              fmt("%.3f", evb_threshold(1000, 100, 1.0, KappaForm::Reference)) +
              " with the reference kappa (rank 0 in " + std::to_string(reference_zero) + "/100)");
}

void criterion3() {
  int inside = 0;
  double lo = 1e300, hi = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(derive_seed(3001, s));
    const double sh = estimate_sigma(2.0 * rng.normal_matrix(1000, 100)).sigma_hat;
    if (sh >= 1.9 && sh <= 2.1) ++inside;
    lo = std::min(lo, sh);
    hi = std::max(hi, sh);
  }
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(derive_seed(3002, s));
    const Index m = 20 + rng.below(60);
    const Index n = 10 + rng.below(40);
    const Matrix x = rng.normal_matrix(m, n) + rng.normal_matrix(m, 2) * rng.normal_matrix(2, n);
    const double c = rng.log_uniform(0.01, 100.0);
    const double a = estimate_sigma(x).sigma_hat;
    const double b = estimate_sigma(c * x).sigma_hat;
    worst = std::max(worst, std::abs(b - c * a) / (c * a));
  }
  std::ostringstream d;
  d << inside << "/100 within [1.9, 2.1] (range " << lo << " .. " << hi << "); worst equivariance error " << worst;
  report(3, inside >= 95 && worst <= 1e-10, d.str());
}

void criterion4() {
  ExperimentSpec spec;
  spec.scenario = Scenario::SingleFixedS2N;
  spec.replicates = 10;
  spec.seed = 4;
  const auto t0 = Clock::now();
  const ResultTable t = run_experiment(spec);
  const double secs = seconds_since(t0);
  bool pass = t.failures.empty() && secs < 600.0;
  double worst = 0.0;
  for (const std::string& s : t.settings()) {
    const double evb = mean(t.values(s, "EVB", "rse"));
    const double best = std::min(mean(t.values(s, "HT", "rse")), mean(t.values(s, "NN", "rse")));
    worst = std::max(worst, evb / best);
    if (!(evb <= 1.1 * best)) pass = false;
    info(4, s + ": EVB " + fmt("%.4f", evb) + ", best of HT/NN " + fmt("%.4f", best));
  }
  report(4, pass, "max mean RSE(EVB) / min(HT, NN) = " + fmt("%.4f", worst) + " (need <= 1.1), " +
                      std::to_string(t.settings().size()) + " settings, time " + fmt("%.1f", secs) + "s");
}

void criterion5() {
  ExperimentSpec spec;
  spec.scenario = Scenario::SingleHetero;
  spec.replicates = 20;
  spec.seed = 5;
  const ResultTable t = run_experiment(spec);
  const double evb = median(t.values("complete", "EVB", "onse"));
  const double ht = median(t.values("complete", "HT-OPT", "onse"));
  const double nn = median(t.values("complete", "NN-OPT", "onse"));
  report(5, t.failures.empty() && evb < ht && evb < nn,
         "median ONSE EVB " + fmt("%.4f", evb) + ", HT-OPT " + fmt("%.4f", ht) + ", NN-OPT " + fmt("%.4f", nn));
}

ExperimentSpec imputation_spec(Index replicates, bool oracle) {
  ExperimentSpec spec;
  spec.scenario = Scenario::SingleHetero;
  spec.replicates = replicates;
  spec.seed = 6;
  spec.missing_fractions = {0.2, 0.5, 0.8};
  spec.oracle_imputation = oracle;
  spec.methods = oracle ? std::vector<std::string>{"EVB", "HT-OPT", "NN-OPT"}
                        : std::vector<std::string>{"EVB", "HT", "NN"};
  return spec;
}

void criterion6() {
  const ExperimentSpec spec = imputation_spec(20, false);
  const ResultTable t = run_experiment(spec);
  bool pass = t.failures.empty();
  std::string detail;
  for (const std::string& s : t.settings()) {
    if (s == "complete") continue;
    const double evb = median(t.values(s, "EVB", "rse_miss"));
    const double nn = median(t.values(s, "NN", "rse_miss"));
    const double ht = median(t.values(s, "HT", "rse_miss"));
    if (!(evb < nn && evb < ht)) pass = false;
    detail += s + ": EVB " + fmt("%.4f", evb) + " NN " + fmt("%.4f", nn) + " HT " + fmt("%.4f", ht) + "; ";
  }
  report(6, pass, detail + "median RSE_miss, sigma inflation as printed");

  ExperimentSpec variance = spec;
  variance.methods = {"EVB"};
  variance.sigma_inflation = SigmaInflation::Variance;
  const ResultTable v = run_experiment(variance);
  std::string vd;
  for (const std::string& s : v.settings())
    if (s != "complete") vd += s + ": EVB " + fmt("%.4f", median(v.values(s, "EVB", "rse_miss"))) + "; ";
  info(6, vd + "median RSE_miss with the square-root (variance) inflation");

  const ResultTable o = run_experiment(imputation_spec(3, true));
  std::string od;
  for (const std::string& s : o.settings()) {
    if (s == "complete") continue;
    od += s + ": EVB " + fmt("%.4f", median(o.values(s, "EVB", "rse_miss"))) + " HT-OPT " +
          fmt("%.4f", median(o.values(s, "HT-OPT", "rse_miss"))) + " NN-OPT " +
          fmt("%.4f", median(o.values(s, "NN-OPT", "rse_miss"))) + "; ";
  }
  info(6, od + "oracle EM baselines, 3 replicates");
}

void bidim_criteria() {
  ExperimentSpec spec;
  spec.scenario = Scenario::Bidim;
  spec.replicates = 20;
  spec.seed = 7;
  const ResultTable t = run_experiment(spec);
  const std::string setting = "full";
  const auto sum = [&](const std::string& method, const std::string& metric) {
    double s = 0.0;
    for (double x : t.values(setting, method, metric)) s += x;
    return s;
  };
  const double zt = sum("EB-BIDI", "zero_truth_modules");
  const double zr = sum("EB-BIDI", "zero_truth_recovered");
  const double nt = sum("EB-BIDI", "nonzero_truth_modules");
  const double nd = sum("EB-BIDI", "nonzero_truth_detected");
  report(7, t.failures.empty() && zt > 0 && nt > 0 && zr >= 0.95 * zt && nd >= 0.90 * nt,
         "zero modules recovered " + fmt("%.0f", zr) + "/" + fmt("%.0f", zt) + ", nonzero detected " +
             fmt("%.0f", nd) + "/" + fmt("%.0f", nt));

  const double rdse_eb = median(t.values(setting, "EB-BIDI", "rdse"));
  const double rdse_bf = median(t.values(setting, "BIDIFAC", "rdse"));
  const double rse_eb = median(t.values(setting, "EB-BIDI", "rse"));
  const double rse_sep = median(t.values(setting, "EB-SEP", "rse"));
  const double rse_joint = median(t.values(setting, "EB-JOINT", "rse"));
  report(8, t.failures.empty() && rdse_eb < rdse_bf && rse_eb < rse_sep && rse_eb < rse_joint,
         "median RDSE EB-BIDI " + fmt("%.4f", rdse_eb) + " vs BIDIFAC " + fmt("%.4f", rdse_bf) +
             "; median RSE EB-BIDI " + fmt("%.4f", rse_eb) + " vs EB-SEP " + fmt("%.4f", rse_sep) + ", EB-JOINT " +
             fmt("%.4f", rse_joint));

  ExperimentSpec zero = spec;
  zero.methods = {"EB-BIDI"};
  zero.init = Initialization::Zero;
  const ResultTable z = run_experiment(zero);
  const auto zsum = [&](const std::string& metric) {
    double s = 0.0;
    for (double x : z.values(setting, "EB-BIDI", metric)) s += x;
    return s;
  };
  info(7, "zero initialization: zero modules recovered " + fmt("%.0f", zsum("zero_truth_recovered")) + "/" +
              fmt("%.0f", zsum("zero_truth_modules")) + ", nonzero detected " +
              fmt("%.0f", zsum("nonzero_truth_detected")) + "/" + fmt("%.0f", zsum("nonzero_truth_modules")));
  info(8, "zero initialization: median RDSE EB-BIDI " + fmt("%.4f", median(z.values(setting, "EB-BIDI", "rdse"))) +
              ", median RSE " + fmt("%.4f", median(z.values(setting, "EB-BIDI", "rse"))));
}

// --- criterion 9 ---------------------------------------------------------------

LinkedSim small_linked(std::uint64_t seed) {
  const Layout l({60, 50}, {30, 25});
  const ModuleGrid mods = enumerate_modules(2, 2);
  std::vector<bool> active(9, false);
  active[0] = active[3] = active[8] = true;
  Rng rng(seed);
  SignalSpec s;
  s.lo = 0.4;
  return gen_linked(l, mods, active, 2, s, rng);
}

std::string dir_bytes(const fs::path& dir) {
  std::vector<fs::path> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename());
  std::sort(names.begin(), names.end());
  std::string all;
  for (const fs::path& n : names) {
    std::ifstream in(dir / n, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    all += n.string() + '\n' + ss.str();
  }
  return all;
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "linkedmf");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

void criterion9() {
  std::vector<std::string> failed;

  // Alternating ridge iterations converge to soft thresholding.
  double ridge_worst = 0.0;
  Rng rng(9);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix x = rng.normal_matrix(15, 8) * 2.0;
    const double lambda = 1.0;
    Matrix u = rng.normal_matrix(15, 8);
    Matrix v = rng.normal_matrix(8, 8);
    const Matrix eye = Matrix::Identity(8, 8);
    for (int it = 0; it < 20000; ++it) {
      u = x * v * (v.transpose() * v + lambda * eye).inverse();
      v = x.transpose() * u * (u.transpose() * u + lambda * eye).inverse();
    }
    ridge_worst = std::max(ridge_worst, (u * v.transpose() - soft_threshold_matrix(x, lambda).reconstruct()).norm());
  }
  if (!(ridge_worst < 1e-6)) failed.push_back("ridge/SVT");

  // BIDIFAC+ objective never increases.
  int rises = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const LinkedSim sim = small_linked(900 + s);
    FitOptions o;
    o.rel_tolerance = 1e-10;
    o.max_iterations = 200;
    const Decomposition d = bidifac_plus(sim.grid, sim.modules, default_lambdas(sim.modules, sim.grid.layout()), o);
    const auto& tr = d.meta().objective_trace;
    for (std::size_t i = 1; i < tr.size(); ++i)
      if (tr[i] > tr[i - 1] * (1.0 + 1e-12)) ++rises;
  }
  if (rises != 0) failed.push_back("objective monotone");

  // Imputation: observed entries untouched, missing entries equal the fit.
  bool impute_ok = true;
  double sum_worst = 0.0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const LinkedSim sim = small_linked(950 + s);
    const Layout& l = sim.grid.layout();
    Rng mr(960 + s);
    const HoldOut h = make_holdout(l, HoldOutFractions{0.05, 0.05, 0.1}, mr, true);
    const ImputationResult r = ev_bidifac_impute(BlockGrid(l, sim.grid.data(), h.mask), sim.modules, {});
    const Matrix total = r.decomposition.total_structure();
    for (Index c = 0; c < l.cols(); ++c)
      for (Index i = 0; i < l.rows(); ++i) {
        const double want = h.mask(i, c) ? total(i, c) : sim.grid.data()(i, c);
        if (r.imputed(i, c) != want) impute_ok = false;
      }
    const Decomposition d = ev_bidifac(sim.grid, sim.modules, {});
    Matrix sum = Matrix::Zero(l.rows(), l.cols());
    for (Index k = 0; k < d.size(); ++k) sum += d.module_matrix(k);
    sum_worst = std::max(sum_worst, (sum - d.total_structure()).norm());
  }
  if (!impute_ok) failed.push_back("imputation identity");
  if (!(sum_worst <= 1e-10)) failed.push_back("sum consistency");

  // Same seed, byte-identical outputs for every command.
  const fs::path tmp = fs::temp_directory_path() / "linkedmf_acceptance";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  const fs::path fixtures = fs::path(LINKEDMF_FIXTURE_DIR) / "linked";
  std::ofstream(tmp / "spec.json")
      << R"({"scenario":"Bidim","replicates":2,"seed":3,"row_sizes":[40,30],"col_sizes":[20,15]})";
  Rng noise(99);
  {
    std::ofstream m(tmp / "noise.tsv");
    const Matrix x = noise.normal_matrix(50, 20);
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index c = 0; c < x.cols(); ++c) m << (c ? "\t" : "") << cli::format_double(x(i, c));
      m << '\n';
    }
  }
  const std::vector<std::vector<std::string>> commands = {
      {"decompose", "--manifest", (fixtures / "manifest.json").string()},
      {"--method", "bidifac"},
      {"impute", "--manifest", (fixtures / "manifest_masked.json").string()},
      {"--seed", "1", "simulate", "--spec", (tmp / "spec.json").string()},
      {"--seed", "2", "--threads", "2", "cv-impute", "--manifest", (fixtures / "manifest.json").string(), "--folds",
       "2"},
  };
  int identical = 0;
  int compared = 0;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::vector<std::string> base = commands[i];
    if (i == 1) base.insert(base.begin(), commands[0].begin(), commands[0].end());
    std::string first;
    bool ok = true;
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<std::string> args = base;
      const fs::path out = tmp / ("o" + std::to_string(i) + "_" + std::to_string(pass));
      args.insert(args.end(), {"--out", out.string()});
      if (run_cli(args) != 0) {
        ok = false;
        break;
      }
      const std::string bytes = dir_bytes(out);
      if (pass == 0) first = bytes;
      else ok = ok && bytes == first;
    }
    ++compared;
    if (ok) ++identical;
  }
  std::string sigma_out[2];
  for (int pass = 0; pass < 2; ++pass) {
    std::ostringstream out, err;
    const std::string path = (tmp / "noise.tsv").string();
    const char* argv[] = {"linkedmf", "estimate-sigma", "--matrix", path.c_str()};
    if (cli::run(4, argv, out, err) == 0) sigma_out[pass] = out.str();
  }
  ++compared;
  if (!sigma_out[0].empty() && sigma_out[0] == sigma_out[1]) ++identical;
  fs::remove_all(tmp);
  if (identical != compared) failed.push_back("determinism");

  std::ostringstream d;
  d << "ridge vs SVT max diff " << ridge_worst << "; objective rises " << rises << "; imputation identity "
    << (impute_ok ? "exact" : "violated") << "; sum consistency " << sum_worst << "; byte-identical reruns "
    << identical << "/" << compared;
  if (!failed.empty()) {
    d << "; failed:";
    for (const std::string& f : failed) d << ' ' << f;
  }
  report(9, failed.empty(), d.str());
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  guarded({1}, criterion1);
  guarded({2}, criterion2);
  guarded({3}, criterion3);
  guarded({4}, criterion4);
  guarded({5}, criterion5);
  guarded({6}, criterion6);
  guarded({7, 8}, bidim_criteria);
  guarded({9}, criterion9);
  std::printf("INFO total acceptance time %.1fs\n", seconds_since(t0));
  return 0;
}
