// smrmr command-line tool: select, simulate, benchmark, diagnose.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <string>

#include "smrmr/eval_bench.hpp"
#include "smrmr/io.hpp"
#include "smrmr/knockoffs.hpp"
#include "smrmr/pipeline.hpp"
#include "smrmr/synth_dgp.hpp"

namespace {

using namespace smrmr;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitNumerical = 3;

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::NumericalFailure:
    case ErrorCode::ResourceLimit:
      return kExitNumerical;
    default:
      return kExitInvalid;
  }
}

std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t flag_value, const std::optional<std::uint64_t>& config_seed) {
  if (flag->count()) return flag_value;
  if (config_seed) return *config_seed;
  const std::uint64_t s = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
  std::cerr << "seed: " << s << "\n";
  return s;
}

void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidInput, "cannot write '" + path + "'");
  out << text;
  if (!out) throw Error(ErrorCode::InvalidInput, "write failed for '" + path + "'");
}

int default_workers() {
  if (const char* w = std::getenv("SMRMR_WORKERS")) {
    const int v = std::atoi(w);
    if (v > 0) return v;
  }
  return 1;
}

// ---------------------------------------------------------------------------

struct SelectArgs {
  std::string data, response = "y", config, out;
  PipelineConfig defaults;
  std::string measure = "pc", penalty = "mcp";
  double lambda = 0.01;
  std::uint64_t seed = 0;
  std::string pmax_rule = to_string(PmaxRule::FloorN1Minus1Half);
  bool no_tune = false;
  CLI::Option *alpha_opt, *measure_opt, *penalty_opt, *lambda_opt, *escalate_opt, *seed_opt, *split_opt,
      *screen_opt, *pmax_opt, *no_tune_opt;
};

int cmd_select(SelectArgs& a) {
  PipelineConfig cfg;
  std::optional<std::uint64_t> config_seed;
  if (!a.config.empty()) {
    const Json j = read_json_file(a.config);
    cfg = pipeline_from_json(j);
    if (j.contains("seed")) config_seed = cfg.seed;
  }
  if (a.alpha_opt->count()) cfg.alpha = a.defaults.alpha;
  if (a.measure_opt->count()) cfg.measure.kind = measure_kind_from_string(a.measure);
  if (a.penalty_opt->count()) {
    cfg.penalty.kind = penalty_kind_from_string(a.penalty);
    // An explicit family replaces a grid built for another family.
    for (auto& h : cfg.hp_grid) h.kind = cfg.penalty.kind;
  }
  if (a.lambda_opt->count()) {
    cfg.penalty.lambda = a.lambda;
    cfg.hp_grid = {cfg.penalty};
  }
  if (a.escalate_opt->count()) cfg.escalate = true;
  if (a.split_opt->count()) cfg.split_frac = a.defaults.split_frac;
  if (a.screen_opt->count()) cfg.lambda_screen = a.defaults.lambda_screen;
  if (a.pmax_opt->count()) cfg.pmax_rule = pmax_rule_from_string(a.pmax_rule);
  if (a.no_tune_opt->count()) cfg.tune = false;
  cfg.seed = resolve_seed(a.seed_opt, a.seed, config_seed);
  cfg.validate();

  const Dataset d = table_to_dataset(read_csv_file(a.data), a.response);
  if (d.x.cols() < 1) throw Error(ErrorCode::InvalidInput, "CSV needs at least one feature column besides the response");
  const PipelineResult res = run(d.x, d.y, cfg);
  const std::string json = dump_json(result_to_json(res));
  if (a.out.empty())
    std::cout << json;
  else
    write_text(a.out, json);

  std::cout << "selected " << res.report.selected.size() << " of " << d.x.cols() << " features (screened "
            << res.screened.size() << ", alpha_used " << res.report.alpha_used << ", threshold "
            << format_double(res.report.threshold) << ")\n";
  if (!res.report.selected.empty()) {
    std::cout << std::left << std::setw(8) << "index" << std::setw(24) << "feature" << "w\n";
    for (std::size_t k : res.report.selected) {
      const auto pos = std::lower_bound(res.screened.begin(), res.screened.end(), k) - res.screened.begin();
      std::cout << std::left << std::setw(8) << k << std::setw(24) << d.feature_names[k]
                << format_double(res.report.w[pos]) << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string dgp = "1a", out_prefix = "sim_", poisson_link = "clamp";
  int n = 100, p = 100;
  double c = 0.5;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt;
};

int cmd_simulate(SimulateArgs& a) {
  DgpSpec spec;
  spec.id = dgp_from_string(a.dgp);
  spec.n = a.n;
  spec.p = a.p;
  spec.c = a.c;
  spec.poisson_link = a.poisson_link == "exp" ? PoissonLink::Exp : PoissonLink::Clamp;
  spec.seed = resolve_seed(a.seed_opt, a.seed, std::nullopt);
  const SynthDataset d = generate(spec);

  std::vector<std::string> names;
  for (int k = 0; k < spec.p; ++k) names.push_back("x" + std::to_string(k));
  std::ostringstream xs, ys;
  write_matrix_csv(xs, d.x, names);
  write_matrix_csv(ys, DataMatrix(d.y), {"y"});
  write_text(a.out_prefix + "X.csv", xs.str());
  write_text(a.out_prefix + "y.csv", ys.str());
  Json meta;
  meta["dgp"] = to_string(spec.id);
  meta["n"] = spec.n;
  meta["p"] = spec.p;
  meta["c"] = dgp_correlation(spec);
  meta["seed"] = spec.seed;
  meta["true_support"] = d.true_support;
  meta["task"] = to_string(d.task);
  write_text(a.out_prefix + "meta.json", dump_json(meta));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchmarkArgs {
  std::string config, out = "bench_out";
  int replicates = 100;
  int workers = 1;
  std::uint64_t seed = 0;
  CLI::Option *replicates_opt, *workers_opt, *seed_opt;
};

int cmd_benchmark(BenchmarkArgs& a) {
  const Json j = read_json_file(a.config);
  BenchConfig bc = bench_config_from_json(j);
  if (a.replicates_opt->count() || !j.contains("replicates")) bc.settings.replicates = a.replicates;
  if (a.workers_opt->count() || !j.contains("workers")) bc.settings.workers = a.workers;
  bc.settings.master_seed =
      resolve_seed(a.seed_opt, a.seed, j.contains("seed") ? std::optional(bc.settings.master_seed) : std::nullopt);

  const std::vector<BenchResult> results = run_benchmark(bc.dgp, bc.methods, bc.settings);
  std::ostringstream csv;
  write_bench_csv(csv, results);
  std::filesystem::create_directories(a.out);
  write_text((std::filesystem::path(a.out) / "results.csv").string(), csv.str());
  write_text((std::filesystem::path(a.out) / "summary.json").string(), dump_json(bench_summary_json(results)));

  const bool regression = dgp_task(bc.dgp.id) == Task::Regression;
  std::cout << std::left << std::setw(22) << "method" << std::setw(8) << "ok" << std::setw(16) << "fdr (se)"
            << std::setw(16) << "tpr (se)" << std::setw(16) << (regression ? "mse (se)" : "acc (se)") << "empty\n";
  auto cell = [](const MetricSummary& m) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << m.mean << " (" << m.se << ")";
    return s.str();
  };
  int failed = 0, total = 0;
  for (const auto& r : results) {
    failed += r.failures;
    total += r.replicates;
    std::cout << std::left << std::setw(22) << r.method << std::setw(8) << (r.replicates - r.failures)
              << std::setw(16) << cell(r.fdr) << std::setw(16) << cell(r.tpr) << std::setw(16)
              << cell(regression ? r.mse : r.acc) << std::fixed << std::setprecision(2) << r.empty_frequency << "\n";
  }
  if (failed) std::cout << failed << " of " << total << " method-replicates failed (see summary.json)\n";
  return failed == total ? kExitNumerical : kExitOk;
}

// ---------------------------------------------------------------------------

struct DiagnoseArgs {
  std::string data, response, out;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt;
};

int cmd_diagnose(DiagnoseArgs& a) {
  const Dataset d = table_to_dataset(read_csv_file(a.data), a.response);
  if (d.x.cols() < 1) throw Error(ErrorCode::InvalidInput, "CSV has no feature columns");
  const std::uint64_t seed = resolve_seed(a.seed_opt, a.seed, std::nullopt);
  const KnockoffMatrix km = sample_knockoffs(d.x, seed);
  const MomentDiagnostics md = moment_diagnostics(d.x, km);
  Json j;
  j["n"] = d.x.rows();
  j["p"] = d.x.cols();
  j["seed"] = seed;
  j["shrinkage"] = km.shrinkage;
  j["s"] = std::vector<double>(km.s_vec.data(), km.s_vec.data() + km.s_vec.size());
  j["max_abs_cov_error"] = md.max_abs_cov_error;
  j["max_abs_cross_error"] = md.max_abs_cross_error;
  j["max_abs_mean_error"] = md.max_abs_mean_error;
  const std::string text = dump_json(j);
  if (a.out.empty())
    std::cout << text;
  else
    write_text(a.out, text);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SmRMR feature screening with knockoff FDR control"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  SelectArgs sel;
  auto* s = app.add_subcommand("select", "Run the selection pipeline on a CSV file");
  s->add_option("data", sel.data, "Input CSV (header row required)")->required()->check(CLI::ExistingFile);
  s->add_option("--response", sel.response, "Name of the response column");
  s->add_option("--config", sel.config, "JSON pipeline config")->check(CLI::ExistingFile);
  sel.alpha_opt = s->add_option("--alpha", sel.defaults.alpha, "Target FDR level in (0,1)");
  sel.measure_opt = s->add_option("--measure", sel.measure, "Dependence measure")->check(CLI::IsMember({"pc", "hsic"}));
  sel.penalty_opt = s->add_option("--penalty", sel.penalty, "Penalty family")
                        ->check(CLI::IsMember({"none", "lasso", "scad", "mcp"}));
  sel.lambda_opt = s->add_option("--lambda", sel.lambda, "Fix lambda (disables the tuning grid)");
  sel.escalate_opt = s->add_flag("--escalate", sel.defaults.escalate, "Raise alpha while the selection is empty");
  sel.split_opt = s->add_option("--split-frac", sel.defaults.split_frac, "Fraction of rows used for screening when n < 2p");
  sel.screen_opt = s->add_option("--lambda-screen", sel.defaults.lambda_screen, "Penalty level of the screening fit");
  sel.pmax_opt = s->add_option("--pmax-rule", sel.pmax_rule, "Size rule of the screened set")
                     ->check(CLI::IsMember({"n1_minus_1_half", "n1_plus_1_half", "n_minus_1_half"}));
  sel.no_tune_opt = s->add_flag("--no-tune", sel.no_tune, "Skip the lambda grid search");
  sel.seed_opt = s->add_option("--seed", sel.seed, "Random seed (drawn and printed when absent)")->default_str("random");
  s->add_option("--out", sel.out, "Write the JSON report here (stdout when empty)");

  SimulateArgs sim;
  auto* m = app.add_subcommand("simulate", "Generate a synthetic dataset");
  m->add_option("--dgp", sim.dgp, "Design id: 1a..1d, 2a..2c, 3a..3c");
  m->add_option("--n", sim.n, "Rows");
  m->add_option("--p", sim.p, "Features");
  m->add_option("--c", sim.c, "AR(1) correlation for designs that do not fix it");
  m->add_option("--poisson-link", sim.poisson_link, "Rate link of 2c")->check(CLI::IsMember({"clamp", "exp"}));
  sim.seed_opt = m->add_option("--seed", sim.seed, "Random seed (drawn and printed when absent)")->default_str("random");
  m->add_option("--out-prefix", sim.out_prefix, "Prefix for X.csv, y.csv, meta.json");

  BenchmarkArgs bench;
  bench.workers = default_workers();
  auto* b = app.add_subcommand("benchmark", "Monte-Carlo selection benchmark");
  b->add_option("--config", bench.config, "JSON benchmark config")->required()->check(CLI::ExistingFile);
  bench.replicates_opt = b->add_option("--replicates", bench.replicates, "Replicates (>= 10)");
  bench.workers_opt = b->add_option("--workers", bench.workers, "Worker threads (default from SMRMR_WORKERS)");
  bench.seed_opt = b->add_option("--seed", bench.seed, "Master seed (drawn and printed when absent)")->default_str("random");
  b->add_option("--out", bench.out, "Output directory for results.csv and summary.json");

  DiagnoseArgs diag;
  auto* g = app.add_subcommand("diagnose", "Knockoff moment diagnostics for a CSV design");
  g->add_option("data", diag.data, "Input CSV")->required()->check(CLI::ExistingFile);
  g->add_option("--response", diag.response, "Column to drop before building knockoffs");
  diag.seed_opt = g->add_option("--seed", diag.seed, "Random seed (drawn and printed when absent)")->default_str("random");
  g->add_option("--out", diag.out, "Write the JSON here (stdout when empty)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*s) return cmd_select(sel);
    if (*m) return cmd_simulate(sim);
    if (*b) return cmd_benchmark(bench);
    if (*g) return cmd_diagnose(diag);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInvalid;
}
