// Command-line front end: analyze user datasets, simulate benchmark trials,
// calibrate scenario parameters, run replicated studies, and summarize
// results files.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hetscore/bench.hpp"
#include "hetscore/datagen.hpp"
#include "hetscore/dataset.hpp"
#include "hetscore/global_tests.hpp"
#include "hetscore/importance.hpp"
#include "hetscore/model_io.hpp"
#include "hetscore/parallel.hpp"
#include "hetscore/scores.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitIo = 2;
constexpr int kExitValidation = 3;
constexpr int kExitConvergence = 4;

std::uint64_t seed_or_env(std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("HETSCORE_SEED")) return std::strtoull(env, nullptr, 10);
  return 20240817ULL;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

std::string surprise_band(double surprise, const std::vector<double>& cuts) {
  if (surprise < cuts[0]) return "weak";
  if (surprise < cuts[1]) return "moderate";
  if (surprise < cuts[2]) return "strong";
  return "very strong";
}

ordered_json test_result_json(const hetscore::TestResult& t, const std::vector<double>& cuts) {
  ordered_json j;
  j["method"] = hetscore::method_name(t.method);
  j["statistic"] = t.statistic;
  j["p_value"] = t.p_value;
  j["surprise"] = t.surprise;
  j["evidence"] = surprise_band(t.surprise, cuts);
  j["df_or_B"] = t.df_or_B;
  if (!t.per_covariate_p.empty()) {
    ordered_json pc;
    for (const auto& [name, p] : t.per_covariate_p) pc[name] = p;
    j["per_covariate_p"] = pc;
  }
  return j;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string data_path, schema_path, out_dir;
  std::string family_flag;
  std::string adjust = "lasso";
  std::string param = "centered";
  std::string tests = "perm_max";
  std::string importance = "forest";
  std::string stat = "max";
  long B = 9999;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  int trees = 100;
  std::string bands = "3.3,6.6,10";
};

int cmd_analyze(const AnalyzeArgs& a) {
  using namespace hetscore;
  std::vector<double> cuts;
  for (const auto& t : split_list(a.bands)) cuts.push_back(std::stod(t));
  if (cuts.size() != 3) throw ConfigError("--bands needs three thresholds");

  const Schema schema = Schema::load(a.schema_path);
  if (!a.family_flag.empty() && family_from_name(a.family_flag) != schema.family)
    throw ValidationError("--family disagrees with the schema family");
  Dataset d = load_dataset(a.data_path, schema);
  d = schema.treatment_expectation
          ? center_treatment(d, CenterKnown{*schema.treatment_expectation})
          : center_treatment(d, CenterEmpirical{});

  const AdjustStrategy strategy = adjust_from_name(a.adjust);
  if (strategy == AdjustStrategy::Oracle)
    throw ValidationError("oracle adjustment is unavailable for observed data (no truth)");
  const Parameterization param =
      a.param == "noncentered" ? Parameterization::NonCentered : Parameterization::Centered;
  const std::uint64_t seed = seed_or_env(a.seed);

  fs::create_directories(a.out_dir);
  std::vector<std::string> warnings;

  const int workers = a.workers > 0 ? a.workers : default_workers();
  const AdjustedDesign adj = prognostic_adjustment(d, strategy, nullptr, seed_mix(seed, "adjust"));
  for (const auto& w : adj.warnings) warnings.push_back(w);
  const FittedModel model = fit_model(d, adj, param);
  const ScoreVector sv = score_residuals(model, d);
  save_scores_csv(d, sv, (fs::path(a.out_dir) / "scores.csv").string());
  {
    std::ofstream mj(fs::path(a.out_dir) / "model.json");
    mj << model_to_json(model).dump(2) << '\n';
  }

  const ExpandedCovariates ec = expand_covariates(d);
  ordered_json tests_json = ordered_json::array();
  for (const auto& name : split_list(a.tests)) {
    TestResult t;
    if (name == "perm" || name == "perm_max" || name == "perm_quad") {
      const StatType st = name == "perm_quad" ? StatType::Quad
                          : name == "perm_max" ? StatType::Max
                          : (a.stat == "quad" ? StatType::Quad : StatType::Max);
      t = independence_test(sv, ec, st, PermReference::MonteCarlo(a.B), seed_mix(seed, name),
                            workers);
    } else if (name == "lrt_asymptotic") {
      t = lrt_interaction(d, adj, param);
    } else if (name == "lrt_bootstrap") {
      t = bootstrap_lrt(d, adj, param, a.B, seed_mix(seed, name), workers);
    } else if (name == "mob") {
      t = mob_root_test(model, d, true, a.B, seed_mix(seed, name), &warnings, workers);
    } else {
      throw ConfigError("unknown test '" + name + "'");
    }
    tests_json.push_back(test_result_json(t, cuts));
  }

  ordered_json imp_json = ordered_json::array();
  std::ofstream impcsv(fs::path(a.out_dir) / "importance.csv");
  impcsv << "method,variable,importance,rank\n";
  for (const auto& name : split_list(a.importance)) {
    VariableImportance vi;
    if (name == "forest") {
      vi = forest_importance(sv.s, d, a.trees, seed_mix(seed, "forest"));
      save_importance_trees_csv(vi, (fs::path(a.out_dir) / "importance_trees.csv").string());
    } else if (name == "lrt") {
      vi = lrt_importance(d, adj, param, &warnings);
    } else if (name == "none") {
      continue;
    } else {
      throw ConfigError("unknown importance method '" + name + "'");
    }
    ordered_json ji;
    ji["method"] = name;
    ordered_json ranking = ordered_json::array();
    for (std::size_t r = 0; r < vi.ranking.size(); ++r) {
      const int v = vi.ranking[r];
      ranking.push_back({{"variable", vi.variable_names[v]},
                         {"importance", vi.per_variable[v]}});
      impcsv << name << ',' << vi.variable_names[v] << ','
             << csv::format_double(vi.per_variable[v]) << ',' << (r + 1) << '\n';
    }
    ji["ranking"] = ranking;
    imp_json.push_back(ji);
  }

  ordered_json summary;
  summary["data"] = {{"path", a.data_path},
                     {"n", d.n},
                     {"k", d.k()},
                     {"family", family_name(d.family)}};
  summary["options"] = {{"adjust", adjust_name(strategy)},
                        {"parameterization", a.param},
                        {"B", a.B},
                        {"seed", seed},
                        {"surprise_bands", cuts}};
  summary["adjustment"] = {{"strategy", adjust_name(adj.strategy)},
                           {"columns", adj.names},
                           {"provenance", adj.provenance}};
  summary["tests"] = tests_json;
  summary["importance"] = imp_json;
  summary["warnings"] = warnings;
  std::ofstream out(fs::path(a.out_dir) / "summary.json");
  out << summary.dump(2) << '\n';
  std::cout << "analyze: wrote " << (fs::path(a.out_dir) / "summary.json").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  int scenario = 1;
  std::string family = "normal";
  double gamma_mult = 1.0;
  std::string calibration;
  double s = 0.0, gamma0 = 0.0, gamma1_star = 0.0;
  int n = 500, k = 30;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

int cmd_simulate(const SimulateArgs& a) {
  using namespace hetscore;
  ScenarioConfig cfg;
  if (!a.calibration.empty()) {
    const CalibrationResult c = load_calibration_toml(a.calibration);
    cfg = c.config_for(a.gamma_mult);
  } else {
    cfg.s = a.s > 0 ? a.s : 1.0;
    cfg.gamma0 = a.gamma0;
    cfg.gamma1_star = a.gamma1_star;
    cfg.gamma_mult = a.gamma_mult;
  }
  cfg.scenario_id = a.scenario;
  cfg.family = family_from_name(a.family);
  cfg.n = a.n;
  cfg.k = a.k;
  cfg.seed = seed_or_env(a.seed);
  cfg.validate();

  const GeneratedTrial t = generate_trial(cfg);
  fs::create_directories(a.out_dir);
  Schema schema;
  schema.family = cfg.family;
  schema.outcome = "y";
  schema.treatment = "z";
  if (cfg.family == Family::CoxPH) schema.event = "event";
  schema.treatment_expectation = 0.5;
  for (const auto& c : t.dataset.covariates)
    schema.covariates.push_back({c.name, c.kind.categorical});
  save_dataset(t.dataset, schema, (fs::path(a.out_dir) / "trial.csv").string());
  schema.save((fs::path(a.out_dir) / "trial.schema.json").string());
  save_truth_json(t, cfg, (fs::path(a.out_dir) / "trial.truth.json").string());
  std::ofstream cfgout(fs::path(a.out_dir) / "trial.config.json");
  cfgout << cfg.to_json().dump(2) << '\n';
  std::cout << "simulate: wrote trial.csv, trial.schema.json, trial.truth.json in " << a.out_dir
            << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  int scenario = 1;
  std::string family = "normal";
  int n = 500, k = 30;
  std::optional<std::uint64_t> seed;
  int metric_mc = 100000;
  int power_reps = 2000;
  bool no_verify = false;
  std::string mults = "0,0.5,1,1.5,2";
  std::string out = "calibration.toml";
};

int cmd_calibrate(const CalibrateArgs& a) {
  using namespace hetscore;
  ScenarioConfig cfg;
  cfg.scenario_id = a.scenario;
  cfg.family = family_from_name(a.family);
  cfg.n = a.n;
  cfg.k = a.k;
  cfg.seed = seed_or_env(a.seed);
  CalibrationOptions opts;
  opts.metric_mc = a.metric_mc;
  opts.power_reps = a.power_reps;
  opts.verify = !a.no_verify;
  opts.gamma_mults.clear();
  for (const auto& t : split_list(a.mults)) opts.gamma_mults.push_back(std::stod(t));
  const CalibrationResult res = calibrate_scenario(cfg, opts);
  save_calibration_toml(res, a.out);
  std::cout << "calibrate: s=" << res.base.s << " gamma1_star=" << res.base.gamma1_star;
  if (cfg.family == Family::CoxPH) std::cout << " lambda0=" << res.base.lambda0;
  std::cout << " -> " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchmarkArgs {
  std::string config_path;
  std::string out = "results.csv";
  int workers = 0;
};

int cmd_benchmark(const BenchmarkArgs& a) {
  using namespace hetscore;
  std::ifstream in(a.config_path);
  if (!in) throw IoError("cannot open study config '" + a.config_path + "'");
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("study config '" + a.config_path + "': " + e.what());
  }
  StudyConfig cfg = StudyConfig::from_json(j);
  if (a.workers > 0) cfg.workers = a.workers;
  if (cfg.workers <= 0) cfg.workers = default_workers();
  run_study(cfg, a.out, &std::cout);
  std::cout << "benchmark: results in " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string results_path;
  std::string out_dir = ".";
};

int cmd_report(const ReportArgs& a) {
  using namespace hetscore;
  const auto rows = read_results_csv(a.results_path);
  if (rows.empty()) throw ValidationError("no rows in '" + a.results_path + "'");
  fs::create_directories(a.out_dir);

  std::set<std::tuple<int, std::string, double, std::string>> cells;
  for (const auto& r : rows) cells.insert({r.scenario_id, r.family, r.gamma_mult, r.method});

  std::ofstream med(fs::path(a.out_dir) / "median_surprise.csv");
  med << "scenario_id,family,gamma_mult,method,n,median_surprise,ks_uniform,frac_p_below_05\n";
  std::ofstream ec(fs::path(a.out_dir) / "ecdf.csv");
  ec << "scenario_id,family,gamma_mult,method,p,ecdf\n";
  std::ofstream top(fs::path(a.out_dir) / "top1.csv");
  top << "scenario_id,family,gamma_mult,method,n,prob_in_truth,variable,count\n";

  for (const auto& [sc, fam, gm, method] : cells) {
    const auto sel = select_rows(rows, sc, fam, gm, method);
    const std::string prefix = std::to_string(sc) + "," + fam + "," + csv::format_double(gm) +
                               "," + method;
    bool has_p = false, has_top = false;
    for (const auto* r : sel) {
      if (r->p) has_p = true;
      if (!r->top1_variable.empty()) has_top = true;
    }
    if (has_p) {
      const EcdfTable t = ecdf_pvalues(rows, sc, fam, gm, method);
      std::vector<double> ps = t.p;
      const double frac05 = empirical_fraction_below(ps, 0.05);
      med << prefix << ',' << ps.size() << ','
          << csv::format_double(median_surprise(rows, sc, fam, gm, method)) << ','
          << csv::format_double(t.ks) << ',' << csv::format_double(frac05) << '\n';
      for (std::size_t i = 0; i < t.p.size(); ++i)
        ec << prefix << ',' << csv::format_double(t.p[i]) << ','
           << csv::format_double(t.ecdf[i]) << '\n';
    }
    if (has_top) {
      const Top1Summary t = top1_predictive_prob(rows, sc, fam, gm, method);
      for (const auto& [var, count] : t.selection_counts)
        top << prefix << ',' << t.n << ',' << csv::format_double(t.prob_in_truth) << ',' << var
            << ',' << count << '\n';
    }
  }
  std::cout << "report: wrote median_surprise.csv, ecdf.csv, top1.csv in " << a.out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Score-residual assessment of treatment effect heterogeneity"};
  app.require_subcommand(1);

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "Global TEH tests and effect-modifier "
                                                "importance for a dataset");
  analyze->add_option("--data", aa.data_path, "dataset CSV")->required();
  analyze->add_option("--schema", aa.schema_path, "schema JSON sidecar")->required();
  analyze->add_option("--family", aa.family_flag, "normal|binomial|negbin|cox (checked against schema)");
  analyze->add_option("--adjust", aa.adjust, "all|lasso|risk");
  analyze->add_option("--param", aa.param, "centered|noncentered");
  analyze->add_option("--tests", aa.tests, "comma list: perm_max,perm_quad,lrt_asymptotic,lrt_bootstrap,mob");
  analyze->add_option("--importance", aa.importance, "comma list: forest,lrt,none");
  analyze->add_option("--stat", aa.stat, "max|quad (for the plain 'perm' token)");
  analyze->add_option("--B", aa.B, "permutation / bootstrap replicates");
  analyze->add_option("--trees", aa.trees, "forest size");
  std::uint64_t aseed = 0;
  auto* aseed_opt = analyze->add_option("--seed", aseed, "RNG seed (default: HETSCORE_SEED or fixed)");
  analyze->add_option("--workers", aa.workers, "worker threads");
  analyze->add_option("--bands", aa.bands, "surprise thresholds weak/moderate/strong");
  analyze->add_option("--out", aa.out_dir, "output directory")->required();

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Generate a benchmark trial dataset");
  simulate->add_option("--scenario", sa.scenario, "1..4")->required();
  simulate->add_option("--family", sa.family, "normal|binomial|negbin|cox")->required();
  simulate->add_option("--gamma-mult", sa.gamma_mult, "heterogeneity multiplier");
  simulate->add_option("--calibration", sa.calibration, "calibration TOML (provides s, gamma0, gamma1*)");
  simulate->add_option("--s", sa.s, "signal scale (if no calibration file)");
  simulate->add_option("--gamma0", sa.gamma0, "overall effect");
  simulate->add_option("--gamma1-star", sa.gamma1_star, "interaction strength unit");
  simulate->add_option("--n", sa.n, "sample size (even)");
  simulate->add_option("--k", sa.k, "covariate count");
  std::uint64_t sseed = 0;
  auto* sseed_opt = simulate->add_option("--seed", sseed, "RNG seed");
  simulate->add_option("--out", sa.out_dir, "output directory")->required();

  CalibrateArgs ca;
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate scenario parameters");
  calibrate->add_option("--scenario", ca.scenario, "1..4")->required();
  calibrate->add_option("--family", ca.family, "normal|binomial|negbin|cox")->required();
  calibrate->add_option("--n", ca.n, "trial size the powers refer to");
  calibrate->add_option("--k", ca.k, "covariate count");
  std::uint64_t cseed = 0;
  auto* cseed_opt = calibrate->add_option("--seed", cseed, "RNG seed");
  calibrate->add_option("--metric-mc", ca.metric_mc, "subjects for metric calibration");
  calibrate->add_option("--power-reps", ca.power_reps, "replicates for power calibration");
  calibrate->add_flag("--no-verify", ca.no_verify, "skip fresh-seed verification runs");
  calibrate->add_option("--mults", ca.mults, "gamma multipliers to calibrate gamma0 for");
  calibrate->add_option("--out", ca.out, "output TOML path");

  BenchmarkArgs ba;
  auto* benchmark = app.add_subcommand("benchmark", "Run a replicated study from a JSON config");
  benchmark->add_option("--config", ba.config_path, "study JSON")->required();
  benchmark->add_option("--out", ba.out, "results CSV (appended, resumable)");
  benchmark->add_option("--workers", ba.workers, "worker threads");

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "Summarize a results CSV");
  report->add_option("--results", ra.results_path, "results CSV")->required();
  report->add_option("--out", ra.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*analyze) {
      if (aseed_opt->count()) aa.seed = aseed;
      return cmd_analyze(aa);
    }
    if (*simulate) {
      if (sseed_opt->count()) sa.seed = sseed;
      return cmd_simulate(sa);
    }
    if (*calibrate) {
      if (cseed_opt->count()) ca.seed = cseed;
      return cmd_calibrate(ca);
    }
    if (*benchmark) return cmd_benchmark(ba);
    if (*report) return cmd_report(ra);
  } catch (const hetscore::IoError& e) {
    std::cerr << "error (io): " << e.what() << '\n';
    return kExitIo;
  } catch (const hetscore::FitError& e) {
    std::cerr << "error (convergence): " << e.what() << '\n';
    return kExitConvergence;
  } catch (const hetscore::DegenerateInputError& e) {
    std::cerr << "error (validation): " << e.what() << '\n';
    return kExitValidation;
  } catch (const hetscore::ValidationError& e) {
    std::cerr << "error (validation): " << e.what() << '\n';
    return kExitValidation;
  } catch (const hetscore::ConfigError& e) {
    std::cerr << "error (config): " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
