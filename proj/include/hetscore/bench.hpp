#pragma once

// Replicated simulation study runner: scenario grid x method grid, one
// shared dataset per replicate, append-only CSV results with resume support,
// and the summary measures (p-value ECDF, median surprise, top-1 probability).

#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetscore/adjustment.hpp"
#include "hetscore/datagen.hpp"
#include "hetscore/dataset.hpp"
#include "hetscore/global_tests.hpp"
#include "hetscore/importance.hpp"
#include "hetscore/parallel.hpp"
#include "hetscore/scores.hpp"
#include "hetscore/stats.hpp"

namespace hetscore {

struct MethodConfig {
  enum class Kind {
    ResidualPerm,    // adjust + fit + scores + independence test
    LRTAsymptotic,
    LRTBootstrap,
    MOBRoot,
    Oracle,
    ForestImportance,
    LRTImportance
  };
  Kind kind = Kind::ResidualPerm;
  StatType stat = StatType::Max;
  AdjustStrategy adjust = AdjustStrategy::Lasso;
  Parameterization param = Parameterization::Centered;
  long B = 9999;
  bool orthogonalize = true;
  int trees = 100;

  std::string label() const {
    switch (kind) {
      case Kind::ResidualPerm:
        return std::string("residual_perm_") + (stat == StatType::Max ? "max" : "quad") + "_" +
               adjust_name(adjust);
      case Kind::LRTAsymptotic: return "lrt_asymptotic_" + adjust_name(adjust);
      case Kind::LRTBootstrap: return "lrt_bootstrap_" + adjust_name(adjust);
      case Kind::MOBRoot:
        return std::string("mob_root_") + (orthogonalize ? "orth_" : "raw_") +
               adjust_name(adjust);
      case Kind::Oracle: return "oracle";
      case Kind::ForestImportance: return "forest_importance_" + adjust_name(adjust);
      case Kind::LRTImportance: return "lrt_importance_" + adjust_name(adjust);
    }
    return "?";
  }

  static MethodConfig from_json(const nlohmann::ordered_json& j) {
    MethodConfig m;
    const std::string name = j.at("name").get<std::string>();
    if (name == "residual_perm") m.kind = Kind::ResidualPerm;
    else if (name == "lrt_asymptotic") m.kind = Kind::LRTAsymptotic;
    else if (name == "lrt_bootstrap") m.kind = Kind::LRTBootstrap;
    else if (name == "mob") m.kind = Kind::MOBRoot;
    else if (name == "oracle") m.kind = Kind::Oracle;
    else if (name == "forest_importance") m.kind = Kind::ForestImportance;
    else if (name == "lrt_importance") m.kind = Kind::LRTImportance;
    else throw ConfigError("unknown method '" + name + "'");
    if (j.contains("stat")) {
      const std::string s = j.at("stat").get<std::string>();
      if (s == "max") m.stat = StatType::Max;
      else if (s == "quad") m.stat = StatType::Quad;
      else throw ConfigError("unknown statistic '" + s + "'");
    }
    if (j.contains("adjust")) m.adjust = adjust_from_name(j.at("adjust").get<std::string>());
    if (j.contains("param")) {
      const std::string p = j.at("param").get<std::string>();
      if (p == "centered") m.param = Parameterization::Centered;
      else if (p == "noncentered") m.param = Parameterization::NonCentered;
      else throw ConfigError("unknown parameterization '" + p + "'");
    }
    if (j.contains("B")) m.B = j.at("B").get<long>();
    if (j.contains("orthogonalize")) m.orthogonalize = j.at("orthogonalize").get<bool>();
    if (j.contains("trees")) m.trees = j.at("trees").get<int>();
    return m;
  }
};

struct StudyConfig {
  std::vector<ScenarioConfig> scenarios;
  std::vector<MethodConfig> methods;
  int replicates = 500;
  std::uint64_t master_seed = 20240501;
  int workers = 1;

  static StudyConfig from_json(const nlohmann::ordered_json& j) {
    StudyConfig c;
    try {
      for (const auto& sj : j.at("scenarios")) c.scenarios.push_back(ScenarioConfig::from_json(sj));
      for (const auto& mj : j.at("methods")) c.methods.push_back(MethodConfig::from_json(mj));
      if (j.contains("replicates")) c.replicates = j.at("replicates").get<int>();
      if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
      if (j.contains("workers")) c.workers = j.at("workers").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("study config: ") + e.what());
    }
    if (c.replicates < 1) throw ConfigError("replicates must be >= 1");
    if (c.methods.empty()) throw ConfigError("method list must not be empty");
    return c;
  }
};

struct ResultRow {
  int scenario_id = 0;
  std::string family;
  double gamma_mult = 0.0;
  int replicate = 0;
  std::string method;
  std::optional<double> statistic;
  std::optional<double> p;
  std::optional<double> surprise;
  std::string top1_variable;
  std::optional<int> top1_in_truth;
  double seconds = 0.0;
};

inline const char* kResultsHeader =
    "scenario_id,family,gamma_mult,replicate,method,statistic,p,surprise,"
    "top1_variable,top1_in_truth,seconds";

inline std::string format_result_row(const ResultRow& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? csv::format_double(*v) : std::string();
  };
  std::string line;
  line += std::to_string(r.scenario_id);
  line += ',' + r.family;
  line += ',' + csv::format_double(r.gamma_mult);
  line += ',' + std::to_string(r.replicate);
  line += ',' + r.method;
  line += ',' + opt(r.statistic);
  line += ',' + opt(r.p);
  line += ',' + opt(r.surprise);
  line += ',' + r.top1_variable;
  line += ',' + (r.top1_in_truth ? std::to_string(*r.top1_in_truth) : std::string());
  line += ',' + csv::format_double(r.seconds);
  return line;
}

inline std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::vector<ResultRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    const auto f = csv::parse_line(line, 0);
    if (f.size() != 11) continue;
    ResultRow r;
    r.scenario_id = std::stoi(f[0]);
    r.family = f[1];
    r.gamma_mult = std::stod(f[2]);
    r.replicate = std::stoi(f[3]);
    r.method = f[4];
    if (!f[5].empty()) r.statistic = std::stod(f[5]);
    if (!f[6].empty()) r.p = std::stod(f[6]);
    if (!f[7].empty()) r.surprise = std::stod(f[7]);
    r.top1_variable = f[8];
    if (!f[9].empty()) r.top1_in_truth = std::stoi(f[9]);
    if (!f[10].empty()) r.seconds = std::stod(f[10]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// --------------------------------------------------------------------------
// Applying one method to one generated trial.

inline ResultRow apply_method(const MethodConfig& mc, const GeneratedTrial& trial,
                              std::uint64_t seed) {
  const Dataset& d = trial.dataset;
  ResultRow row;
  row.method = mc.label();
  const auto t0 = std::chrono::steady_clock::now();

  std::set<std::string> truth_names;
  for (int id : trial.truth.predictive_ids)
    truth_names.insert(d.covariates[static_cast<std::size_t>(id)].name);

  auto finish_test = [&](const TestResult& t) {
    row.statistic = t.statistic;
    row.p = t.p_value;
    row.surprise = t.surprise;
  };
  auto finish_importance = [&](const VariableImportance& vi) {
    row.top1_variable = vi.top1();
    row.top1_in_truth = truth_names.count(vi.top1()) ? 1 : 0;
  };

  switch (mc.kind) {
    case MethodConfig::Kind::ResidualPerm: {
      const AdjustedDesign adj = prognostic_adjustment(
          d, mc.adjust, mc.adjust == AdjustStrategy::Oracle ? &trial.truth.f_prog : nullptr,
          seed_mix(seed, "adjust"));
      const FittedModel m = fit_model(d, adj, mc.param);
      const ScoreVector sv = score_residuals(m, d);
      const ExpandedCovariates ec = expand_covariates(d);
      finish_test(independence_test(sv, ec, mc.stat, PermReference::MonteCarlo(mc.B),
                                    seed_mix(seed, "perm")));
      break;
    }
    case MethodConfig::Kind::LRTAsymptotic: {
      const AdjustedDesign adj = prognostic_adjustment(
          d, mc.adjust, mc.adjust == AdjustStrategy::Oracle ? &trial.truth.f_prog : nullptr,
          seed_mix(seed, "adjust"));
      finish_test(lrt_interaction(d, adj, mc.param));
      break;
    }
    case MethodConfig::Kind::LRTBootstrap: {
      const AdjustedDesign adj = prognostic_adjustment(
          d, mc.adjust, mc.adjust == AdjustStrategy::Oracle ? &trial.truth.f_prog : nullptr,
          seed_mix(seed, "adjust"));
      finish_test(bootstrap_lrt(d, adj, mc.param, mc.B, seed_mix(seed, "boot")));
      break;
    }
    case MethodConfig::Kind::MOBRoot: {
      const AdjustedDesign adj = prognostic_adjustment(
          d, mc.adjust, mc.adjust == AdjustStrategy::Oracle ? &trial.truth.f_prog : nullptr,
          seed_mix(seed, "adjust"));
      const FittedModel m = fit_model(d, adj, mc.param);
      finish_test(mob_root_test(m, d, mc.orthogonalize, mc.B, seed_mix(seed, "mob")));
      break;
    }
    case MethodConfig::Kind::Oracle:
      finish_test(oracle_test(d, trial.truth.f_prog, trial.truth.f_pred));
      break;
    case MethodConfig::Kind::ForestImportance: {
      const AdjustedDesign adj = prognostic_adjustment(
          d, mc.adjust, mc.adjust == AdjustStrategy::Oracle ? &trial.truth.f_prog : nullptr,
          seed_mix(seed, "adjust"));
      const FittedModel m = fit_model(d, adj, Parameterization::Centered);
      const ScoreVector sv = score_residuals(m, d);
      finish_importance(forest_importance(sv.s, d, mc.trees, seed_mix(seed, "forest")));
      break;
    }
    case MethodConfig::Kind::LRTImportance: {
      const AdjustedDesign adj = prognostic_adjustment(
          d, mc.adjust, mc.adjust == AdjustStrategy::Oracle ? &trial.truth.f_prog : nullptr,
          seed_mix(seed, "adjust"));
      finish_importance(lrt_importance(d, adj, Parameterization::Centered));
      break;
    }
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

// --------------------------------------------------------------------------
// The study runner. Streams rows to an append-only CSV (flushed per
// replicate); rerunning skips (scenario, replicate) pairs that already carry
// a row for every configured method.

struct StudySummaryEntry {
  int scenario_id;
  std::string family;
  double gamma_mult;
  std::string method;
  long n;
  double median_surprise;
  double ks_uniform;
  double frac_below_05;
  double top1_prob;
};

inline void run_study(const StudyConfig& cfg, const std::string& results_path,
                      std::ostream* progress = nullptr) {
  std::map<std::tuple<int, std::string, double, int>, std::set<std::string>> done;
  for (const auto& r : read_results_csv(results_path))
    done[{r.scenario_id, r.family, r.gamma_mult, r.replicate}].insert(r.method);

  const bool fresh = !std::ifstream(results_path).good();
  std::ofstream out(results_path, std::ios::app);
  if (!out) throw IoError("cannot open results file '" + results_path + "'");
  if (fresh) out << kResultsHeader << '\n';

  std::set<std::string> all_methods;
  for (const auto& m : cfg.methods) all_methods.insert(m.label());

  struct Task {
    std::size_t scenario_index;
    int replicate;
    std::set<std::string> already_done;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < cfg.scenarios.size(); ++s) {
    const auto& sc = cfg.scenarios[s];
    for (int r = 0; r < cfg.replicates; ++r) {
      auto it = done.find({sc.scenario_id, family_name(sc.family), sc.gamma_mult, r});
      std::set<std::string> have = it == done.end() ? std::set<std::string>{} : it->second;
      bool complete = true;
      for (const auto& m : all_methods)
        if (!have.count(m)) complete = false;
      if (complete) continue;
      tasks.push_back({s, r, std::move(have)});
    }
  }
  if (progress)
    *progress << "study: " << tasks.size() << " replicate(s) to run, "
              << cfg.scenarios.size() << " scenario(s), " << cfg.methods.size()
              << " method(s)\n";

  // ordered sink: rows appear in task order regardless of scheduling
  std::mutex sink_mutex;
  std::map<std::size_t, std::vector<ResultRow>> pending;
  std::size_t next_flush = 0;

  parallel_for(tasks.size(), cfg.workers, [&](std::size_t ti) {
    const Task& task = tasks[ti];
    const ScenarioConfig& sc = cfg.scenarios[task.scenario_index];
    ScenarioConfig scr = sc;
    const std::string scenario_key = "s" + std::to_string(sc.scenario_id) + "_" +
                                     family_name(sc.family) + "_g" +
                                     csv::format_double(sc.gamma_mult);
    scr.seed = seed_mix(seed_mix(cfg.master_seed, scenario_key),
                        static_cast<std::uint64_t>(task.replicate));
    const GeneratedTrial trial = generate_trial(scr);
    const std::uint64_t data_hash = dataset_hash(trial.dataset);

    std::vector<ResultRow> rows;
    for (const auto& mc : cfg.methods) {
      if (task.already_done.count(mc.label())) continue;
      if (dataset_hash(trial.dataset) != data_hash)
        throw FitError("same-data discipline violated: dataset changed between methods");
      ResultRow row;
      try {
        row = apply_method(mc, trial, seed_mix(scr.seed, mc.label()));
      } catch (const std::exception& e) {
        row.method = mc.label();
        row.top1_variable = "";
        if (progress) {
          std::lock_guard<std::mutex> lock(sink_mutex);
          *progress << "  [fail] scenario " << sc.scenario_id << " rep " << task.replicate
                    << " " << mc.label() << ": " << e.what() << '\n';
        }
      }
      row.scenario_id = sc.scenario_id;
      row.family = family_name(sc.family);
      row.gamma_mult = sc.gamma_mult;
      row.replicate = task.replicate;
      rows.push_back(std::move(row));
    }

    std::lock_guard<std::mutex> lock(sink_mutex);
    pending[ti] = std::move(rows);
    while (!pending.empty() && pending.begin()->first == next_flush) {
      for (const auto& r : pending.begin()->second) out << format_result_row(r) << '\n';
      out.flush();
      pending.erase(pending.begin());
      ++next_flush;
    }
  });
}

// --------------------------------------------------------------------------
// Summary measures

struct EcdfTable {
  std::vector<double> p;     // sorted
  std::vector<double> ecdf;  // cumulative fractions
  double ks = 0.0;
};

inline std::vector<const ResultRow*> select_rows(const std::vector<ResultRow>& rows,
                                                 int scenario_id, const std::string& family,
                                                 double gamma_mult, const std::string& method) {
  std::vector<const ResultRow*> out;
  for (const auto& r : rows)
    if (r.scenario_id == scenario_id && r.family == family &&
        std::abs(r.gamma_mult - gamma_mult) < 1e-12 && r.method == method)
      out.push_back(&r);
  return out;
}

inline EcdfTable ecdf_pvalues(const std::vector<ResultRow>& rows, int scenario_id,
                              const std::string& family, double gamma_mult,
                              const std::string& method) {
  EcdfTable t;
  for (const auto* r : select_rows(rows, scenario_id, family, gamma_mult, method))
    if (r->p) t.p.push_back(*r->p);
  if (t.p.empty()) throw ValidationError("ecdf: no p-values for the requested cell");
  std::sort(t.p.begin(), t.p.end());
  const double n = static_cast<double>(t.p.size());
  for (std::size_t i = 0; i < t.p.size(); ++i)
    t.ecdf.push_back(static_cast<double>(i + 1) / n);
  t.ks = ks_distance_uniform(t.p);
  return t;
}

inline double median_surprise(const std::vector<ResultRow>& rows, int scenario_id,
                              const std::string& family, double gamma_mult,
                              const std::string& method) {
  std::vector<double> s;
  for (const auto* r : select_rows(rows, scenario_id, family, gamma_mult, method))
    if (r->surprise) s.push_back(*r->surprise);
  if (s.empty()) throw ValidationError("median_surprise: empty result set");
  return median(std::move(s));
}

struct Top1Summary {
  double prob_in_truth = 0.0;
  std::map<std::string, long> selection_counts;
  long n = 0;
};

inline Top1Summary top1_predictive_prob(const std::vector<ResultRow>& rows, int scenario_id,
                                        const std::string& family, double gamma_mult,
                                        const std::string& method) {
  Top1Summary t;
  long hits = 0;
  for (const auto* r : select_rows(rows, scenario_id, family, gamma_mult, method)) {
    if (r->top1_variable.empty()) continue;
    ++t.n;
    ++t.selection_counts[r->top1_variable];
    if (r->top1_in_truth && *r->top1_in_truth == 1) ++hits;
  }
  if (t.n == 0) throw ValidationError("top1: no importance rows for the requested cell");
  t.prob_in_truth = static_cast<double>(hits) / static_cast<double>(t.n);
  return t;
}

}  // namespace hetscore
