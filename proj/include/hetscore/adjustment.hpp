#pragma once

// Prognostic-adjustment strategies and assembly of the fitted models:
//   All    - every covariate, dummy-expanded
//   Lasso  - union of variables selected by per-arm LASSO
//   Risk   - single linear risk score from a ridge fit without treatment
//   Oracle - the true prognostic effect column (simulation only)

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetscore/dataset.hpp"
#include "hetscore/errors.hpp"
#include "hetscore/fitters.hpp"
#include "hetscore/penalized.hpp"

namespace hetscore {

enum class AdjustStrategy { All, Lasso, Risk, Oracle };

inline std::string adjust_name(AdjustStrategy s) {
  switch (s) {
    case AdjustStrategy::All: return "all";
    case AdjustStrategy::Lasso: return "lasso";
    case AdjustStrategy::Risk: return "risk";
    case AdjustStrategy::Oracle: return "oracle";
  }
  return "?";
}

inline AdjustStrategy adjust_from_name(const std::string& s) {
  if (s == "all") return AdjustStrategy::All;
  if (s == "lasso") return AdjustStrategy::Lasso;
  if (s == "risk") return AdjustStrategy::Risk;
  if (s == "oracle") return AdjustStrategy::Oracle;
  throw ValidationError("unknown adjustment strategy '" + s + "'");
}

struct AdjustedDesign {
  AdjustStrategy strategy = AdjustStrategy::All;
  Eigen::MatrixXd prognostic;          // n x q (q may be 0)
  std::vector<std::string> names;      // q column names
  std::string provenance;
  std::vector<std::string> warnings;
};

inline Dataset subset_rows(const Dataset& d, const std::vector<int>& rows) {
  Dataset s;
  s.family = d.family;
  s.n = rows.size();
  s.outcome.reserve(rows.size());
  s.treatment_raw.reserve(rows.size());
  for (int i : rows) {
    s.outcome.push_back(d.outcome[i]);
    s.treatment_raw.push_back(d.treatment_raw[i]);
  }
  if (d.event) {
    s.event = std::vector<int>();
    for (int i : rows) s.event->push_back((*d.event)[i]);
  }
  if (d.treatment_centered) {
    s.treatment_centered = std::vector<double>();
    for (int i : rows) s.treatment_centered->push_back((*d.treatment_centered)[i]);
  }
  for (const auto& c : d.covariates) {
    Covariate cc;
    cc.name = c.name;
    cc.kind = c.kind;
    if (c.kind.categorical)
      for (int i : rows) cc.codes.push_back(c.codes[i]);
    else
      for (int i : rows) cc.numeric.push_back(c.numeric[i]);
    s.covariates.push_back(std::move(cc));
  }
  return s;
}

// Variables with any nonzero dummy coefficient at the selected lambda.
inline std::set<std::string> selected_variables(const PenalizedFit& fit,
                                                const ExpandedCovariates& ec) {
  std::set<std::string> vars;
  for (std::size_t v = 0; v < ec.variable_columns.size(); ++v)
    for (int col : ec.variable_columns[v])
      if (std::abs(fit.coef_at_opt(col)) > 0.0) vars.insert(ec.variable_names[v]);
  return vars;
}

inline AdjustedDesign prognostic_adjustment(
    const Dataset& d, AdjustStrategy strategy,
    const std::vector<double>* true_prognostic = nullptr, std::uint64_t seed = 1,
    int folds = 10) {
  AdjustedDesign out;
  out.strategy = strategy;
  const ExpandedCovariates ec = expand_covariates(d);

  switch (strategy) {
    case AdjustStrategy::All: {
      out.prognostic = ec.X;
      out.names = ec.names;
      out.provenance = "all covariates";
      return out;
    }
    case AdjustStrategy::Oracle: {
      if (!true_prognostic)
        throw ValidationError("oracle adjustment requires the true prognostic values");
      out.prognostic.resize(static_cast<Eigen::Index>(d.n), 1);
      for (std::size_t i = 0; i < d.n; ++i)
        out.prognostic(static_cast<Eigen::Index>(i), 0) = (*true_prognostic)[i];
      out.names = {"f_prog"};
      out.provenance = "true prognostic effect";
      return out;
    }
    case AdjustStrategy::Risk: {
      const PenalizedFit ridge =
          fit_penalized(d, Penalty::Ridge, folds, /*exclude_treatment=*/true,
                        seed_mix(seed, "risk-ridge"));
      out.prognostic.resize(static_cast<Eigen::Index>(d.n), 1);
      Eigen::VectorXd score = ec.X * ridge.coef_at_opt;
      // unit variance: the span is what matters downstream, and the raw
      // shrinkage scale would distort coefficient-magnitude diagnostics
      const double m = score.mean();
      const double sd = std::sqrt((score.array() - m).square().sum() /
                                  static_cast<double>(d.n));
      if (sd > 1e-12) score = (score.array() - m) / sd;
      out.prognostic.col(0) = score;
      out.names = {"risk_score"};
      out.provenance = "ridge risk score, lambda_opt=" + csv::format_double(ridge.lambda_opt);
      return out;
    }
    case AdjustStrategy::Lasso: {
      // per-arm LASSO, union of the selected variables
      std::vector<int> arm0, arm1;
      for (std::size_t i = 0; i < d.n; ++i)
        (d.treatment_raw[i] > 0.0 ? arm1 : arm0).push_back(static_cast<int>(i));
      std::set<std::string> vars;
      bool fallback = false;
      for (int arm = 0; arm < 2; ++arm) {
        const auto& rows = arm == 0 ? arm0 : arm1;
        if (rows.size() < static_cast<std::size_t>(folds)) {
          out.warnings.push_back("arm " + std::to_string(arm) + " smaller than fold count");
          fallback = true;
          break;
        }
        Dataset sub = subset_rows(d, rows);
        if (d.family == Family::CoxPH) {
          int events = 0;
          for (int e : *sub.event) events += e;
          if (events < 10) {
            out.warnings.push_back("arm " + std::to_string(arm) + " has fewer than 10 events; "
                                   "falling back to the risk adjustment");
            fallback = true;
            break;
          }
        }
        const PenalizedFit lf = fit_penalized(sub, Penalty::Lasso, folds, true,
                                              seed_mix(seed, arm == 0 ? "lasso-arm0" : "lasso-arm1"));
        const ExpandedCovariates sec = expand_covariates(sub);
        for (const auto& v : selected_variables(lf, sec)) vars.insert(v);
      }
      if (fallback) {
        AdjustedDesign risk = prognostic_adjustment(d, AdjustStrategy::Risk, nullptr, seed, folds);
        risk.strategy = AdjustStrategy::Lasso;
        risk.provenance = "risk fallback: " + risk.provenance;
        risk.warnings.insert(risk.warnings.end(), out.warnings.begin(), out.warnings.end());
        return risk;
      }
      std::vector<int> cols;
      for (std::size_t v = 0; v < ec.variable_names.size(); ++v)
        if (vars.count(ec.variable_names[v]))
          for (int c : ec.variable_columns[v]) cols.push_back(c);
      out.prognostic.resize(static_cast<Eigen::Index>(d.n), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t j = 0; j < cols.size(); ++j) {
        out.prognostic.col(static_cast<Eigen::Index>(j)) = ec.X.col(cols[j]);
        out.names.push_back(ec.names[cols[j]]);
      }
      std::string prov = "per-arm lasso selected {";
      bool first = true;
      for (const auto& v : vars) {
        if (!first) prov += ",";
        prov += v;
        first = false;
      }
      out.provenance = prov + "}";
      return out;
    }
  }
  throw ValidationError("unknown adjustment strategy");
}

// --------------------------------------------------------------------------
// Model assembly

// Main-effects model: [intercept (non-Cox)] + prognostic columns + treatment.
inline FittedModel fit_model(const Dataset& d, const AdjustedDesign& adj,
                             Parameterization param) {
  const bool cox = d.family == Family::CoxPH;
  const Eigen::Index n = static_cast<Eigen::Index>(d.n);
  const Eigen::Index q = adj.prognostic.cols();
  const Eigen::Index p = (cox ? 0 : 1) + q + 1;
  Eigen::MatrixXd X(n, p);
  std::vector<std::string> names;
  Eigen::Index col = 0;
  if (!cox) {
    X.col(col++).setOnes();
    names.push_back("(intercept)");
  }
  for (Eigen::Index j = 0; j < q; ++j) {
    X.col(col++) = adj.prognostic.col(j);
    names.push_back(adj.names[j]);
  }
  const auto& z = d.treatment(param);
  X.col(col) = Eigen::Map<const Eigen::VectorXd>(z.data(), n);
  names.push_back("treatment");

  FittedModel m = fit_design(d, X, std::move(names));
  m.parameterization = param;
  m.treatment_index = static_cast<int>(p - 1);
  return m;
}

// Interaction design on top of a main design: treatment times every
// dummy-expanded covariate column.
struct InteractionDesign {
  Eigen::MatrixXd main_X;
  Eigen::MatrixXd full_X;
  std::vector<std::string> main_names;
  std::vector<std::string> full_names;
  std::vector<std::vector<int>> interaction_cols_per_variable;  // indices in full_X
  std::vector<std::string> variable_names;
  int treatment_index = -1;
};

inline InteractionDesign build_interaction_design(const Dataset& d, const AdjustedDesign& adj,
                                                  Parameterization param) {
  const bool cox = d.family == Family::CoxPH;
  const ExpandedCovariates ec = expand_covariates(d);
  const Eigen::Index n = static_cast<Eigen::Index>(d.n);
  const Eigen::Index q = adj.prognostic.cols();
  const Eigen::Index m = ec.X.cols();
  const Eigen::Index p_main = (cox ? 0 : 1) + q + 1;

  InteractionDesign idx;
  idx.main_X.resize(n, p_main);
  Eigen::Index col = 0;
  if (!cox) {
    idx.main_X.col(col++).setOnes();
    idx.main_names.push_back("(intercept)");
  }
  for (Eigen::Index j = 0; j < q; ++j) {
    idx.main_X.col(col++) = adj.prognostic.col(j);
    idx.main_names.push_back(adj.names[j]);
  }
  const auto& z = d.treatment(param);
  const Eigen::Map<const Eigen::VectorXd> zv(z.data(), n);
  idx.main_X.col(col) = zv;
  idx.main_names.push_back("treatment");
  idx.treatment_index = static_cast<int>(col);

  idx.full_X.resize(n, p_main + m);
  idx.full_X.leftCols(p_main) = idx.main_X;
  idx.full_names = idx.main_names;
  idx.variable_names = ec.variable_names;
  for (std::size_t v = 0; v < ec.variable_columns.size(); ++v) {
    std::vector<int> cols;
    for (int c : ec.variable_columns[v]) {
      const Eigen::Index fc = p_main + c;
      idx.full_X.col(fc) = zv.cwiseProduct(ec.X.col(c));
      idx.full_names.push_back("treatment:" + ec.names[c]);
      cols.push_back(static_cast<int>(fc));
    }
    idx.interaction_cols_per_variable.push_back(std::move(cols));
  }
  return idx;
}

}  // namespace hetscore
