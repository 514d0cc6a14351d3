#pragma once

// Trial dataset model: outcome (+ optional event indicator), raw and centered
// treatment columns, mixed-type covariates with recorded categorical levels,
// CSV ingestion/validation and reference-coded dummy expansion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hetscore/csv.hpp"
#include "hetscore/errors.hpp"

namespace hetscore {

enum class Family { Normal, Binomial, NegBin, CoxPH };

inline std::string family_name(Family f) {
  switch (f) {
    case Family::Normal: return "normal";
    case Family::Binomial: return "binomial";
    case Family::NegBin: return "negbin";
    case Family::CoxPH: return "cox";
  }
  return "?";
}

inline Family family_from_name(const std::string& s) {
  if (s == "normal") return Family::Normal;
  if (s == "binomial") return Family::Binomial;
  if (s == "negbin") return Family::NegBin;
  if (s == "cox") return Family::CoxPH;
  throw ValidationError("unknown family '" + s + "'");
}

enum class Parameterization { Centered, NonCentered };

struct CovariateKind {
  bool categorical = false;
  std::vector<std::string> levels;  // first-appearance order; empty for numeric

  static CovariateKind numeric() { return {}; }
  static CovariateKind with_levels(std::vector<std::string> lv) {
    CovariateKind k;
    k.categorical = true;
    k.levels = std::move(lv);
    return k;
  }
};

struct Covariate {
  std::string name;
  CovariateKind kind;
  std::vector<double> numeric;  // values when numeric
  std::vector<int> codes;       // level indices when categorical

  std::size_t size() const { return kind.categorical ? codes.size() : numeric.size(); }
};

// How the treatment expectation is obtained for centering.
struct CenterKnown { double p; };
struct CenterEmpirical {};
using Centering = std::variant<CenterKnown, CenterEmpirical>;

struct Dataset {
  Family family = Family::Normal;
  std::size_t n = 0;
  std::vector<double> outcome;                    // time for CoxPH
  std::optional<std::vector<int>> event;          // CoxPH only
  std::vector<double> treatment_raw;
  std::optional<std::vector<double>> treatment_centered;
  std::vector<Covariate> covariates;

  std::size_t k() const { return covariates.size(); }

  const std::vector<double>& treatment(Parameterization p) const {
    if (p == Parameterization::NonCentered) return treatment_raw;
    if (!treatment_centered)
      throw ValidationError("centered treatment requested but not computed");
    return *treatment_centered;
  }

  void validate() const {
    if (outcome.size() != n) throw ValidationError("outcome length != n");
    if (treatment_raw.size() != n) throw ValidationError("treatment length != n");
    if (treatment_centered && treatment_centered->size() != n)
      throw ValidationError("centered treatment length != n");
    if (family == Family::CoxPH) {
      if (!event) throw ValidationError("event column required for cox family");
      if (event->size() != n) throw ValidationError("event length != n");
      for (std::size_t i = 0; i < n; ++i) {
        if (!(outcome[i] > 0.0))
          throw ValidationError("row " + std::to_string(i + 1) + ": time-to-event must be > 0");
        if ((*event)[i] != 0 && (*event)[i] != 1)
          throw ValidationError("row " + std::to_string(i + 1) + ": event outside {0,1}");
      }
    } else if (event) {
      throw ValidationError("event not allowed for family '" + family_name(family) + "'");
    }
    if (family == Family::Binomial) {
      for (std::size_t i = 0; i < n; ++i)
        if (outcome[i] != 0.0 && outcome[i] != 1.0)
          throw ValidationError("row " + std::to_string(i + 1) + ": binary outcome outside {0,1}");
    }
    if (family == Family::NegBin) {
      for (std::size_t i = 0; i < n; ++i)
        if (outcome[i] < 0.0 || outcome[i] != std::floor(outcome[i]))
          throw ValidationError("row " + std::to_string(i + 1) +
                                ": count outcome must be a non-negative integer");
    }
    for (const auto& c : covariates) {
      if (c.size() != n) throw ValidationError("covariate '" + c.name + "' length != n");
      if (c.kind.categorical) {
        if (c.kind.levels.empty())
          throw ValidationError("covariate '" + c.name + "': empty level list");
        for (int code : c.codes)
          if (code < 0 || code >= static_cast<int>(c.kind.levels.size()))
            throw ValidationError("covariate '" + c.name + "': level code out of range");
      } else {
        for (double v : c.numeric)
          if (!std::isfinite(v))
            throw ValidationError("covariate '" + c.name + "': non-finite value");
      }
    }
  }
};

// --------------------------------------------------------------------------
// Treatment centering

inline Dataset center_treatment(const Dataset& d, const Centering& how) {
  Dataset out = d;
  double c;
  if (std::holds_alternative<CenterKnown>(how)) {
    c = std::get<CenterKnown>(how).p;
    bool binary = std::all_of(d.treatment_raw.begin(), d.treatment_raw.end(),
                              [](double z) { return z == 0.0 || z == 1.0; });
    if (binary && (c < 0.0 || c > 1.0))
      throw ValidationError("known treatment expectation outside [0,1] for binary treatment");
  } else {
    c = 0.0;
    for (double z : d.treatment_raw) c += z;
    c /= static_cast<double>(d.n);
  }
  std::vector<double> centered(d.n);
  for (std::size_t i = 0; i < d.n; ++i) centered[i] = d.treatment_raw[i] - c;
  out.treatment_centered = std::move(centered);
  return out;
}

inline Dataset ensure_centered(const Dataset& d) {
  if (d.treatment_centered) return d;
  return center_treatment(d, CenterEmpirical{});
}

// --------------------------------------------------------------------------
// Effect measures (binary outcome rates)

struct EffectMeasures {
  double difference;
  double ratio;
  double odds_ratio;
};

inline EffectMeasures effect_measures(double p1, double p0) {
  if (!(p1 > 0.0 && p1 < 1.0 && p0 > 0.0 && p0 < 1.0))
    throw ValidationError("effect_measures: rates must lie in (0,1)");
  return {p1 - p0, p1 / p0, (p1 / (1.0 - p1)) / (p0 / (1.0 - p0))};
}

// --------------------------------------------------------------------------
// Schema sidecar: JSON mapping column -> role and column -> kind.

struct ColumnSchema {
  std::string name;
  bool categorical = false;
};

struct Schema {
  Family family = Family::Normal;
  std::string outcome;
  std::string treatment;
  std::optional<std::string> event;
  std::vector<ColumnSchema> covariates;  // declaration order preserved
  std::optional<double> treatment_expectation;  // Known(p) when present

  static Schema from_json(const nlohmann::ordered_json& j) {
    Schema s;
    try {
      s.family = family_from_name(j.at("family").get<std::string>());
      s.outcome = j.at("outcome").get<std::string>();
      s.treatment = j.at("treatment").get<std::string>();
      if (j.contains("event") && !j.at("event").is_null())
        s.event = j.at("event").get<std::string>();
      if (j.contains("treatment_expectation") && !j.at("treatment_expectation").is_null())
        s.treatment_expectation = j.at("treatment_expectation").get<double>();
      for (const auto& [name, kind] : j.at("covariates").items()) {
        const std::string ks = kind.get<std::string>();
        if (ks != "numeric" && ks != "categorical")
          throw ValidationError("covariate '" + name + "': kind must be numeric or categorical");
        s.covariates.push_back({name, ks == "categorical"});
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("schema: ") + e.what());
    }
    return s;
  }

  static Schema load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schema '" + path + "'");
    nlohmann::ordered_json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("schema '" + path + "': " + e.what());
    }
    return from_json(j);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["family"] = family_name(family);
    j["outcome"] = outcome;
    j["treatment"] = treatment;
    if (event) j["event"] = *event;
    if (treatment_expectation) j["treatment_expectation"] = *treatment_expectation;
    nlohmann::ordered_json cov;
    for (const auto& c : covariates) cov[c.name] = c.categorical ? "categorical" : "numeric";
    j["covariates"] = cov;
    return j;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write schema '" + path + "'");
    out << to_json().dump(2) << '\n';
  }
};

// --------------------------------------------------------------------------
// CSV ingestion

inline Dataset load_dataset(const std::string& path, const Schema& schema) {
  const csv::Table t = csv::read_file(path);
  auto col_index = [&](const std::string& name) -> std::size_t {
    auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end()) throw ValidationError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - t.header.begin());
  };

  if (schema.event && schema.family != Family::CoxPH)
    throw ValidationError("event not allowed for family '" + family_name(schema.family) + "'");
  if (!schema.event && schema.family == Family::CoxPH)
    throw ValidationError("event column required for cox family");

  Dataset d;
  d.family = schema.family;
  d.n = t.rows.size();
  if (d.n == 0) throw ValidationError("'" + path + "': no data rows");

  const std::size_t yi = col_index(schema.outcome);
  const std::size_t zi = col_index(schema.treatment);
  std::optional<std::size_t> ei;
  if (schema.event) ei = col_index(*schema.event);

  d.outcome.resize(d.n);
  d.treatment_raw.resize(d.n);
  if (ei) d.event = std::vector<int>(d.n);

  for (std::size_t r = 0; r < d.n; ++r) {
    const std::size_t line_no = r + 2;  // header is line 1
    const auto& row = t.rows[r];
    if (row[yi].empty()) throw ValidationError("line " + std::to_string(line_no) + ": missing value in column '" + schema.outcome + "'");
    if (row[zi].empty()) throw ValidationError("line " + std::to_string(line_no) + ": missing value in column '" + schema.treatment + "'");
    d.outcome[r] = csv::parse_double(row[yi], line_no, schema.outcome);
    d.treatment_raw[r] = csv::parse_double(row[zi], line_no, schema.treatment);
    if (ei) {
      const double ev = csv::parse_double(row[*ei], line_no, *schema.event);
      if (ev != 0.0 && ev != 1.0)
        throw ValidationError("line " + std::to_string(line_no) + ": event value outside {0,1}");
      (*d.event)[r] = static_cast<int>(ev);
    }
  }

  for (const auto& cs : schema.covariates) {
    const std::size_t ci = col_index(cs.name);
    Covariate cov;
    cov.name = cs.name;
    if (cs.categorical) {
      cov.kind.categorical = true;
      cov.codes.resize(d.n);
      for (std::size_t r = 0; r < d.n; ++r) {
        const std::string& label = t.rows[r][ci];
        if (label.empty())
          throw ValidationError("line " + std::to_string(r + 2) + ": missing value in column '" + cs.name + "'");
        auto it = std::find(cov.kind.levels.begin(), cov.kind.levels.end(), label);
        if (it == cov.kind.levels.end()) {
          cov.kind.levels.push_back(label);
          cov.codes[r] = static_cast<int>(cov.kind.levels.size()) - 1;
        } else {
          cov.codes[r] = static_cast<int>(it - cov.kind.levels.begin());
        }
      }
    } else {
      cov.numeric.resize(d.n);
      for (std::size_t r = 0; r < d.n; ++r) {
        if (t.rows[r][ci].empty())
          throw ValidationError("line " + std::to_string(r + 2) + ": missing value in column '" + cs.name + "'");
        cov.numeric[r] = csv::parse_double(t.rows[r][ci], r + 2, cs.name);
      }
    }
    d.covariates.push_back(std::move(cov));
  }

  d.validate();
  return d;
}

inline void save_dataset(const Dataset& d, const Schema& schema, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  std::vector<std::string> header{schema.outcome, schema.treatment};
  if (schema.event) header.push_back(*schema.event);
  for (const auto& c : d.covariates) header.push_back(c.name);
  csv::write_row(out, header);
  std::vector<std::string> row(header.size());
  for (std::size_t i = 0; i < d.n; ++i) {
    std::size_t f = 0;
    row[f++] = csv::format_double(d.outcome[i]);
    row[f++] = csv::format_double(d.treatment_raw[i]);
    if (schema.event) row[f++] = std::to_string((*d.event)[i]);
    for (const auto& c : d.covariates)
      row[f++] = c.kind.categorical ? c.kind.levels[c.codes[i]] : csv::format_double(c.numeric[i]);
    csv::write_row(out, row);
  }
}

// --------------------------------------------------------------------------
// Dummy expansion: reference-coded, reference = first-appearance level.

struct ExpandedCovariates {
  Eigen::MatrixXd X;                            // n x m expanded matrix
  std::vector<std::string> names;               // m column names
  std::vector<std::vector<int>> variable_columns;  // per original covariate
  std::vector<std::string> variable_names;      // k original covariate names
};

inline ExpandedCovariates expand_covariates(const Dataset& d) {
  ExpandedCovariates e;
  std::size_t m = 0;
  for (const auto& c : d.covariates)
    m += c.kind.categorical ? c.kind.levels.size() - 1 : 1;
  e.X.resize(static_cast<Eigen::Index>(d.n), static_cast<Eigen::Index>(m));
  std::size_t col = 0;
  for (const auto& c : d.covariates) {
    e.variable_names.push_back(c.name);
    std::vector<int> cols;
    if (c.kind.categorical) {
      for (std::size_t l = 1; l < c.kind.levels.size(); ++l) {
        for (std::size_t i = 0; i < d.n; ++i)
          e.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) =
              c.codes[i] == static_cast<int>(l) ? 1.0 : 0.0;
        e.names.push_back(c.name + "=" + c.kind.levels[l]);
        cols.push_back(static_cast<int>(col));
        ++col;
      }
    } else {
      for (std::size_t i = 0; i < d.n; ++i)
        e.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) = c.numeric[i];
      e.names.push_back(c.name);
      cols.push_back(static_cast<int>(col));
      ++col;
    }
    e.variable_columns.push_back(std::move(cols));
  }
  return e;
}

// Cheap content hash, used to assert same-data discipline across methods.
inline std::uint64_t dataset_hash(const Dataset& d) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_double = [&h](double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    for (int s = 0; s < 64; s += 8) {
      h ^= (bits >> s) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix_double(static_cast<double>(d.n));
  for (double v : d.outcome) mix_double(v);
  for (double v : d.treatment_raw) mix_double(v);
  if (d.event)
    for (int v : *d.event) mix_double(static_cast<double>(v));
  for (const auto& c : d.covariates) {
    if (c.kind.categorical)
      for (int v : c.codes) mix_double(static_cast<double>(v));
    else
      for (double v : c.numeric) mix_double(v);
  }
  return h;
}

}  // namespace hetscore
