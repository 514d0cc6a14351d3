#pragma once

// Variable importance for treatment-effect modifiers:
//  - regression forest on the score residuals with out-of-bag permutation
//    importance (categorical variables permuted as a whole)
//  - per-variable likelihood-ratio ranking from the full interaction model

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetscore/adjustment.hpp"
#include "hetscore/dataset.hpp"
#include "hetscore/errors.hpp"
#include "hetscore/global_tests.hpp"
#include "hetscore/rng.hpp"

namespace hetscore {

struct VariableImportance {
  enum class Method { ForestPermutation, LRTRanking };
  Method method = Method::ForestPermutation;
  std::vector<std::string> variable_names;
  std::vector<double> per_variable;
  std::vector<int> ranking;       // variable indices, most important first
  Eigen::MatrixXd per_tree;       // trees x k (forest only)

  const std::string& top1() const { return variable_names[ranking.front()]; }
};

struct ForestParams {
  // Split-variable selection. Cart picks the variable with the best raw
  // variance-reduction gain; that competition favours variables with many
  // candidate cutpoints, so categorical covariates almost never surface in
  // null rankings. Assoc first picks the variable by a standardized
  // association p-value (comparable across variable kinds) and only then
  // searches the cutpoint, which keeps null top-1 frequencies uniform.
  enum class Splitter { Assoc, Cart };
  Splitter splitter = Splitter::Assoc;
  int n_trees = 100;
  int min_node_size = 20;
  int max_depth = 6;
  int mtry = 0;  // 0 -> ceil(sqrt(k))
};

namespace forest_detail {

// One covariate, in split-friendly form.
struct Feature {
  bool categorical = false;
  std::vector<double> values;  // numeric values or level codes as doubles
  int n_levels = 0;
};

struct Node {
  int var = -1;               // -1 for leaf
  double threshold = 0.0;     // numeric split: x <= threshold goes left
  std::uint32_t left_mask = 0;  // categorical split: level bit set goes left
  int left = -1, right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<Node> nodes;
  std::vector<char> used;  // per variable

  double predict(const std::vector<Feature>& f, int row) const {
    int cur = 0;
    while (nodes[cur].var >= 0) {
      const Node& nd = nodes[cur];
      const double x = f[nd.var].values[row];
      bool go_left;
      if (f[nd.var].categorical)
        go_left = (nd.left_mask >> static_cast<int>(x)) & 1u;
      else
        go_left = x <= nd.threshold;
      cur = go_left ? nd.left : nd.right;
    }
    return nodes[cur].value;
  }

  // predict with one variable's value overridden (for permutation importance)
  double predict_override(const std::vector<Feature>& f, int row, int var, double xval) const {
    int cur = 0;
    while (nodes[cur].var >= 0) {
      const Node& nd = nodes[cur];
      const double x = nd.var == var ? xval : f[nd.var].values[row];
      bool go_left;
      if (f[nd.var].categorical)
        go_left = (nd.left_mask >> static_cast<int>(x)) & 1u;
      else
        go_left = x <= nd.threshold;
      cur = go_left ? nd.left : nd.right;
    }
    return nodes[cur].value;
  }
};

struct SplitChoice {
  bool found = false;
  int var = -1;
  double threshold = 0.0;
  std::uint32_t left_mask = 0;
  double gain = -1.0;
};

// Best variance-reduction split of `rows` on variable `v`. Children must
// keep at least `min_child` rows.
inline SplitChoice best_split_on(const std::vector<Feature>& f, const std::vector<double>& y,
                                 const std::vector<int>& rows, int v, int min_child) {
  SplitChoice best;
  const Feature& ft = f[v];
  const int m = static_cast<int>(rows.size());
  double total = 0.0;
  for (int r : rows) total += y[r];

  if (!ft.categorical) {
    std::vector<std::pair<double, double>> xy(m);
    for (int i = 0; i < m; ++i) xy[i] = {ft.values[rows[i]], y[rows[i]]};
    std::sort(xy.begin(), xy.end());
    double left_sum = 0.0;
    for (int i = 0; i < m - 1; ++i) {
      left_sum += xy[i].second;
      if (xy[i].first == xy[i + 1].first) continue;
      const int nl = i + 1, nr = m - nl;
      if (nl < min_child || nr < min_child) continue;
      const double rs = total - left_sum;
      const double gain = left_sum * left_sum / nl + rs * rs / nr;
      if (gain > best.gain) {
        best.found = true;
        best.var = v;
        best.threshold = 0.5 * (xy[i].first + xy[i + 1].first);
        best.gain = gain;
      }
    }
  } else {
    // order the levels present by their mean response, then scan prefixes
    std::vector<double> lsum(ft.n_levels, 0.0);
    std::vector<int> lcnt(ft.n_levels, 0);
    for (int r : rows) {
      const int code = static_cast<int>(ft.values[r]);
      lsum[code] += y[r];
      ++lcnt[code];
    }
    std::vector<int> present;
    for (int l = 0; l < ft.n_levels; ++l)
      if (lcnt[l] > 0) present.push_back(l);
    if (present.size() < 2) return best;
    std::sort(present.begin(), present.end(), [&](int a, int b) {
      return lsum[a] / lcnt[a] < lsum[b] / lcnt[b];
    });
    std::uint32_t mask = 0;
    double left_sum = 0.0;
    int nl = 0;
    for (std::size_t i = 0; i + 1 < present.size(); ++i) {
      mask |= 1u << present[i];
      left_sum += lsum[present[i]];
      nl += lcnt[present[i]];
      const int nr = m - nl;
      if (nl < min_child || nr < min_child) continue;
      const double rs = total - left_sum;
      const double gain = left_sum * left_sum / nl + rs * rs / nr;
      if (gain > best.gain) {
        best.found = true;
        best.var = v;
        best.left_mask = mask;
        best.gain = gain;
      }
    }
  }
  // center the gain so it is comparable across candidate variables
  if (best.found) best.gain -= total * total / m;
  return best;
}

// Standardized association p-value of one variable with the node response;
// chi-squared scale with matching degrees of freedom, so numeric, binary and
// multi-level variables compete fairly.
inline double node_association_pvalue(const Feature& ft, const std::vector<double>& y,
                                      const std::vector<int>& rows) {
  const int m = static_cast<int>(rows.size());
  double ybar = 0;
  for (int r : rows) ybar += y[r];
  ybar /= m;
  double vy = 0;
  for (int r : rows) vy += (y[r] - ybar) * (y[r] - ybar);
  vy /= m;
  if (vy <= 0) return 1.0;
  if (!ft.categorical) {
    double xbar = 0;
    for (int r : rows) xbar += ft.values[r];
    xbar /= m;
    double vx = 0, cxy = 0;
    for (int r : rows) {
      vx += (ft.values[r] - xbar) * (ft.values[r] - xbar);
      cxy += (ft.values[r] - xbar) * (y[r] - ybar);
    }
    vx /= m;
    cxy /= m;
    if (vx <= 0) return 1.0;
    const double stat = m * cxy * cxy / (vx * vy);
    return hetscore::chi_squared_tail(stat, 1);
  }
  std::vector<double> lsum(ft.n_levels, 0.0);
  std::vector<int> lcnt(ft.n_levels, 0);
  for (int r : rows) {
    const int code = static_cast<int>(ft.values[r]);
    lsum[code] += y[r];
    ++lcnt[code];
  }
  double stat = 0;
  int present = 0;
  for (int l = 0; l < ft.n_levels; ++l) {
    if (lcnt[l] == 0) continue;
    ++present;
    const double d = lsum[l] / lcnt[l] - ybar;
    stat += lcnt[l] * d * d;
  }
  if (present < 2) return 1.0;
  return hetscore::chi_squared_tail(stat / vy, present - 1);
}

inline void build_node(Tree& tree, int node_id, const std::vector<Feature>& f,
                       const std::vector<double>& y, std::vector<int>&& rows, int depth,
                       const ForestParams& par, int mtry, Rng& rng) {
  Node& nd0 = tree.nodes[node_id];
  double sum = 0.0;
  for (int r : rows) sum += y[r];
  nd0.value = sum / static_cast<double>(rows.size());

  if (depth >= par.max_depth || static_cast<int>(rows.size()) < par.min_node_size) return;

  // sample mtry candidate variables without replacement
  const int k = static_cast<int>(f.size());
  std::vector<int> vars(k);
  std::iota(vars.begin(), vars.end(), 0);
  for (int i = 0; i < mtry; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(k - i)));
    std::swap(vars[i], vars[j]);
  }
  const int min_child = std::max(1, par.min_node_size / 4);
  SplitChoice best;
  if (par.splitter == ForestParams::Splitter::Assoc) {
    int chosen = -1;
    double best_p = 1.0 + 1e-9;
    for (int c = 0; c < mtry; ++c) {
      const double p = node_association_pvalue(f[vars[c]], y, rows);
      if (p < best_p) {
        best_p = p;
        chosen = vars[c];
      }
    }
    if (chosen >= 0) best = best_split_on(f, y, rows, chosen, min_child);
  } else {
    for (int c = 0; c < mtry; ++c) {
      SplitChoice sc = best_split_on(f, y, rows, vars[c], min_child);
      if (sc.found && (!best.found || sc.gain > best.gain)) best = sc;
    }
  }
  if (!best.found || best.gain <= 1e-12) return;

  std::vector<int> lrows, rrows;
  const Feature& ft = f[best.var];
  for (int r : rows) {
    bool go_left = ft.categorical ? ((best.left_mask >> static_cast<int>(ft.values[r])) & 1u)
                                  : ft.values[r] <= best.threshold;
    (go_left ? lrows : rrows).push_back(r);
  }
  rows.clear();
  rows.shrink_to_fit();

  const int li = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  const int ri = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  Node& nd = tree.nodes[node_id];
  nd.var = best.var;
  nd.threshold = best.threshold;
  nd.left_mask = best.left_mask;
  nd.left = li;
  nd.right = ri;
  tree.used[best.var] = 1;
  build_node(tree, li, f, y, std::move(lrows), depth + 1, par, mtry, rng);
  build_node(tree, ri, f, y, std::move(rrows), depth + 1, par, mtry, rng);
}

}  // namespace forest_detail

inline VariableImportance forest_importance(const Eigen::VectorXd& s, const Dataset& d,
                                            int n_trees = 100, std::uint64_t seed = 1,
                                            ForestParams params = {}) {
  const int n = static_cast<int>(d.n);
  if (n < 50) throw ValidationError("forest importance requires n >= 50");
  if (static_cast<std::size_t>(s.size()) != d.n)
    throw ValidationError("score/dataset length mismatch");
  const int k = static_cast<int>(d.k());
  params.n_trees = n_trees;
  const int mtry = params.mtry > 0
                       ? params.mtry
                       : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k))));

  std::vector<forest_detail::Feature> feats(k);
  for (int v = 0; v < k; ++v) {
    const auto& c = d.covariates[v];
    feats[v].categorical = c.kind.categorical;
    feats[v].values.resize(d.n);
    if (c.kind.categorical) {
      if (c.kind.levels.size() > 31)
        throw ValidationError("forest importance: categorical variable with > 31 levels");
      feats[v].n_levels = static_cast<int>(c.kind.levels.size());
      for (int i = 0; i < n; ++i) feats[v].values[i] = static_cast<double>(c.codes[i]);
    } else {
      for (int i = 0; i < n; ++i) feats[v].values[i] = c.numeric[i];
    }
  }
  std::vector<double> y(d.n);
  for (int i = 0; i < n; ++i) y[i] = s(i);

  VariableImportance vi;
  vi.method = VariableImportance::Method::ForestPermutation;
  for (const auto& c : d.covariates) vi.variable_names.push_back(c.name);
  vi.per_tree.setZero(n_trees, k);

  for (int t = 0; t < n_trees; ++t) {
    Rng rng(seed_mix(seed_mix(seed, "forest-tree"), static_cast<std::uint64_t>(t)));
    std::vector<char> inbag(d.n, 0);
    std::vector<int> rows;
    rows.reserve(d.n);
    for (int i = 0; i < n; ++i) {
      const int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      rows.push_back(r);
      inbag[r] = 1;
    }
    forest_detail::Tree tree;
    tree.nodes.emplace_back();
    tree.used.assign(k, 0);
    forest_detail::build_node(tree, 0, feats, y, std::move(rows), 0, params, mtry, rng);

    std::vector<int> oob;
    for (int i = 0; i < n; ++i)
      if (!inbag[i]) oob.push_back(i);
    if (oob.empty()) continue;
    double base = 0.0;
    for (int i : oob) {
      const double e = y[i] - tree.predict(feats, i);
      base += e * e;
    }
    base /= static_cast<double>(oob.size());

    std::vector<int> perm(oob.size());
    for (int v = 0; v < k; ++v) {
      if (!tree.used[v]) continue;  // unused variable: identical predictions
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      double mse = 0.0;
      for (std::size_t i = 0; i < oob.size(); ++i) {
        const double xv = feats[v].values[oob[static_cast<std::size_t>(perm[i])]];
        const double e = y[oob[i]] - tree.predict_override(feats, oob[i], v, xv);
        mse += e * e;
      }
      mse /= static_cast<double>(oob.size());
      vi.per_tree(t, v) = mse - base;
    }
  }

  vi.per_variable.resize(k);
  for (int v = 0; v < k; ++v) vi.per_variable[v] = vi.per_tree.col(v).mean();
  vi.ranking.resize(k);
  std::iota(vi.ranking.begin(), vi.ranking.end(), 0);
  std::sort(vi.ranking.begin(), vi.ranking.end(), [&](int a, int b) {
    if (vi.per_variable[a] != vi.per_variable[b]) return vi.per_variable[a] > vi.per_variable[b];
    return vi.variable_names[a] < vi.variable_names[b];
  });
  return vi;
}

// Ranking by per-variable likelihood-ratio test: full interaction model vs
// the model dropping only that variable's interaction terms.
inline VariableImportance lrt_importance(const Dataset& d, const AdjustedDesign& adj,
                                         Parameterization param,
                                         std::vector<std::string>* warnings = nullptr) {
  const InteractionDesign idx = build_interaction_design(d, adj, param);
  const FittedModel full = fit_design(d, idx.full_X, idx.full_names);
  const double n = static_cast<double>(d.n);

  VariableImportance vi;
  vi.method = VariableImportance::Method::LRTRanking;
  vi.variable_names = idx.variable_names;
  const int k = static_cast<int>(idx.variable_names.size());
  vi.per_variable.resize(k);
  std::vector<double> pvals(k, 1.0);

  for (int v = 0; v < k; ++v) {
    const auto& drop = idx.interaction_cols_per_variable[v];
    std::vector<int> keep;
    for (int c = 0; c < idx.full_X.cols(); ++c)
      if (std::find(drop.begin(), drop.end(), c) == drop.end()) keep.push_back(c);
    Eigen::MatrixXd Xr(idx.full_X.rows(), static_cast<Eigen::Index>(keep.size()));
    std::vector<std::string> names;
    for (std::size_t j = 0; j < keep.size(); ++j) {
      Xr.col(static_cast<Eigen::Index>(j)) = idx.full_X.col(keep[j]);
      names.push_back(idx.full_names[keep[j]]);
    }
    double p = 1.0;
    try {
      const FittedModel red = fit_design(d, Xr, names);
      const double q = static_cast<double>(drop.size());
      if (d.family == Family::Normal) {
        const double sse0 = red.sigma2 * n;
        const double sse1 = full.sigma2 * n;
        const double df2 = n - static_cast<double>(idx.full_X.cols());
        const double F = ((sse0 - sse1) / q) / (sse1 / df2);
        p = f_tail(F, q, df2);
      } else {
        const double D = std::max(0.0, 2.0 * (full.loglik - red.loglik));
        p = chi_squared_tail(D, q);
      }
    } catch (const FitError& e) {
      if (warnings)
        warnings->push_back("variable '" + idx.variable_names[v] + "': " + e.what() +
                            " (p set to 1)");
      p = 1.0;
    }
    pvals[v] = std::max(p, 1e-300);
    vi.per_variable[v] = -std::log2(pvals[v]);
  }
  vi.ranking.resize(k);
  std::iota(vi.ranking.begin(), vi.ranking.end(), 0);
  std::sort(vi.ranking.begin(), vi.ranking.end(), [&](int a, int b) {
    if (pvals[a] != pvals[b]) return pvals[a] < pvals[b];
    return vi.variable_names[a] < vi.variable_names[b];
  });
  return vi;
}

// Long-format export for box plots: tree, variable, importance.
inline void save_importance_trees_csv(const VariableImportance& vi, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "tree,variable,importance\n";
  for (Eigen::Index t = 0; t < vi.per_tree.rows(); ++t)
    for (Eigen::Index v = 0; v < vi.per_tree.cols(); ++v)
      out << (t + 1) << ',' << vi.variable_names[static_cast<std::size_t>(v)] << ','
          << csv::format_double(vi.per_tree(t, v)) << '\n';
}

}  // namespace hetscore
