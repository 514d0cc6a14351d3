#pragma once

// Small statistical helpers shared across modules: distribution tails,
// rank correlation, empirical distribution summaries.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>

#include "hetscore/errors.hpp"

namespace hetscore {

inline double normal_cdf(double x) {
  static const boost::math::normal_distribution<> dist(0.0, 1.0);
  return boost::math::cdf(dist, x);
}

inline double normal_quantile(double p) {
  static const boost::math::normal_distribution<> dist(0.0, 1.0);
  return boost::math::quantile(dist, p);
}

inline double chi_squared_tail(double x, double df) {
  if (x <= 0.0) return 1.0;
  boost::math::chi_squared_distribution<> dist(df);
  return boost::math::cdf(boost::math::complement(dist, x));
}

inline double chi_squared_quantile(double p, double df) {
  boost::math::chi_squared_distribution<> dist(df);
  return boost::math::quantile(dist, p);
}

inline double f_tail(double x, double df1, double df2) {
  if (x <= 0.0) return 1.0;
  boost::math::fisher_f_distribution<> dist(df1, df2);
  return boost::math::cdf(boost::math::complement(dist, x));
}

// Evidence scale: -log2(p). Defined for p in (0, 1].
inline double surprise(double p) {
  if (!(p > 0.0) || p > 1.0)
    throw ValidationError("surprise: p-value must lie in (0, 1]");
  return -std::log2(p);
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size() - 1);
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of empty set");
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.end());
  return 0.5 * (hi + v[n / 2 - 1]);
}

// Kendall's tau-b (tie adjusted), O(n^2); inputs here are short vectors.
inline double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) { ++ties_x; continue; }
      if (dy == 0.0) { ++ties_y; continue; }
      if ((dx > 0) == (dy > 0)) ++concordant; else ++discordant;
    }
  }
  const double n0 = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  double tx = 0, ty = 0;
  {
    // Count tied pairs per value for the tau-b denominator.
    std::vector<double> sx = x, sy = y;
    std::sort(sx.begin(), sx.end());
    std::sort(sy.begin(), sy.end());
    auto tied_pairs = [](const std::vector<double>& s) {
      double t = 0;
      std::size_t i = 0;
      while (i < s.size()) {
        std::size_t j = i;
        while (j < s.size() && s[j] == s[i]) ++j;
        const double run = static_cast<double>(j - i);
        t += 0.5 * run * (run - 1);
        i = j;
      }
      return t;
    };
    tx = tied_pairs(sx);
    ty = tied_pairs(sy);
  }
  const double denom = std::sqrt((n0 - tx) * (n0 - ty));
  if (denom == 0.0) return 0.0;
  return static_cast<double>(concordant - discordant) / denom;
}

// Kolmogorov-Smirnov distance of a sample from Uniform(0,1).
inline double ks_distance_uniform(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    d = std::max(d, (static_cast<double>(i) + 1.0) / n - p[i]);
    d = std::max(d, p[i] - static_cast<double>(i) / n);
  }
  return d;
}

// Chi-square goodness-of-fit of observed counts against equal cell
// probabilities. Returns the test statistic; df is bins-1.
inline double chi_squared_gof_uniform(const std::vector<long>& counts) {
  const double total = static_cast<double>(
      std::accumulate(counts.begin(), counts.end(), 0L));
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (long c : counts) {
    const double d = static_cast<double>(c) - expected;
    stat += d * d / expected;
  }
  return stat;
}

inline double empirical_fraction_below(const std::vector<double>& v, double cut) {
  std::size_t c = 0;
  for (double x : v)
    if (x < cut) ++c;
  return static_cast<double>(c) / static_cast<double>(v.size());
}

}  // namespace hetscore
