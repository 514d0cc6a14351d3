#pragma once

// Small helpers for constructing datasets in tests.

#include <string>
#include <vector>

#include "hetscore/dataset.hpp"
#include "hetscore/rng.hpp"

namespace testdata {

inline hetscore::Covariate numeric_cov(const std::string& name, std::vector<double> v) {
  hetscore::Covariate c;
  c.name = name;
  c.numeric = std::move(v);
  return c;
}

inline hetscore::Covariate categorical_cov(const std::string& name,
                                           std::vector<std::string> levels,
                                           std::vector<int> codes) {
  hetscore::Covariate c;
  c.name = name;
  c.kind = hetscore::CovariateKind::with_levels(std::move(levels));
  c.codes = std::move(codes);
  return c;
}

inline hetscore::Dataset make_dataset(hetscore::Family family, std::vector<double> y,
                                      std::vector<double> z,
                                      std::vector<hetscore::Covariate> covs = {},
                                      std::vector<int> event = {}) {
  hetscore::Dataset d;
  d.family = family;
  d.n = y.size();
  d.outcome = std::move(y);
  d.treatment_raw = std::move(z);
  if (!event.empty()) d.event = std::move(event);
  d.covariates = std::move(covs);
  d.validate();
  return d;
}

// A generic seeded dataset with one treatment column and `k` standard-normal
// covariates; the outcome follows the requested family with linear predictor
// b0 + bx * x1 + delta * z.
inline hetscore::Dataset random_dataset(hetscore::Family family, int n, int k,
                                        std::uint64_t seed, double b0 = 0.2, double bx = 0.7,
                                        double delta = 0.5, double theta = 2.0) {
  hetscore::Rng rng(seed);
  std::vector<hetscore::Covariate> covs;
  std::vector<std::vector<double>> xs(k, std::vector<double>(n));
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < n; ++i) xs[j][i] = rng.normal();
  for (int j = 0; j < k; ++j) covs.push_back(numeric_cov("x" + std::to_string(j + 1), xs[j]));
  std::vector<double> z(n, 0.0);
  for (int i = n / 2; i < n; ++i) z[i] = 1.0;
  rng.shuffle(z);
  std::vector<double> y(n);
  std::vector<int> event;
  for (int i = 0; i < n; ++i) {
    const double eta = b0 + bx * xs[0][i] + delta * z[i];
    switch (family) {
      case hetscore::Family::Normal: y[i] = eta + rng.normal(); break;
      case hetscore::Family::Binomial:
        y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-eta))) ? 1.0 : 0.0;
        break;
      case hetscore::Family::NegBin:
        y[i] = static_cast<double>(rng.negative_binomial(std::exp(eta), theta));
        break;
      case hetscore::Family::CoxPH: {
        const double t = rng.exponential(0.1 * std::exp(eta));
        const double c = rng.exponential(0.05);
        y[i] = std::min(t, c);
        event.push_back(t <= c ? 1 : 0);
        break;
      }
    }
  }
  return make_dataset(family, std::move(y), std::move(z), std::move(covs), std::move(event));
}

}  // namespace testdata
