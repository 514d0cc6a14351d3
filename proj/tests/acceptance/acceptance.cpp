// Acceptance suite: one self-contained check per criterion, each printing a
// single [PASS]/[FAIL] line with the measured quantities. Run all criteria
// with no arguments, or a subset by number: ./acceptance 6 13

#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hetscore/bench.hpp"
#include "hetscore/datagen.hpp"
#include "hetscore/global_tests.hpp"
#include "hetscore/importance.hpp"
#include "hetscore/parallel.hpp"
#include "hetscore/scores.hpp"
#include "oracles.hpp"
#include "testdata.hpp"

using namespace hetscore;

namespace {

struct CheckResult {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "FAILED " + what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
  return buf;
}

AdjustedDesign all_cov(const Dataset& d) { return prognostic_adjustment(d, AdjustStrategy::All); }

// ---------------------------------------------------------------------------
// C1: effect-measure arithmetic for the two-subgroup reference table.

CheckResult c01() {
  CheckResult o;
  const EffectMeasures a = effect_measures(0.8, 1.0 / 3.0);
  const EffectMeasures b = effect_measures(0.25, 0.04);
  o.check(std::abs(a.difference - 0.467) <= 1e-3, "difference(sub) " + fmt(a.difference));
  o.check(std::abs(a.ratio - 2.4) <= 1e-3, "ratio(sub) " + fmt(a.ratio));
  o.check(std::abs(a.odds_ratio - 8.0) <= 1e-3, "odds-ratio(sub) " + fmt(a.odds_ratio));
  o.check(std::abs(b.difference - 0.21) <= 1e-3, "difference(comp) " + fmt(b.difference));
  o.check(std::abs(b.ratio - 6.25) <= 1e-3, "ratio(comp) " + fmt(b.ratio));
  o.check(std::abs(b.odds_ratio - 8.0) <= 1e-3, "odds-ratio(comp) " + fmt(b.odds_ratio));
  o.note("diff=" + fmt(a.difference) + "/" + fmt(b.difference) + " ratio=" + fmt(a.ratio) +
         "/" + fmt(b.ratio) + " or=" + fmt(a.odds_ratio) + "/" + fmt(b.odds_ratio));
  return o;
}

// ---------------------------------------------------------------------------
// C2: the logistic fit targets the model-dependent estimand on a large draw
// from the two-subgroup population.

CheckResult c02() {
  CheckResult o;
  const int n = 1000000;
  Rng rng(220208);
  std::vector<double> y(n), z(n), g(n);
  for (int i = 0; i < n; ++i) {
    const bool sub = rng.bernoulli(0.5);
    const bool trt = rng.bernoulli(0.5);
    const double rate = sub ? (trt ? 0.8 : 1.0 / 3.0) : (trt ? 0.25 : 0.04);
    y[i] = rng.bernoulli(rate) ? 1.0 : 0.0;
    z[i] = trt ? 1.0 : 0.0;
    g[i] = sub ? 1.0 : 0.0;
  }
  Dataset d = testdata::make_dataset(Family::Binomial, y, z,
                                     {testdata::numeric_cov("subgroup", g)});
  AdjustedDesign none;
  none.prognostic.resize(n, 0);
  const double unadj =
      fit_model(d, none, Parameterization::NonCentered).treatment_effect();
  const double adj =
      fit_model(d, all_cov(d), Parameterization::NonCentered).treatment_effect();
  o.check(std::abs(unadj - 1.57) <= 0.02, "unadjusted estimand " + fmt(unadj));
  o.check(std::abs(adj - 2.08) <= 0.02, "adjusted estimand " + fmt(adj));
  o.note("unadjusted=" + fmt(unadj) + " adjusted=" + fmt(adj));
  return o;
}

// ---------------------------------------------------------------------------
// C3: closed-form normal score residuals.

CheckResult c03() {
  CheckResult o;
  double max_dev = 0.0;
  bool control_zero = true;
  for (int rep = 0; rep < 5; ++rep) {
    Dataset d = center_treatment(
        testdata::random_dataset(Family::Normal, 120, 3, 3300 + rep), CenterEmpirical{});
    const FittedModel mc = fit_model(d, all_cov(d), Parameterization::Centered);
    const ScoreVector sc = score_residuals(mc, d);
    for (std::size_t i = 0; i < d.n; ++i) {
      const double expected =
          (d.outcome[i] - mc.eta(static_cast<Eigen::Index>(i))) * (*d.treatment_centered)[i];
      max_dev = std::max(max_dev, std::abs(sc.s(static_cast<Eigen::Index>(i)) - expected));
    }
    const FittedModel mn = fit_model(d, all_cov(d), Parameterization::NonCentered);
    const ScoreVector sn = score_residuals(mn, d);
    for (std::size_t i = 0; i < d.n; ++i)
      if (d.treatment_raw[i] == 0.0 && sn.s(static_cast<Eigen::Index>(i)) != 0.0)
        control_zero = false;
  }
  o.check(max_dev <= 1e-10, "elementwise identity, max dev " + fmt(max_dev));
  o.check(control_zero, "control subjects nonzero under non-centered parameterization");
  o.note("max |s - r*z| = " + fmt(max_dev) + ", control zeros exact=" +
         (control_zero ? "yes" : "no"));
  return o;
}

// ---------------------------------------------------------------------------
// C4: per-subject finite-difference gradient oracle, all families.

CheckResult c04() {
  CheckResult o;
  const double h = 1e-5;
  double worst_rel = 0.0;
  for (Family fam : {Family::Normal, Family::Binomial, Family::NegBin, Family::CoxPH}) {
    for (int rep = 0; rep < 5; ++rep) {
      Dataset d = center_treatment(
          testdata::random_dataset(fam, 90, 2, 4400 + rep), CenterEmpirical{});
      const FittedModel m = fit_model(d, all_cov(d), Parameterization::Centered);
      const ScoreVector sv = score_residuals(m, d);
      oracles::PerSubjectLoss L;
      L.y = d.outcome;
      if (d.event) L.event = *d.event;
      L.theta = m.theta;
      const double delta = m.treatment_effect();
      L.z.resize(d.n);
      L.eta_base.resize(d.n);
      for (std::size_t i = 0; i < d.n; ++i) {
        L.z[i] = m.X(static_cast<Eigen::Index>(i), m.treatment_index);
        L.eta_base[i] = m.eta(static_cast<Eigen::Index>(i)) - delta * L.z[i];
      }
      const double s_max = sv.s.cwiseAbs().maxCoeff();
      for (std::size_t i = 0; i < d.n; ++i) {
        double lp = 0, lm = 0;
        switch (fam) {
          case Family::Normal: lp = L.normal_ll(i, delta + h); lm = L.normal_ll(i, delta - h); break;
          case Family::Binomial: lp = L.binomial_ll(i, delta + h); lm = L.binomial_ll(i, delta - h); break;
          case Family::NegBin: lp = L.negbin_ll(i, delta + h); lm = L.negbin_ll(i, delta - h); break;
          case Family::CoxPH: lp = L.cox_ll(i, delta + h); lm = L.cox_ll(i, delta - h); break;
        }
        const double fd = (lp - lm) / (2 * h);
        const double scale = std::max(std::abs(fd), 1e-3 * s_max);
        const double rel = std::abs(sv.s(static_cast<Eigen::Index>(i)) - fd) / scale;
        worst_rel = std::max(worst_rel, rel);
      }
    }
  }
  o.check(worst_rel <= 1e-4, "worst relative deviation " + fmt(worst_rel));
  o.note("worst relative deviation = " + fmt(worst_rel));
  return o;
}

// ---------------------------------------------------------------------------
// C5: stationarity and reparameterization invariance.

CheckResult c05() {
  CheckResult o;
  double worst_sum = 0, worst_ll = 0, worst_delta = 0, worst_cox = 0;
  for (Family fam : {Family::Normal, Family::Binomial, Family::NegBin, Family::CoxPH}) {
    Dataset d = center_treatment(
        testdata::random_dataset(fam, 160, 3, 5500), CenterEmpirical{});
    const AdjustedDesign adj = all_cov(d);
    const FittedModel mc = fit_model(d, adj, Parameterization::Centered);
    const FittedModel mn = fit_model(d, adj, Parameterization::NonCentered);
    const ScoreVector sc = score_residuals(mc, d);
    const double rel_sum =
        std::abs(sc.s.sum()) / std::max(1.0, sc.s.cwiseAbs().sum());
    worst_sum = std::max(worst_sum, rel_sum);
    worst_ll = std::max(worst_ll, std::abs(mc.loglik - mn.loglik));
    worst_delta = std::max(worst_delta,
                           std::abs(mc.treatment_effect() - mn.treatment_effect()));
    if (fam == Family::CoxPH) {
      const ScoreVector sn = score_residuals(mn, d);
      worst_cox = (sc.s - sn.s).cwiseAbs().maxCoeff();
    }
  }
  o.check(worst_sum <= 1e-6, "score sum relative " + fmt(worst_sum));
  o.check(worst_ll <= 1e-8, "loglik match " + fmt(worst_ll));
  o.check(worst_delta <= 1e-8, "effect match " + fmt(worst_delta));
  o.check(worst_cox <= 1e-10, "cox residual invariance " + fmt(worst_cox));
  o.note("sum_rel=" + fmt(worst_sum) + " dloglik=" + fmt(worst_ll) + " ddelta=" +
         fmt(worst_delta) + " dcox=" + fmt(worst_cox));
  return o;
}

// ---------------------------------------------------------------------------
// C6: Monte-Carlo permutation p within 0.01 of the exhaustive 7!-enumeration.

CheckResult c06() {
  CheckResult o;
  Rng rng(660606);
  std::vector<double> s{0.9, -1.2, 0.4, 2.1, -0.5, -1.4, 0.3};
  std::vector<std::vector<double>> Xref(7, std::vector<double>(2));
  std::vector<double> c1(7), c2(7);
  for (int i = 0; i < 7; ++i) {
    Xref[i][0] = c1[i] = rng.normal();
    Xref[i][1] = c2[i] = 0.3 * c1[i] + rng.normal();
  }
  Dataset d = testdata::make_dataset(Family::Normal, s, std::vector<double>(7, 0.0),
                                     {testdata::numeric_cov("a", c1), testdata::numeric_cov("b", c2)});
  const ExpandedCovariates ec = expand_covariates(d);
  const Eigen::VectorXd sv = Eigen::Map<const Eigen::VectorXd>(s.data(), 7);
  for (bool quad : {false, true}) {
    const double p_ref = oracles::exhaustive_permutation_pvalue(s, Xref, quad);
    const TestResult t = independence_test(sv, ec, quad ? StatType::Quad : StatType::Max,
                                           PermReference::MonteCarlo(50000), 11);
    o.check(std::abs(t.p_value - p_ref) <= 0.01,
            std::string(quad ? "quad" : "max") + " |" + fmt(t.p_value) + " - " + fmt(p_ref) +
                "|");
    o.note(std::string(quad ? "quad" : "max") + ": mc=" + fmt(t.p_value) +
           " exact=" + fmt(p_ref));
  }
  return o;
}

// ---------------------------------------------------------------------------
// C7: desk-scale null calibration of the permutation test with lasso and
// risk adjustment, normal and binomial families.

CheckResult c07() {
  CheckResult o;
  const int reps = 200;
  const long B = 999;
  for (Family fam : {Family::Normal, Family::Binomial}) {
    ScenarioConfig cfg;
    cfg.scenario_id = 1;
    cfg.family = fam;
    cfg.n = 300;
    cfg.gamma_mult = 0.0;
    cfg.seed = 771100 + static_cast<int>(fam);
    cfg.s = calibrate_s(cfg, default_metric_target(fam), default_metric(fam), 100000);
    cfg.gamma0 = calibrate_gamma0(cfg, 0.025, 0.5, 1000);

    std::vector<std::vector<double>> pvals(4);  // lasso/max, lasso/quad, risk/max, risk/quad
    std::vector<GeneratedTrial> trials(reps);
    for (int r = 0; r < reps; ++r) {
      ScenarioConfig rc = cfg;
      rc.seed = seed_mix(seed_mix(cfg.seed, "c7"), r);
      trials[r] = generate_trial(rc);
    }
    std::vector<std::array<double, 4>> per_rep(reps);
    parallel_for(reps, default_workers(), [&](std::size_t r) {
      const GeneratedTrial& trial = trials[r];
      const ExpandedCovariates ec = expand_covariates(trial.dataset);
      int cell = 0;
      for (AdjustStrategy strat : {AdjustStrategy::Lasso, AdjustStrategy::Risk}) {
        const AdjustedDesign adj = prognostic_adjustment(
            trial.dataset, strat, nullptr, seed_mix(trial.dataset.n + r, "adjust"));
        const FittedModel m = fit_model(trial.dataset, adj, Parameterization::Centered);
        const ScoreVector sv = score_residuals(m, trial.dataset);
        for (StatType st : {StatType::Max, StatType::Quad}) {
          const TestResult t = independence_test(
              sv, ec, st, PermReference::MonteCarlo(B), seed_mix(9000 + r, cell));
          per_rep[r][cell] = t.p_value;
          ++cell;
        }
      }
    });
    for (int r = 0; r < reps; ++r)
      for (int cell = 0; cell < 4; ++cell) pvals[cell].push_back(per_rep[r][cell]);

    const char* cells[4] = {"lasso/max", "lasso/quad", "risk/max", "risk/quad"};
    for (int cell = 0; cell < 4; ++cell) {
      const double ks = ks_distance_uniform(pvals[cell]);
      const double f05 = empirical_fraction_below(pvals[cell], 0.05);
      o.check(ks < 0.1, family_name(fam) + " " + cells[cell] + " ks=" + fmt(ks));
      o.check(f05 >= 0.02 && f05 <= 0.09,
              family_name(fam) + " " + cells[cell] + " P(p<0.05)=" + fmt(f05));
      o.note(family_name(fam) + " " + cells[cell] + ": ks=" + fmt(ks, 3) + " f05=" + fmt(f05, 3));
    }
  }
  return o;
}

// ---------------------------------------------------------------------------
// C8: asymptotic interaction LRT is anti-conservative for binomial data
// while the parametric bootstrap stays calibrated.

CheckResult c08() {
  CheckResult o;
  const int reps = 200;
  ScenarioConfig cfg;
  cfg.scenario_id = 1;
  cfg.family = Family::Binomial;
  cfg.n = 500;
  cfg.k = 30;
  cfg.gamma_mult = 0.0;
  cfg.seed = 880001;
  cfg.s = calibrate_s(cfg, 0.66, CalibMetric::AUC, 100000);
  cfg.gamma0 = calibrate_gamma0(cfg, 0.025, 0.5, 1000);

  std::vector<double> p_asym, p_boot;
  std::vector<std::array<double, 2>> per_rep(reps, {-1.0, -1.0});
  parallel_for(reps, default_workers(), [&](std::size_t r) {
    ScenarioConfig rc = cfg;
    rc.seed = seed_mix(seed_mix(cfg.seed, "c8"), r);
    const GeneratedTrial trial = generate_trial(rc);
    try {
      const AdjustedDesign adj = prognostic_adjustment(trial.dataset, AdjustStrategy::Lasso,
                                                       nullptr, seed_mix(rc.seed, "adjust"));
      per_rep[r][0] =
          lrt_interaction(trial.dataset, adj, Parameterization::Centered).p_value;
      per_rep[r][1] = bootstrap_lrt(trial.dataset, adj, Parameterization::Centered, 499,
                                    seed_mix(rc.seed, "boot"))
                          .p_value;
    } catch (const FitError&) {
      // replicate skipped; counted below
    }
  });
  for (int r = 0; r < reps; ++r) {
    if (per_rep[r][0] >= 0) p_asym.push_back(per_rep[r][0]);
    if (per_rep[r][1] >= 0) p_boot.push_back(per_rep[r][1]);
  }
  o.check(static_cast<int>(p_boot.size()) >= 190,
          "completed replicates " + std::to_string(p_boot.size()));
  const double f_asym = empirical_fraction_below(p_asym, 0.05);
  const double f_boot = empirical_fraction_below(p_boot, 0.05);
  o.check(f_asym > 0.065, "asymptotic P(p<0.05)=" + fmt(f_asym));
  o.check(f_boot >= 0.02 && f_boot <= 0.09, "bootstrap P(p<0.05)=" + fmt(f_boot));
  o.note("asym f05=" + fmt(f_asym, 3) + " boot f05=" + fmt(f_boot, 3) + " (n=" +
         std::to_string(p_asym.size()) + ")");
  return o;
}

// ---------------------------------------------------------------------------
// C9: calibration closure of the two power definitions (normal family).

CheckResult c09() {
  CheckResult o;
  ScenarioConfig cfg;
  cfg.scenario_id = 1;
  cfg.family = Family::Normal;
  cfg.n = 500;
  cfg.seed = 990001;
  cfg.s = calibrate_s(cfg, 0.32, CalibMetric::R2, 100000);
  cfg.gamma1_star = calibrate_gamma1(cfg, 0.1, 0.8, 4000);
  ScenarioConfig at_star = cfg;
  at_star.gamma_mult = 1.0;
  const double g0 = calibrate_gamma0(at_star, 0.025, 0.5, 4000);

  // independent verification at 2000 replicates
  ScenarioConfig v = cfg;
  v.seed = seed_mix(cfg.seed, "fresh");
  const auto reps1 = datagen_detail::make_power_replicates(v, 2000, "c9-verify-g1");
  const double pw1 = oracle_interaction_power(v, reps1, cfg.gamma1_star, 0.1);
  ScenarioConfig v0 = at_star;
  v0.seed = seed_mix(cfg.seed, "fresh0");
  const auto reps0 = datagen_detail::make_power_replicates(v0, 2000, "c9-verify-g0");
  const double pw0 = overall_effect_power(v0, reps0, g0, at_star.gamma1(), 0.025);
  o.check(std::abs(pw1 - 0.8) <= 0.03, "interaction power " + fmt(pw1));
  o.check(std::abs(pw0 - 0.5) <= 0.03, "overall-effect power " + fmt(pw0));
  o.note("gamma1*=" + fmt(cfg.gamma1_star) + " power=" + fmt(pw1, 3) + "; gamma0=" + fmt(g0) +
         " power=" + fmt(pw0, 3));
  return o;
}

// ---------------------------------------------------------------------------
// C10: median surprise of the permutation max test is nondecreasing in the
// heterogeneity multiplier for every family, starting near 1 under the null.

CheckResult c10() {
  CheckResult o;
  const int reps = 200;
  const long B = 999;
  const std::vector<double> mults{0.0, 0.5, 1.0, 1.5, 2.0};
  for (Family fam : {Family::Normal, Family::Binomial, Family::NegBin, Family::CoxPH}) {
    ScenarioConfig cfg;
    cfg.scenario_id = 1;
    cfg.family = fam;
    cfg.n = 300;
    cfg.seed = 101000 + static_cast<int>(fam);
    if (fam == Family::CoxPH) {
      cfg.s = calibrate_s(cfg, default_metric_target(fam), default_metric(fam), 100000);
      cfg.lambda0 = calibrate_lambda0(cfg, 100000);
      cfg.s = calibrate_s(cfg, default_metric_target(fam), default_metric(fam), 100000);
      cfg.lambda0 = calibrate_lambda0(cfg, 100000);
    } else {
      cfg.s = calibrate_s(cfg, default_metric_target(fam), default_metric(fam), 100000);
    }
    cfg.gamma1_star = calibrate_gamma1(cfg, 0.1, 0.8, 1000);

    std::vector<double> medians;
    for (double mult : mults) {
      ScenarioConfig mc = cfg;
      mc.gamma_mult = mult;
      mc.gamma0 = calibrate_gamma0(mc, 0.025, 0.5, 1000);
      std::vector<double> surprises(reps);
      parallel_for(reps, default_workers(), [&](std::size_t r) {
        ScenarioConfig rc = mc;
        rc.seed = seed_mix(seed_mix(mc.seed, "c10-" + family_name(fam)) +
                               static_cast<std::uint64_t>(mult * 8),
                           r);
        const GeneratedTrial trial = generate_trial(rc);
        const AdjustedDesign adj = prognostic_adjustment(trial.dataset, AdjustStrategy::Lasso,
                                                         nullptr, seed_mix(rc.seed, "adjust"));
        const FittedModel m = fit_model(trial.dataset, adj, Parameterization::Centered);
        const ScoreVector sv = score_residuals(m, trial.dataset);
        const ExpandedCovariates ec = expand_covariates(trial.dataset);
        const TestResult t = independence_test(sv, ec, StatType::Max,
                                               PermReference::MonteCarlo(B),
                                               seed_mix(rc.seed, "perm"));
        surprises[r] = t.surprise;
      });
      medians.push_back(median(surprises));
    }
    o.check(std::abs(medians[0] - 1.0) <= 0.3,
            family_name(fam) + " null median surprise " + fmt(medians[0]));
    for (std::size_t i = 0; i + 1 < medians.size(); ++i)
      o.check(medians[i + 1] >= medians[i] - 1e-9,
              family_name(fam) + " monotone at step " + std::to_string(i) + " (" +
                  fmt(medians[i]) + " -> " + fmt(medians[i + 1]) + ")");
    std::string curve = family_name(fam) + ":";
    for (double m : medians) curve += " " + fmt(m, 3);
    o.note(curve);
  }
  return o;
}

// ---------------------------------------------------------------------------
// C11: the illustration's correlation structure across 200 replicates.

namespace illu {

Dataset make(std::uint64_t seed, bool heterogeneous) {
  Rng rng(seed);
  const int n = 200;
  std::vector<double> x1(n), x2(n), z(n, 0.0), y(n);
  for (int i = 0; i < n; ++i) {
    x1[i] = rng.normal();
    x2[i] = rng.normal();
  }
  for (int i = 0; i < n / 2; ++i) z[i] = 1.0;
  rng.shuffle(z);
  for (int i = 0; i < n; ++i) {
    const double het = heterogeneous ? 3.0 * z[i] * x1[i] : 0.0;
    y[i] = 1.0 + 3.0 * x1[i] + 3.0 * z[i] + het + rng.normal();
  }
  return testdata::make_dataset(Family::Normal, y, z,
                                {testdata::numeric_cov("x1", x1), testdata::numeric_cov("x2", x2)});
}

// model variants: 1 = centered, adjust x1; 5 = non-centered, adjust x2 only
double tau(const Dataset& d0, int model) {
  Dataset d = center_treatment(d0, CenterKnown{0.5});
  AdjustedDesign adj;
  const Eigen::Index n = static_cast<Eigen::Index>(d.n);
  adj.prognostic.resize(n, 1);
  const int cov = model == 1 ? 0 : 1;
  for (Eigen::Index i = 0; i < n; ++i) adj.prognostic(i, 0) = d.covariates[cov].numeric[i];
  adj.names = {d.covariates[cov].name};
  const FittedModel m = fit_model(
      d, adj, model == 1 ? Parameterization::Centered : Parameterization::NonCentered);
  const ScoreVector sv = score_residuals(m, d);
  std::vector<double> s(sv.s.data(), sv.s.data() + sv.s.size());
  return kendall_tau(s, d.covariates[0].numeric);
}

}  // namespace illu

CheckResult c11() {
  CheckResult o;
  const int reps = 200;
  std::vector<double> m1_null, m1_het, m5_null;
  for (int r = 0; r < reps; ++r) {
    const Dataset dn = illu::make(111000 + r, false);
    const Dataset dh = illu::make(111000 + r, true);
    m1_null.push_back(std::abs(illu::tau(dn, 1)));
    m1_het.push_back(illu::tau(dh, 1));
    m5_null.push_back(std::abs(illu::tau(dn, 5)));
  }
  const double md_null = median(m1_null);
  const double md_het = median(m1_het);
  const double md_m5 = median(m5_null);
  o.check(md_null < 0.1, "M1 homogeneous median |tau| " + fmt(md_null));
  o.check(md_het >= 0.5 && md_het <= 0.7, "M1 heterogeneous median tau " + fmt(md_het));
  o.check(md_m5 > 0.2, "M5 homogeneous median |tau| " + fmt(md_m5));
  o.note("M1 null=" + fmt(md_null, 3) + " M1 het=" + fmt(md_het, 3) + " M5 null=" +
         fmt(md_m5, 3));
  return o;
}

// ---------------------------------------------------------------------------
// C12: forest importance null top-1 uniformity, and superiority over the
// per-variable LRT ranking under heterogeneity.

CheckResult c12() {
  CheckResult o;
  ScenarioConfig cfg;
  cfg.scenario_id = 1;
  cfg.family = Family::Normal;
  cfg.n = 500;
  cfg.k = 30;
  cfg.seed = 121001;
  cfg.s = calibrate_s(cfg, 0.32, CalibMetric::R2, 100000);
  cfg.gamma1_star = calibrate_gamma1(cfg, 0.1, 0.8, 1000);

  // null uniformity over 500 replicates
  const int null_reps = 500;
  std::vector<int> top_index(null_reps, -1);
  {
    ScenarioConfig nc = cfg;
    nc.gamma_mult = 0.0;
    nc.gamma0 = calibrate_gamma0(nc, 0.025, 0.5, 1000);
    parallel_for(null_reps, default_workers(), [&](std::size_t r) {
      ScenarioConfig rc = nc;
      rc.seed = seed_mix(seed_mix(nc.seed, "c12-null"), r);
      const GeneratedTrial trial = generate_trial(rc);
      const AdjustedDesign adj = prognostic_adjustment(trial.dataset, AdjustStrategy::Lasso,
                                                       nullptr, seed_mix(rc.seed, "adjust"));
      const FittedModel m = fit_model(trial.dataset, adj, Parameterization::Centered);
      const ScoreVector sv = score_residuals(m, trial.dataset);
      const VariableImportance vi =
          forest_importance(sv.s, trial.dataset, 100, seed_mix(rc.seed, "forest"));
      top_index[r] = vi.ranking.front();
    });
  }
  std::vector<long> counts(cfg.k, 0);
  for (int t : top_index) ++counts[t];
  const double gof = chi_squared_gof_uniform(counts);
  const double crit = chi_squared_quantile(0.99, cfg.k - 1);
  o.check(gof <= crit, "null top-1 GOF " + fmt(gof) + " > crit " + fmt(crit));

  // heterogeneity at 2 gamma1*: forest beats the LRT ranking
  const int het_reps = 500;
  std::vector<std::array<int, 2>> hits(het_reps, {0, 0});
  {
    ScenarioConfig hc = cfg;
    hc.gamma_mult = 2.0;
    hc.gamma0 = calibrate_gamma0(hc, 0.025, 0.5, 1000);
    parallel_for(het_reps, default_workers(), [&](std::size_t r) {
      ScenarioConfig rc = hc;
      rc.seed = seed_mix(seed_mix(hc.seed, "c12-het"), r);
      const GeneratedTrial trial = generate_trial(rc);
      std::set<std::string> truth;
      for (int id : trial.truth.predictive_ids)
        truth.insert(trial.dataset.covariates[id].name);
      const AdjustedDesign adj = prognostic_adjustment(trial.dataset, AdjustStrategy::Lasso,
                                                       nullptr, seed_mix(rc.seed, "adjust"));
      const FittedModel m = fit_model(trial.dataset, adj, Parameterization::Centered);
      const ScoreVector sv = score_residuals(m, trial.dataset);
      const VariableImportance forest =
          forest_importance(sv.s, trial.dataset, 100, seed_mix(rc.seed, "forest"));
      const VariableImportance lrt =
          lrt_importance(trial.dataset, adj, Parameterization::Centered);
      hits[r][0] = truth.count(forest.top1()) ? 1 : 0;
      hits[r][1] = truth.count(lrt.top1()) ? 1 : 0;
    });
  }
  double forest_prob = 0, lrt_prob = 0;
  for (const auto& h : hits) {
    forest_prob += h[0];
    lrt_prob += h[1];
  }
  forest_prob /= het_reps;
  lrt_prob /= het_reps;
  o.check(forest_prob > lrt_prob,
          "forest " + fmt(forest_prob) + " vs lrt " + fmt(lrt_prob));
  o.note("gof=" + fmt(gof, 4) + " (crit " + fmt(crit, 4) + "); P(top1 in truth): forest=" +
         fmt(forest_prob, 3) + " lrt=" + fmt(lrt_prob, 3));
  return o;
}

// ---------------------------------------------------------------------------
// C13: censoring generator moments.

CheckResult c13() {
  CheckResult o;
  Rng rng(131313);
  const auto c = gen_censoring(100000, rng);
  double below = 0, mean = 0;
  for (double v : c) {
    if (v < 1000.0) ++below;
    mean += v;
  }
  below /= 100000;
  mean /= 100000;
  o.check(std::abs(below - 0.05) <= 0.005, "P(C<1000) " + fmt(below));
  o.check(std::abs(mean - 1355.0) <= 10.0, "mean " + fmt(mean));
  o.note("P(C<1000)=" + fmt(below, 3) + " mean=" + fmt(mean, 5));
  return o;
}

// ---------------------------------------------------------------------------
// C14: parametric bootstrap agrees with the exact F test on normal data.

CheckResult c14() {
  CheckResult o;
  double worst = 0;
  for (int r = 0; r < 10; ++r) {
    Dataset d = center_treatment(
        testdata::random_dataset(Family::Normal, 100, 3, 141400 + r, 0.2, 0.6, 0.4),
        CenterEmpirical{});
    const AdjustedDesign adj = all_cov(d);
    const double p_exact = lrt_interaction(d, adj, Parameterization::Centered).p_value;
    const double p_boot =
        bootstrap_lrt(d, adj, Parameterization::Centered, 2000, 77 + r).p_value;
    const double dev = std::abs(p_exact - p_boot);
    worst = std::max(worst, dev);
    o.check(dev <= 0.02, "dataset " + std::to_string(r) + ": |" + fmt(p_boot) + " - " +
                             fmt(p_exact) + "| = " + fmt(dev));
  }
  o.note("worst |p_boot - p_exact| = " + fmt(worst, 3));
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<CheckResult()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "table-arithmetic", c01},
      {2, "pseudo-true-estimand", c02},
      {3, "normal-score-identity", c03},
      {4, "gradient-oracle", c04},
      {5, "stationarity-reparameterization", c05},
      {6, "exhaustive-permutation", c06},
      {7, "null-calibration", c07},
      {8, "lrt-anticonservative-vs-bootstrap", c08},
      {9, "calibration-closure", c09},
      {10, "power-monotonicity", c10},
      {11, "illustration-correlations", c11},
      {12, "importance-null-uniformity", c12},
      {13, "censoring-moments", c13},
      {14, "bootstrap-exact-cross-oracle", c14},
  };

  std::set<int> selected;
  for (int a = 1; a < argc; ++a) selected.insert(std::atoi(argv[a]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    CheckResult o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] C%02d %s (%s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures;
}
