#pragma once

// Penalized regression (ridge / LASSO) by coordinate descent on the IRLS
// quadratic approximation, with a descending 100-point lambda path and
// K-fold cross-validated deviance for tuning. Covers all four families;
// Cox uses the diagonal-Hessian working approximation of the partial
// likelihood and Verweij-van-Houwelingen cross-validated deviance.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetscore/dataset.hpp"
#include "hetscore/errors.hpp"
#include "hetscore/fitters.hpp"
#include "hetscore/rng.hpp"

namespace hetscore {

enum class Penalty { Ridge, Lasso };

struct PenalizedFit {
  Penalty penalty = Penalty::Lasso;
  std::vector<double> lambda_grid;     // descending
  std::vector<double> cv_loss;         // mean CV deviance per lambda
  double lambda_opt = 0.0;
  int lambda_opt_index = -1;
  Eigen::VectorXd coef_at_opt;         // original scale, covariate columns
  double intercept_at_opt = 0.0;       // 0 for Cox
  std::vector<std::string> names;
  int folds = 10;
};

namespace detail {

struct PenProblem {
  Family family = Family::Normal;
  Eigen::MatrixXd Xs;                 // standardized columns (zero-variance kept at 0)
  Eigen::VectorXd col_mean, col_sd;   // for unstandardizing
  Eigen::VectorXd y;
  std::vector<double> time;           // Cox
  std::vector<int> event;             // Cox
  double theta = 1.0;                 // NegBin dispersion, held fixed
  double alpha = 1.0;                 // 1 = lasso, 0 = ridge
};

inline PenProblem make_problem(const Dataset& d, const Eigen::MatrixXd& X, Penalty pen,
                               double theta_fixed) {
  PenProblem pr;
  pr.family = d.family;
  pr.alpha = pen == Penalty::Lasso ? 1.0 : 0.0;
  const Eigen::Index n = X.rows(), p = X.cols();
  pr.col_mean.resize(p);
  pr.col_sd.resize(p);
  pr.Xs.resize(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double m = X.col(j).mean();
    double v = (X.col(j).array() - m).square().sum() / static_cast<double>(n);
    const double sd = std::sqrt(v);
    pr.col_mean(j) = m;
    pr.col_sd(j) = sd;
    if (sd > 1e-12)
      pr.Xs.col(j) = (X.col(j).array() - m) / sd;
    else
      pr.Xs.col(j).setZero();
  }
  pr.y = Eigen::Map<const Eigen::VectorXd>(d.outcome.data(), static_cast<Eigen::Index>(d.n));
  if (d.family == Family::CoxPH) {
    pr.time = d.outcome;
    pr.event = *d.event;
  }
  if (d.family == Family::NegBin) pr.theta = theta_fixed;
  if (d.family == Family::Normal) {
    double v = (pr.y.array() - pr.y.mean()).square().sum();
    if (v <= 0.0) throw FitError("penalized fit: outcome has zero variance");
  }
  return pr;
}

// Working weights and response at the current eta for one IRLS pass.
inline void working_quantities(const PenProblem& pr, const std::vector<int>& rows,
                               const Eigen::VectorXd& eta, Eigen::VectorXd& w,
                               Eigen::VectorXd& u) {
  const int n = static_cast<int>(rows.size());
  w.resize(n);
  u.resize(n);
  switch (pr.family) {
    case Family::Normal:
      for (int i = 0; i < n; ++i) {
        w(i) = 1.0;
        u(i) = pr.y(rows[i]);
      }
      break;
    case Family::Binomial:
      for (int i = 0; i < n; ++i) {
        const double p = detail::clamp_prob(1.0 / (1.0 + std::exp(-eta(i))));
        const double wi = std::max(p * (1.0 - p), 1e-6);
        w(i) = wi;
        u(i) = eta(i) + (pr.y(rows[i]) - p) / wi;
      }
      break;
    case Family::NegBin:
      for (int i = 0; i < n; ++i) {
        const double mu = std::exp(std::min(eta(i), 30.0));
        const double wi = std::max(mu / (1.0 + mu / pr.theta), 1e-6);
        w(i) = wi;
        u(i) = eta(i) + (pr.y(rows[i]) - mu) / std::max(mu, 1e-8);
      }
      break;
    case Family::CoxPH: {
      // gradient and diagonal Hessian of the Breslow partial log-likelihood
      std::vector<double> tt(n);
      std::vector<int> ev(n);
      for (int i = 0; i < n; ++i) {
        tt[i] = pr.time[rows[i]];
        ev[i] = pr.event[rows[i]];
      }
      const CoxOrder o = CoxOrder::build(tt, ev);
      const int ng = static_cast<int>(o.group_start.size());
      std::vector<double> s0(ng, 0.0);
      double acc = 0.0;
      for (int g = ng - 1; g >= 0; --g) {
        const int end = (g + 1 < ng) ? o.group_start[g + 1] : n;
        for (int pos = o.group_start[g]; pos < end; ++pos) acc += std::exp(eta(o.order[pos]));
        s0[g] = acc;
      }
      // A(t) = sum_{death times <= t} d/S0, A2(t) = sum d/S0^2
      std::vector<double> A(ng, 0.0), A2(ng, 0.0);
      double a = 0.0, a2 = 0.0;
      for (int g = 0; g < ng; ++g) {
        if (o.group_deaths[g] > 0) {
          a += o.group_deaths[g] / s0[g];
          a2 += o.group_deaths[g] / (s0[g] * s0[g]);
        }
        A[g] = a;
        A2[g] = a2;
      }
      for (int pos = 0; pos < n; ++pos) {
        const int i = o.order[pos];
        const int g = o.group_of[pos];
        const double ex = std::exp(eta(i));
        const double grad = ev[i] - ex * A[g];
        const double hess = std::max(ex * A[g] - ex * ex * A2[g], 1e-6);
        w(i) = hess;
        u(i) = eta(i) + grad / hess;
      }
      break;
    }
  }
}

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& X, const std::vector<int>& rows) {
  Eigen::MatrixXd Xr(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) Xr.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  return Xr;
}

// Weighted coordinate descent at one lambda; beta/beta0 are warm starts.
// Xr must be the rows-gathered standardized design for `rows`.
inline void coord_descent(const PenProblem& pr, const std::vector<int>& rows,
                          const Eigen::MatrixXd& Xr, double lambda,
                          Eigen::VectorXd& beta, double& beta0) {
  const int n = static_cast<int>(rows.size());
  const Eigen::Index p = pr.Xs.cols();
  const bool has_intercept = pr.family != Family::CoxPH;

  Eigen::VectorXd eta = Xr * beta;
  if (has_intercept) eta.array() += beta0;

  const int max_outer = pr.family == Family::Normal ? 1 : 25;
  for (int outer = 0; outer < max_outer; ++outer) {
    Eigen::VectorXd w, u;
    working_quantities(pr, rows, eta, w, u);
    const double wsum = w.sum();
    Eigen::VectorXd r = u - Xr * beta;  // working residual without intercept
    if (has_intercept) {
      beta0 = w.dot(r) / wsum;
    }
    r.array() -= has_intercept ? beta0 : 0.0;

    Eigen::VectorXd vj(p);
    for (Eigen::Index j = 0; j < p; ++j)
      vj(j) = (Xr.col(j).array().square() * w.array()).sum() / n;

    double max_delta_outer = 0.0;
    for (int sweep = 0; sweep < 400; ++sweep) {
      double max_delta = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        if (pr.col_sd(j) <= 1e-12) continue;
        const double old = beta(j);
        const double rho = (Xr.col(j).array() * w.array() * r.array()).sum() / n + vj(j) * old;
        const double soft = pr.alpha * lambda;
        double bnew;
        if (rho > soft)
          bnew = (rho - soft) / (vj(j) + lambda * (1.0 - pr.alpha));
        else if (rho < -soft)
          bnew = (rho + soft) / (vj(j) + lambda * (1.0 - pr.alpha));
        else
          bnew = 0.0;
        if (bnew != old) {
          r -= (bnew - old) * Xr.col(j);
          beta(j) = bnew;
          max_delta = std::max(max_delta, std::abs(bnew - old));
        }
      }
      if (has_intercept) {
        const double b0new = beta0 + w.dot(r) / wsum;
        r.array() -= (b0new - beta0);
        max_delta = std::max(max_delta, std::abs(b0new - beta0));
        beta0 = b0new;
      }
      max_delta_outer = max_delta;
      if (max_delta < 1e-8) break;
    }
    eta = Xr * beta;
    if (has_intercept) eta.array() += beta0;
    if (pr.family == Family::Normal) break;
    if (max_delta_outer < 1e-8 && outer > 0) break;
  }
}

inline double null_intercept(const PenProblem& pr, const std::vector<int>& rows) {
  double ybar = 0.0;
  for (int i : rows) ybar += pr.y(i);
  ybar /= static_cast<double>(rows.size());
  switch (pr.family) {
    case Family::Normal: return ybar;
    case Family::Binomial: {
      const double p = detail::clamp_prob(ybar);
      return std::log(p / (1.0 - p));
    }
    case Family::NegBin: return std::log(std::max(ybar, 1e-8));
    case Family::CoxPH: return 0.0;
  }
  return 0.0;
}

inline double lambda_max(const PenProblem& pr, const std::vector<int>& rows) {
  const int n = static_cast<int>(rows.size());
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, null_intercept(pr, rows));
  if (pr.family == Family::CoxPH) eta.setZero();
  Eigen::VectorXd w, u;
  working_quantities(pr, rows, eta, w, u);
  // score of each standardized column at the null fit
  double lmax = 0.0;
  for (Eigen::Index j = 0; j < pr.Xs.cols(); ++j) {
    if (pr.col_sd(j) <= 1e-12) continue;
    double sc = 0.0;
    for (int i = 0; i < n; ++i) sc += pr.Xs(rows[i], j) * w(i) * (u(i) - eta(i));
    lmax = std::max(lmax, std::abs(sc) / n);
  }
  return std::max(lmax, 1e-10);
}

// Deviance of held-out rows at a fitted (beta, beta0).
inline double held_out_deviance(const PenProblem& pr, const std::vector<int>& val,
                                const std::vector<int>& train, const Eigen::VectorXd& beta,
                                double beta0) {
  switch (pr.family) {
    case Family::Normal: {
      double dev = 0.0;
      for (int i : val) {
        const double fit = beta0 + pr.Xs.row(i).dot(beta);
        dev += (pr.y(i) - fit) * (pr.y(i) - fit);
      }
      return dev / static_cast<double>(val.size());
    }
    case Family::Binomial: {
      double dev = 0.0;
      for (int i : val) {
        const double eta = beta0 + pr.Xs.row(i).dot(beta);
        const double p = detail::clamp_prob(1.0 / (1.0 + std::exp(-eta)));
        dev += -2.0 * (pr.y(i) * std::log(p) + (1.0 - pr.y(i)) * std::log(1.0 - p));
      }
      return dev / static_cast<double>(val.size());
    }
    case Family::NegBin: {
      double dev = 0.0;
      for (int i : val) {
        const double mu = std::exp(std::min(beta0 + pr.Xs.row(i).dot(beta), 30.0));
        const double yv = pr.y(i);
        double di = 0.0;
        if (yv > 0) di += yv * std::log(yv / mu);
        di -= (yv + pr.theta) * std::log((yv + pr.theta) / (mu + pr.theta));
        dev += 2.0 * di;
      }
      return dev / static_cast<double>(val.size());
    }
    case Family::CoxPH: {
      // Verweij & Van Houwelingen: dev = -2 (ll(all) - ll(train)) at beta.
      const int ntot = static_cast<int>(pr.Xs.rows());
      std::vector<int> all(ntot);
      std::iota(all.begin(), all.end(), 0);
      auto pll = [&](const std::vector<int>& rows) {
        std::vector<double> tt(rows.size());
        std::vector<int> ev(rows.size());
        Eigen::VectorXd eta(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
          tt[i] = pr.time[rows[i]];
          ev[i] = pr.event[rows[i]];
          eta(static_cast<Eigen::Index>(i)) = pr.Xs.row(rows[i]).dot(beta);
        }
        const CoxOrder o = CoxOrder::build(tt, ev);
        return cox_partial_loglik(o, ev, eta);
      };
      return -2.0 * (pll(all) - pll(train));
    }
  }
  return 0.0;
}

}  // namespace detail

// Fit a penalized model over the descending lambda path with K-fold CV.
// The design is the dummy-expanded covariate block; the treatment column is
// excluded unless `exclude_treatment` is false.
inline PenalizedFit fit_penalized(const Dataset& d, Penalty penalty, int folds = 10,
                                  bool exclude_treatment = true, std::uint64_t seed = 1,
                                  double theta_fixed = std::numeric_limits<double>::quiet_NaN()) {
  if (d.n < static_cast<std::size_t>(folds))
    throw ValidationError("penalized fit: n < number of folds");
  const ExpandedCovariates ec = expand_covariates(d);
  Eigen::MatrixXd X = ec.X;
  std::vector<std::string> names = ec.names;
  if (!exclude_treatment) {
    X.conservativeResize(Eigen::NoChange, X.cols() + 1);
    X.col(X.cols() - 1) =
        Eigen::Map<const Eigen::VectorXd>(d.treatment_raw.data(), static_cast<Eigen::Index>(d.n));
    names.push_back("treatment");
  }

  double theta = theta_fixed;
  if (d.family == Family::NegBin && !std::isfinite(theta)) {
    // moment estimate of the dispersion from the marginal outcome
    const double m = std::max(
        std::accumulate(d.outcome.begin(), d.outcome.end(), 0.0) / static_cast<double>(d.n), 1e-8);
    double v = 0.0;
    for (double yv : d.outcome) v += (yv - m) * (yv - m);
    v /= static_cast<double>(d.n - 1);
    theta = std::clamp(v > m ? m * m / (v - m) : 1e4, 0.1, 1e4);
  }

  detail::PenProblem pr = detail::make_problem(d, X, penalty, theta);
  const int n = static_cast<int>(d.n);
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);

  // 100-point log-spaced path, lambda_min/lambda_max = 1e-4. Ridge needs a
  // larger start to reach the near-null end of the path.
  const double lmax_base = detail::lambda_max(pr, all);
  const double lmax = penalty == Penalty::Lasso ? lmax_base : lmax_base * 1000.0;
  const int npath = 100;
  std::vector<double> lambdas(npath);
  for (int l = 0; l < npath; ++l)
    lambdas[l] = lmax * std::pow(1e-4, static_cast<double>(l) / (npath - 1));

  // fold assignment: deterministic shuffle
  std::vector<int> fold_of(n);
  {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed_mix(seed, "cv-folds"));
    rng.shuffle(idx);
    for (int i = 0; i < n; ++i) fold_of[idx[i]] = i % folds;
  }
  for (int f = 0; f < folds; ++f)
    if (std::count(fold_of.begin(), fold_of.end(), f) == 0)
      throw ValidationError("penalized fit: empty cross-validation fold");

  PenalizedFit out;
  out.penalty = penalty;
  out.lambda_grid = lambdas;
  out.names = names;
  out.folds = folds;
  out.cv_loss.assign(npath, 0.0);

  for (int f = 0; f < folds; ++f) {
    std::vector<int> train, val;
    for (int i = 0; i < n; ++i)
      (fold_of[i] == f ? val : train).push_back(i);
    const Eigen::MatrixXd Xr = detail::gather_rows(pr.Xs, train);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
    double beta0 = detail::null_intercept(pr, train);
    for (int l = 0; l < npath; ++l) {
      detail::coord_descent(pr, train, Xr, lambdas[l], beta, beta0);
      out.cv_loss[l] += detail::held_out_deviance(pr, val, train, beta, beta0);
    }
  }
  for (double& c : out.cv_loss) c /= folds;

  int best = 0;
  for (int l = 1; l < npath; ++l)
    if (out.cv_loss[l] < out.cv_loss[best] - 1e-12) best = l;
  out.lambda_opt_index = best;
  out.lambda_opt = lambdas[best];

  // full-data path up to the selected lambda
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
  double beta0 = detail::null_intercept(pr, all);
  for (int l = 0; l <= best; ++l) detail::coord_descent(pr, all, pr.Xs, lambdas[l], beta, beta0);

  // back to the original scale
  out.coef_at_opt.resize(X.cols());
  double b0 = beta0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (pr.col_sd(j) > 1e-12) {
      out.coef_at_opt(j) = beta(j) / pr.col_sd(j);
      b0 -= beta(j) * pr.col_mean(j) / pr.col_sd(j);
    } else {
      out.coef_at_opt(j) = 0.0;
    }
  }
  out.intercept_at_opt = pr.family == Family::CoxPH ? 0.0 : b0;
  return out;
}

// Single-lambda fit without cross-validation (original-scale coefficients).
inline PenalizedFit fit_penalized_at(const Dataset& d, Penalty penalty, double lambda,
                                     bool exclude_treatment = true,
                                     double theta_fixed = std::numeric_limits<double>::quiet_NaN()) {
  const ExpandedCovariates ec = expand_covariates(d);
  Eigen::MatrixXd X = ec.X;
  std::vector<std::string> names = ec.names;
  if (!exclude_treatment) {
    X.conservativeResize(Eigen::NoChange, X.cols() + 1);
    X.col(X.cols() - 1) =
        Eigen::Map<const Eigen::VectorXd>(d.treatment_raw.data(), static_cast<Eigen::Index>(d.n));
    names.push_back("treatment");
  }
  double theta = theta_fixed;
  if (d.family == Family::NegBin && !std::isfinite(theta)) theta = 1.0;
  detail::PenProblem pr = detail::make_problem(d, X, penalty, theta);
  const int n = static_cast<int>(d.n);
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
  double beta0 = detail::null_intercept(pr, all);
  // short warm-up path for stability, then the requested lambda
  const double lmax = detail::lambda_max(pr, all);
  for (double l : {lmax, std::max(lambda, 1e-12) * 4.0, std::max(lambda, 1e-12) * 2.0})
    if (l > lambda) detail::coord_descent(pr, all, pr.Xs, l, beta, beta0);
  detail::coord_descent(pr, all, pr.Xs, lambda, beta, beta0);

  PenalizedFit out;
  out.penalty = penalty;
  out.lambda_grid = {lambda};
  out.cv_loss = {std::numeric_limits<double>::quiet_NaN()};
  out.lambda_opt = lambda;
  out.lambda_opt_index = 0;
  out.names = names;
  out.folds = 0;
  out.coef_at_opt.resize(X.cols());
  double b0 = beta0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (pr.col_sd(j) > 1e-12) {
      out.coef_at_opt(j) = beta(j) / pr.col_sd(j);
      b0 -= beta(j) * pr.col_mean(j) / pr.col_sd(j);
    } else {
      out.coef_at_opt(j) = 0.0;
    }
  }
  out.intercept_at_opt = pr.family == Family::CoxPH ? 0.0 : b0;
  return out;
}

}  // namespace hetscore
