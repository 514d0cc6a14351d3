#pragma once

// Maximum-(partial-)likelihood fitting for the four outcome families:
// least squares, logistic IRLS, negative binomial with profiled dispersion,
// and Cox proportional hazards with Breslow tie handling.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "hetscore/dataset.hpp"
#include "hetscore/errors.hpp"

namespace hetscore {

constexpr double kGradTol = 1e-8;
constexpr int kMaxIter = 100;
constexpr double kSeparationCap = 30.0;

struct FittedModel {
  Family family = Family::Normal;
  Eigen::MatrixXd X;                  // design as fitted
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::VectorXd eta;                // linear predictor
  double loglik = 0.0;                // log-likelihood (partial for Cox)
  int iterations = 0;
  bool converged = false;
  Parameterization parameterization = Parameterization::Centered;
  int treatment_index = -1;           // column of the treatment term, -1 if absent
  double theta = std::numeric_limits<double>::quiet_NaN();   // NegBin dispersion
  double sigma2 = std::numeric_limits<double>::quiet_NaN();  // Normal MLE variance
  Eigen::MatrixXd fisher;             // observed information at the optimum

  double treatment_effect() const {
    if (treatment_index < 0) throw FitError("model has no treatment term");
    return coef(treatment_index);
  }

  double treatment_se() const {
    Eigen::MatrixXd cov = fisher.ldlt().solve(
        Eigen::MatrixXd::Identity(fisher.rows(), fisher.cols()));
    return std::sqrt(cov(treatment_index, treatment_index));
  }
};

namespace detail {

inline void check_rank(const Eigen::MatrixXd& X) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols())
    throw FitError("rank-deficient design (" + std::to_string(qr.rank()) + " < " +
                   std::to_string(X.cols()) + " columns)");
}

inline double clamp_prob(double p) {
  return std::min(1.0 - 1e-12, std::max(1e-12, p));
}

}  // namespace detail

// --------------------------------------------------------------------------
// Per-family log-likelihoods and score functions (shared by the engines,
// the score-residual module and the test oracles).

inline double loglik_normal_profile(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  const double n = static_cast<double>(y.size());
  const double sse = (y - eta).squaredNorm();
  const double s2 = std::max(sse / n, 1e-300);
  return -0.5 * n * (std::log(2.0 * M_PI * s2) + 1.0);
}

inline double loglik_binomial(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    // y*eta - log(1+exp(eta)), computed stably
    const double e = eta(i);
    ll += y(i) * e - (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e)));
  }
  return ll;
}

inline double loglik_negbin(const Eigen::VectorXd& y, const Eigen::VectorXd& eta, double theta) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double mu = std::exp(eta(i));
    ll += std::lgamma(y(i) + theta) - std::lgamma(theta) - std::lgamma(y(i) + 1.0) +
          theta * std::log(theta / (theta + mu)) + y(i) * (eta(i) - std::log(theta + mu));
  }
  return ll;
}

// Precomputed time ordering for Cox computations; shared across refits on the
// same response.
struct CoxOrder {
  std::vector<int> order;          // indices sorted by time ascending
  std::vector<int> group_of;       // unique-time group per sorted position
  std::vector<int> group_start;    // sorted position where each group begins
  std::vector<int> group_deaths;   // deaths per unique time
  int n_events = 0;

  static CoxOrder build(const std::vector<double>& time, const std::vector<int>& event) {
    CoxOrder o;
    const int n = static_cast<int>(time.size());
    o.order.resize(n);
    std::iota(o.order.begin(), o.order.end(), 0);
    std::sort(o.order.begin(), o.order.end(), [&](int a, int b) {
      if (time[a] != time[b]) return time[a] < time[b];
      return a < b;
    });
    o.group_of.resize(n);
    int g = -1;
    double last = -std::numeric_limits<double>::infinity();
    for (int pos = 0; pos < n; ++pos) {
      const int i = o.order[pos];
      if (time[i] != last) {
        ++g;
        o.group_start.push_back(pos);
        o.group_deaths.push_back(0);
        last = time[i];
      }
      o.group_of[pos] = g;
      if (event[i]) {
        ++o.group_deaths[g];
        ++o.n_events;
      }
    }
    return o;
  }
};

// Breslow partial log-likelihood, evaluated at a given linear predictor.
inline double cox_partial_loglik(const CoxOrder& o, const std::vector<int>& event,
                                 const Eigen::VectorXd& eta) {
  const int n = static_cast<int>(o.order.size());
  const int ng = static_cast<int>(o.group_start.size());
  std::vector<double> s0(ng, 0.0);
  double acc = 0.0;
  for (int g = ng - 1; g >= 0; --g) {
    const int end = (g + 1 < ng) ? o.group_start[g + 1] : n;
    for (int pos = o.group_start[g]; pos < end; ++pos) acc += std::exp(eta(o.order[pos]));
    s0[g] = acc;
  }
  double ll = 0.0;
  for (int pos = 0; pos < n; ++pos) {
    const int i = o.order[pos];
    if (event[i]) ll += eta(i) - std::log(s0[o.group_of[pos]]);
  }
  return ll;
}

// --------------------------------------------------------------------------
// Engines

inline FittedModel fit_normal(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                              std::vector<std::string> names) {
  detail::check_rank(X);
  FittedModel m;
  m.family = Family::Normal;
  m.X = X;
  m.names = std::move(names);
  m.coef = X.colPivHouseholderQr().solve(y);
  m.eta = X * m.coef;
  const double n = static_cast<double>(y.size());
  m.sigma2 = (y - m.eta).squaredNorm() / n;
  m.loglik = loglik_normal_profile(y, m.eta);
  m.iterations = 1;
  m.converged = true;
  m.fisher = X.transpose() * X / std::max(m.sigma2, 1e-300);
  return m;
}

namespace detail {

// per-column standard deviations (0 for constant columns such as the
// intercept); used to express coefficient caps on the per-SD scale
inline Eigen::VectorXd column_sds(const Eigen::MatrixXd& X) {
  Eigen::VectorXd sd(X.cols());
  const double n = static_cast<double>(X.rows());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double m = X.col(j).mean();
    sd(j) = std::sqrt((X.col(j).array() - m).square().sum() / n);
  }
  return sd;
}

inline double max_scaled_coef(const Eigen::VectorXd& beta, const Eigen::VectorXd& sd) {
  double mx = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (sd(j) > 0) mx = std::max(mx, std::abs(beta(j)) * sd(j));
  return mx;
}

}  // namespace detail

inline FittedModel fit_binomial(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                std::vector<std::string> names) {
  detail::check_rank(X);
  const Eigen::Index n = X.rows(), p = X.cols();
  const Eigen::VectorXd col_sd = detail::column_sds(X);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double ll = loglik_binomial(y, eta);
  FittedModel m;
  m.family = Family::Binomial;
  m.X = X;
  m.names = std::move(names);
  for (int iter = 1; iter <= kMaxIter; ++iter) {
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double pi = std::min(1.0 - 3e-15, std::max(3e-15, 1.0 / (1.0 + std::exp(-eta(i)))));
      mu(i) = pi;
      w(i) = std::max(pi * (1.0 - pi), 1e-250);
    }
    Eigen::VectorXd grad = X.transpose() * (y - mu);
    m.iterations = iter;
    Eigen::MatrixXd xtwx = X.transpose() * w.asDiagonal() * X;
    Eigen::VectorXd delta = xtwx.ldlt().solve(grad);
    if (!delta.allFinite()) throw FitError("binomial IRLS produced non-finite step");
    // a genuine optimum needs both a small score and a small Newton step;
    // under separation the score underflows while the step keeps growing
    if (grad.cwiseAbs().maxCoeff() <= kGradTol &&
        delta.cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + beta.cwiseAbs().maxCoeff())) {
      m.converged = true;
      break;
    }
    double step = 1.0;
    for (int h = 0; h < 40; ++h) {
      Eigen::VectorXd cand = beta + step * delta;
      Eigen::VectorXd ceta = X * cand;
      const double cll = loglik_binomial(y, ceta);
      if (cll >= ll - 1e-10 * (1.0 + std::abs(ll))) {
        beta = cand;
        eta = ceta;
        ll = cll;
        break;
      }
      step *= 0.5;
    }
    if (detail::max_scaled_coef(beta, col_sd) > kSeparationCap)
      throw FitError("separation detected (|coefficient| > 30 in logistic fit)");
  }
  if (!m.converged) throw FitError("binomial IRLS did not converge in 100 iterations");
  m.coef = beta;
  m.eta = eta;
  m.loglik = ll;
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = detail::clamp_prob(1.0 / (1.0 + std::exp(-eta(i))));
    w(i) = pi * (1.0 - pi);
  }
  m.fisher = X.transpose() * w.asDiagonal() * X;
  return m;
}

namespace detail {

inline double negbin_theta_score(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                                 double theta) {
  double sc = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    sc += boost::math::digamma(y(i) + theta) - boost::math::digamma(theta) +
          std::log(theta) + 1.0 - std::log(theta + mu(i)) - (y(i) + theta) / (theta + mu(i));
  return sc;
}

inline double negbin_theta_hessian(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                                   double theta) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    h += boost::math::trigamma(y(i) + theta) - boost::math::trigamma(theta) + 1.0 / theta -
         2.0 / (theta + mu(i)) + (y(i) + theta) / ((theta + mu(i)) * (theta + mu(i)));
  return h;
}

}  // namespace detail

inline FittedModel fit_negbin(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                              std::vector<std::string> names,
                              double theta_fixed = std::numeric_limits<double>::quiet_NaN()) {
  detail::check_rank(X);
  const Eigen::Index n = X.rows(), p = X.cols();
  const bool estimate_theta = !std::isfinite(theta_fixed);

  // Method-of-moments start for the dispersion.
  const double ybar = std::max(y.mean(), 1e-8);
  double yvar = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) yvar += (y(i) - ybar) * (y(i) - ybar);
  yvar /= static_cast<double>(n - 1);
  double theta = estimate_theta
                     ? std::clamp(yvar > ybar ? ybar * ybar / (yvar - ybar) : 1e4, 0.1, 1e4)
                     : theta_fixed;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double ll = loglik_negbin(y, eta, theta);

  FittedModel m;
  m.family = Family::NegBin;
  m.X = X;
  m.names = std::move(names);
  const double theta_lo = 1e-3, theta_hi = 1e6;
  for (int iter = 1; iter <= 2 * kMaxIter; ++iter) {
    Eigen::VectorXd mu = eta.array().exp();
    Eigen::VectorXd resid(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      resid(i) = (y(i) - mu(i)) / (1.0 + mu(i) / theta);
      w(i) = mu(i) / (1.0 + mu(i) / theta);
    }
    Eigen::VectorXd grad = X.transpose() * resid;
    double theta_sc = estimate_theta ? detail::negbin_theta_score(y, mu, theta) : 0.0;
    const bool theta_pinned =
        (theta <= theta_lo * 1.0001 && theta_sc < 0) || (theta >= theta_hi * 0.9999 && theta_sc > 0);
    const double theta_tol = kGradTol * std::max(1.0, std::abs(ll));
    m.iterations = iter;
    if (grad.cwiseAbs().maxCoeff() <= kGradTol &&
        (std::abs(theta_sc * theta) <= theta_tol || theta_pinned)) {
      m.converged = true;
      break;
    }
    // Newton step for the regression coefficients.
    Eigen::MatrixXd xtwx = X.transpose() * w.asDiagonal() * X;
    Eigen::VectorXd delta = xtwx.ldlt().solve(grad);
    if (!delta.allFinite()) throw FitError("negative binomial IRLS produced non-finite step");
    double step = 1.0;
    for (int h = 0; h < 40; ++h) {
      Eigen::VectorXd cand = beta + step * delta;
      Eigen::VectorXd ceta = X * cand;
      if (ceta.cwiseAbs().maxCoeff() < 40.0) {
        const double cll = loglik_negbin(y, ceta, theta);
        if (cll >= ll - 1e-10 * (1.0 + std::abs(ll))) {
          beta = cand;
          eta = ceta;
          ll = cll;
          break;
        }
      }
      step *= 0.5;
    }
    // Profile Newton for theta on the log scale.
    if (estimate_theta) {
      Eigen::VectorXd mu2 = eta.array().exp();
      for (int t = 0; t < 5; ++t) {
        const double sc = detail::negbin_theta_score(y, mu2, theta);
        const double hess = detail::negbin_theta_hessian(y, mu2, theta);
        const double u = std::log(theta);
        double du = theta * theta * hess + theta * sc;  // d2l/du2
        double nstep = (du < 0) ? -(theta * sc) / du : (sc > 0 ? 0.5 : -0.5);
        nstep = std::clamp(nstep, -2.0, 2.0);
        double cand = std::clamp(std::exp(u + nstep), theta_lo, theta_hi);
        const double cll = loglik_negbin(y, eta, cand);
        if (cll >= ll - 1e-10 * (1.0 + std::abs(ll))) {
          theta = cand;
          ll = cll;
          if (std::abs(nstep) < 1e-12) break;
        } else {
          break;
        }
      }
    }
  }
  if (!m.converged) throw FitError("negative binomial fit did not converge");
  m.coef = beta;
  m.eta = eta;
  m.theta = theta;
  m.loglik = ll;
  Eigen::VectorXd mu = eta.array().exp();
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w(i) = mu(i) / (1.0 + mu(i) / theta);
  m.fisher = X.transpose() * w.asDiagonal() * X;
  return m;
}

inline FittedModel fit_cox(const std::vector<double>& time, const std::vector<int>& event,
                           const Eigen::MatrixXd& X, std::vector<std::string> names) {
  detail::check_rank(X);
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  const CoxOrder o = CoxOrder::build(time, event);
  if (o.n_events == 0) throw FitError("cox fit requires at least one event");

  const Eigen::VectorXd cox_col_sd = detail::column_sds(X);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double ll = cox_partial_loglik(o, event, eta);

  FittedModel m;
  m.family = Family::CoxPH;
  m.X = X;
  m.names = std::move(names);

  Eigen::VectorXd grad(p);
  Eigen::MatrixXd hess(p, p);
  const int ng = static_cast<int>(o.group_start.size());
  for (int iter = 1; iter <= kMaxIter; ++iter) {
    grad.setZero();
    hess.setZero();
    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
    // accumulate risk sums from the largest time downwards
    for (int g = ng - 1; g >= 0; --g) {
      const int end = (g + 1 < ng) ? o.group_start[g + 1] : n;
      for (int pos = o.group_start[g]; pos < end; ++pos) {
        const int i = o.order[pos];
        const double w = std::exp(eta(i));
        s0 += w;
        s1 += w * X.row(i).transpose();
        s2.noalias() += w * X.row(i).transpose() * X.row(i);
      }
      const int d = o.group_deaths[g];
      if (d > 0) {
        const Eigen::VectorXd xbar = s1 / s0;
        for (int pos = o.group_start[g]; pos < end; ++pos) {
          const int i = o.order[pos];
          if (event[i]) grad += X.row(i).transpose();
        }
        grad -= d * xbar;
        hess.noalias() += d * (s2 / s0 - xbar * xbar.transpose());
      }
    }
    m.iterations = iter;
    Eigen::VectorXd delta = hess.ldlt().solve(grad);
    if (!delta.allFinite()) throw FitError("cox Newton produced non-finite step");
    if (grad.cwiseAbs().maxCoeff() <= kGradTol &&
        delta.cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + beta.cwiseAbs().maxCoeff())) {
      m.converged = true;
      m.fisher = hess;
      break;
    }
    double step = 1.0;
    for (int h = 0; h < 40; ++h) {
      Eigen::VectorXd cand = beta + step * delta;
      Eigen::VectorXd ceta = X * cand;
      const double cll = cox_partial_loglik(o, event, ceta);
      if (cll >= ll - 1e-10 * (1.0 + std::abs(ll))) {
        beta = cand;
        eta = ceta;
        ll = cll;
        break;
      }
      step *= 0.5;
    }
    if (detail::max_scaled_coef(beta, cox_col_sd) > 200.0)
      throw FitError("cox fit diverging (monotone likelihood?)");
  }
  if (!m.converged) throw FitError("cox Newton did not converge in 100 iterations");
  m.coef = beta;
  m.eta = eta;
  m.loglik = ll;
  return m;
}

// Dispatch on family; `d` supplies the response.
inline FittedModel fit_design(const Dataset& d, const Eigen::MatrixXd& X,
                              std::vector<std::string> names) {
  const Eigen::VectorXd y =
      Eigen::Map<const Eigen::VectorXd>(d.outcome.data(), static_cast<Eigen::Index>(d.n));
  switch (d.family) {
    case Family::Normal: return fit_normal(y, X, std::move(names));
    case Family::Binomial: return fit_binomial(y, X, std::move(names));
    case Family::NegBin: return fit_negbin(y, X, std::move(names));
    case Family::CoxPH: return fit_cox(d.outcome, *d.event, X, std::move(names));
  }
  throw FitError("unknown family");
}

// --------------------------------------------------------------------------
// Breslow baseline cumulative hazard, and inversion sampling from it.

struct BaselineHazard {
  std::vector<double> times;    // unique event times, ascending
  std::vector<double> cumhaz;   // cumulative hazard at each time
};

inline BaselineHazard breslow_baseline(const FittedModel& m, const std::vector<double>& time,
                                       const std::vector<int>& event) {
  const CoxOrder o = CoxOrder::build(time, event);
  const int n = static_cast<int>(time.size());
  const int ng = static_cast<int>(o.group_start.size());
  std::vector<double> s0(ng, 0.0);
  double acc = 0.0;
  for (int g = ng - 1; g >= 0; --g) {
    const int end = (g + 1 < ng) ? o.group_start[g + 1] : n;
    for (int pos = o.group_start[g]; pos < end; ++pos) acc += std::exp(m.eta(o.order[pos]));
    s0[g] = acc;
  }
  BaselineHazard b;
  double ch = 0.0;
  for (int g = 0; g < ng; ++g) {
    if (o.group_deaths[g] == 0) continue;
    ch += o.group_deaths[g] / s0[g];
    b.times.push_back(time[o.order[o.group_start[g]]]);
    b.cumhaz.push_back(ch);
  }
  return b;
}

// Smallest event time with cumulative hazard * exp(eta) >= e; +inf if none.
inline double invert_baseline(const BaselineHazard& b, double eta, double e) {
  const double target = e / std::exp(eta);
  auto it = std::lower_bound(b.cumhaz.begin(), b.cumhaz.end(), target);
  if (it == b.cumhaz.end()) return std::numeric_limits<double>::infinity();
  return b.times[static_cast<std::size_t>(it - b.cumhaz.begin())];
}

}  // namespace hetscore
