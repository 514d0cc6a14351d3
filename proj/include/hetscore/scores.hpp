#pragma once

// Per-subject score residuals with respect to the treatment-effect
// parameter, evaluated at the fitted model. For the GLM families these are
// working residuals times the treatment design value; for Cox they are the
// counting-process score residuals of the treatment column (identical under
// centered and non-centered parameterization).

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetscore/dataset.hpp"
#include "hetscore/errors.hpp"
#include "hetscore/fitters.hpp"

namespace hetscore {

struct ScoreVector {
  Eigen::VectorXd s;
  Parameterization parameterization = Parameterization::Centered;
  Family family = Family::Normal;
};

namespace detail {

// Working score scale dl_i/deta_i for the GLM families.
inline Eigen::VectorXd glm_eta_score(const FittedModel& m, const Dataset& d) {
  const Eigen::Index n = static_cast<Eigen::Index>(d.n);
  Eigen::VectorXd g(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = d.outcome[static_cast<std::size_t>(i)];
    switch (m.family) {
      case Family::Normal:
        g(i) = y - m.eta(i);
        break;
      case Family::Binomial: {
        const double p = 1.0 / (1.0 + std::exp(-m.eta(i)));
        g(i) = y - p;
        break;
      }
      case Family::NegBin: {
        const double mu = std::exp(m.eta(i));
        g(i) = (y - mu) / (1.0 + mu / m.theta);
        break;
      }
      case Family::CoxPH:
        throw FitError("glm_eta_score called for cox family");
    }
  }
  return g;
}

// Cox score-residual matrix: U_ij = d_i (x_ij - xbar_j(t_i))
//   - exp(eta_i) * sum_{event times u <= y_i} d_u (x_ij - xbar_j(u)) / S0(u).
inline Eigen::MatrixXd cox_score_residual_matrix(const FittedModel& m, const Dataset& d) {
  const int n = static_cast<int>(d.n);
  const Eigen::Index p = m.X.cols();
  const CoxOrder o = CoxOrder::build(d.outcome, *d.event);
  const int ng = static_cast<int>(o.group_start.size());

  std::vector<double> s0(ng, 0.0);
  Eigen::MatrixXd xbar(ng, p);  // risk-set mean at each unique time
  {
    double acc0 = 0.0;
    Eigen::VectorXd acc1 = Eigen::VectorXd::Zero(p);
    for (int g = ng - 1; g >= 0; --g) {
      const int end = (g + 1 < ng) ? o.group_start[g + 1] : n;
      for (int pos = o.group_start[g]; pos < end; ++pos) {
        const int i = o.order[pos];
        const double w = std::exp(m.eta(i));
        acc0 += w;
        acc1 += w * m.X.row(i).transpose();
      }
      s0[g] = acc0;
      xbar.row(g) = (acc1 / acc0).transpose();
    }
  }
  // prefix sums over event times: A(g) = sum d/S0, B_j(g) = sum d xbar_j / S0
  std::vector<double> A(ng, 0.0);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(ng, p);
  double a = 0.0;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  for (int g = 0; g < ng; ++g) {
    if (o.group_deaths[g] > 0) {
      a += o.group_deaths[g] / s0[g];
      b += (o.group_deaths[g] / s0[g]) * xbar.row(g).transpose();
    }
    A[g] = a;
    B.row(g) = b.transpose();
  }
  Eigen::MatrixXd U(n, p);
  for (int pos = 0; pos < n; ++pos) {
    const int i = o.order[pos];
    const int g = o.group_of[pos];
    const double ex = std::exp(m.eta(i));
    Eigen::RowVectorXd row = -ex * (m.X.row(i) * A[g] - B.row(g));
    if ((*d.event)[i]) row += m.X.row(i) - xbar.row(g);
    U.row(i) = row;
  }
  return U;
}

}  // namespace detail

// Full n x p matrix of per-subject score contributions, one column per model
// parameter (dispersion treated as fixed).
inline Eigen::MatrixXd full_score_matrix(const FittedModel& m, const Dataset& d) {
  if (!m.converged) throw FitError("score residuals require a converged model");
  if (static_cast<std::size_t>(m.X.rows()) != d.n)
    throw FitError("model/dataset row mismatch");
  if (m.family == Family::CoxPH) return detail::cox_score_residual_matrix(m, d);
  const Eigen::VectorXd g = detail::glm_eta_score(m, d);
  return g.asDiagonal() * m.X;
}

inline ScoreVector score_residuals(const FittedModel& m, const Dataset& d) {
  if (m.treatment_index < 0) throw FitError("model has no treatment term");
  if (!m.converged) throw FitError("score residuals require a converged model");
  if (static_cast<std::size_t>(m.X.rows()) != d.n)
    throw FitError("model/dataset row mismatch");
  ScoreVector sv;
  sv.parameterization = m.parameterization;
  sv.family = m.family;
  if (m.family == Family::CoxPH) {
    sv.s = detail::cox_score_residual_matrix(m, d).col(m.treatment_index);
  } else {
    const Eigen::VectorXd g = detail::glm_eta_score(m, d);
    sv.s = g.cwiseProduct(m.X.col(m.treatment_index));
  }
  return sv;
}

// Treatment score column minus its least-squares projection onto the other
// parameter score columns.
inline Eigen::VectorXd orthogonalize_treatment_score(
    const Eigen::MatrixXd& scores, int treatment_col,
    std::vector<std::string>* warnings = nullptr) {
  const Eigen::Index p = scores.cols();
  if (treatment_col < 0 || treatment_col >= p)
    throw ValidationError("treatment column index out of range");
  Eigen::VectorXd st = scores.col(treatment_col);
  if (p == 1) return st;
  Eigen::MatrixXd others(scores.rows(), p - 1);
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < p; ++j)
    if (j != treatment_col) others.col(c++) = scores.col(j);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(others);
  cod.setThreshold(1e-10);
  if (warnings && cod.rank() < others.cols())
    warnings->push_back("non-treatment score block is rank deficient; projecting via pseudo-inverse");
  const Eigen::VectorXd coef = cod.solve(st);
  return st - others * coef;
}

// Score export for external plotting: subject id, z, centered z, s.
inline void save_scores_csv(const Dataset& d, const ScoreVector& sv, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "subject,z,z_centered,s\n";
  for (std::size_t i = 0; i < d.n; ++i) {
    out << (i + 1) << ',' << csv::format_double(d.treatment_raw[i]) << ','
        << csv::format_double(d.treatment_centered ? (*d.treatment_centered)[i]
                                                   : std::numeric_limits<double>::quiet_NaN())
        << ',' << csv::format_double(sv.s(static_cast<Eigen::Index>(i))) << '\n';
  }
}

}  // namespace hetscore
