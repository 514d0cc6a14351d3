#pragma once

// JSON export of fitted models and penalized fits: named coefficients,
// likelihood, convergence record.

#include <nlohmann/json.hpp>

#include "hetscore/fitters.hpp"
#include "hetscore/penalized.hpp"

namespace hetscore {

inline nlohmann::ordered_json model_to_json(const FittedModel& m) {
  nlohmann::ordered_json j;
  j["family"] = family_name(m.family);
  nlohmann::ordered_json coef;
  for (std::size_t i = 0; i < m.names.size(); ++i)
    coef[m.names[i]] = m.coef(static_cast<Eigen::Index>(i));
  j["coefficients"] = coef;
  j["loglik"] = m.loglik;
  j["iterations"] = m.iterations;
  j["converged"] = m.converged;
  j["parameterization"] =
      m.parameterization == Parameterization::Centered ? "centered" : "noncentered";
  if (m.treatment_index >= 0) {
    j["treatment_effect"] = m.coef(m.treatment_index);
    if (m.fisher.size() > 0) j["treatment_se"] = m.treatment_se();
  }
  if (std::isfinite(m.theta)) j["theta"] = m.theta;
  if (std::isfinite(m.sigma2)) j["sigma2"] = m.sigma2;
  return j;
}

inline nlohmann::ordered_json penalized_to_json(const PenalizedFit& f) {
  nlohmann::ordered_json j;
  j["penalty"] = f.penalty == Penalty::Ridge ? "ridge" : "lasso";
  j["lambda_opt"] = f.lambda_opt;
  j["folds"] = f.folds;
  j["lambda_grid"] = f.lambda_grid;
  j["cv_loss"] = f.cv_loss;
  nlohmann::ordered_json coef;
  coef["(intercept)"] = f.intercept_at_opt;
  for (std::size_t i = 0; i < f.names.size(); ++i)
    coef[f.names[i]] = f.coef_at_opt(static_cast<Eigen::Index>(i));
  j["coefficients"] = coef;
  return j;
}

}  // namespace hetscore
