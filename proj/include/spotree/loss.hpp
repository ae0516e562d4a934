#pragma once

#include <functional>

#include "spotree/core.hpp"
#include "spotree/oracle.hpp"

namespace spotree {

inline constexpr double kNegativeLossClamp = 1e-9;
inline constexpr double kNegativeLossError = 1e-6;

// Excess true cost of acting on a known decision: c^T w - z*(c), clamped at 0.
inline double excess_cost(std::span<const double> c, std::span<const double> w, double z_star) {
  const double raw = dot(c, w) - z_star;
  if (raw < -kNegativeLossError) {
    throw Error(Errc::inconsistent_oracle,
                "negative decision loss " + std::to_string(raw) + ": oracle returned a non-optimal solution");
  }
  return raw < 0.0 ? 0.0 : raw;
}

template <DecisionOracle O>
double spo_loss(std::span<const double> c_hat, std::span<const double> c, const O& oracle) {
  require_dims(c_hat.size(), oracle.decision_dim(), "spo_loss prediction");
  require_dims(c.size(), oracle.decision_dim(), "spo_loss cost");
  const Decision induced = oracle.solve_min(c_hat);
  return excess_cost(c, induced.w, oracle.optimal_value(c));
}

// z*(c_i) for every row.
template <DecisionOracle O>
std::vector<double> optimal_values(const Dataset& data, const O& oracle) {
  require_dims(data.decision_dim(), oracle.decision_dim(), "dataset vs oracle");
  std::vector<double> z(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) z[i] = oracle.optimal_value(data.costs(i));
  return z;
}

// Weighted SPO loss of predicting c_hat for every row in `rows`.
template <DecisionOracle O>
double within_leaf_spo_loss(const Dataset& data, std::span<const std::size_t> rows, std::span<const double> c_hat,
                            const O& oracle) {
  const Decision induced = oracle.solve_min(c_hat);
  double s = 0.0;
  for (std::size_t i : rows) s += data.weight(i) * excess_cost(data.costs(i), induced.w, oracle.optimal_value(data.costs(i)));
  return s;
}

struct LossReport {
  double weighted_spo = 0.0;   // sum_i weight_i * spo_i
  double weighted_z = 0.0;     // sum_i weight_i * z*(c_i)
  double weighted_mse = 0.0;   // sum_i weight_i * ||c_hat_i - c_i||^2
  double total_weight = 0.0;

  // Cumulative decision loss over cumulative optimal cost. For maximization
  // problems stored as negated costs the denominator is negative, so its
  // magnitude is used.
  double normalized_spo() const {
    require(weighted_z != 0.0, Errc::invalid_argument, "normalized SPO loss undefined: sum of optimal values is 0");
    return weighted_spo / std::abs(weighted_z);
  }
  double mean_spo() const { return weighted_spo / total_weight; }
  double mean_mse() const { return weighted_mse / total_weight; }
};

// Scores a predictor that maps x to (c_hat, decision) over a dataset.
template <DecisionOracle O, class Predict>
LossReport evaluate_predictions(const Dataset& data, const O& oracle, Predict&& predict) {
  data.validate();
  LossReport rep;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto [c_hat, dec] = predict(data.features(i));
    const auto c = data.costs(i);
    const double z = oracle.optimal_value(c);
    const double w = data.weight(i);
    rep.weighted_spo += w * excess_cost(c, dec.w, z);
    rep.weighted_z += w * z;
    rep.weighted_mse += w * mse_loss(c_hat, c);
    rep.total_weight += w;
  }
  return rep;
}

}  // namespace spotree
