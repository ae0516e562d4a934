#pragma once

// Domain types shared by every trainer: weighted datasets, decisions and the
// prediction-error loss. Decision-error (SPO) losses live in loss.hpp since
// they need an oracle.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spotree/error.hpp"
#include "spotree/rng.hpp"

namespace spotree {

using CostVector = std::vector<double>;

enum class FeatureKind { numeric, categorical };

// An oracle's answer for one cost vector: the decision w and c^T w.
struct Decision {
  std::vector<double> w;
  double objective_value = 0.0;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_dims(b.size(), a.size(), "dot");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Feature-cost pairs with per-row sample weights, stored row-major.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t feature_dim, std::size_t decision_dim)
      : p_(feature_dim), d_(decision_dim), kinds_(feature_dim, FeatureKind::numeric) {}

  void add(std::span<const double> x, std::span<const double> c, double weight = 1.0) {
    require_dims(x.size(), p_, "feature vector");
    require_dims(c.size(), d_, "cost vector");
    require(weight >= 0.0 && std::isfinite(weight), Errc::invalid_argument,
            "sample weight must be finite and nonnegative");
    for (double v : c) require(std::isfinite(v), Errc::invalid_argument, "cost entries must be finite");
    x_.insert(x_.end(), x.begin(), x.end());
    c_.insert(c_.end(), c.begin(), c.end());
    w_.push_back(weight);
  }

  std::size_t size() const { return w_.size(); }
  bool empty() const { return w_.empty(); }
  std::size_t feature_dim() const { return p_; }
  std::size_t decision_dim() const { return d_; }

  std::span<const double> features(std::size_t i) const { return {x_.data() + i * p_, p_}; }
  std::span<const double> costs(std::size_t i) const { return {c_.data() + i * d_, d_}; }
  std::span<double> mutable_costs(std::size_t i) { return {c_.data() + i * d_, d_}; }
  std::span<double> mutable_features(std::size_t i) { return {x_.data() + i * p_, p_}; }
  double feature(std::size_t i, std::size_t j) const { return x_[i * p_ + j]; }
  double weight(std::size_t i) const { return w_[i]; }
  void set_weight(std::size_t i, double w) { w_[i] = w; }

  FeatureKind kind(std::size_t j) const { return kinds_[j]; }
  const std::vector<FeatureKind>& kinds() const { return kinds_; }
  void set_kind(std::size_t j, FeatureKind k) { kinds_.at(j) = k; }

  double total_weight() const { return std::accumulate(w_.begin(), w_.end(), 0.0); }

  // Throws unless weights are usable as a training/evaluation set.
  void validate() const {
    require(!empty(), Errc::empty_input, "dataset is empty");
    require(total_weight() > 0.0, Errc::invalid_argument, "dataset needs at least one positive weight");
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out(p_, d_);
    out.kinds_ = kinds_;
    out.x_.reserve(rows.size() * p_);
    out.c_.reserve(rows.size() * d_);
    for (std::size_t i : rows) {
      out.x_.insert(out.x_.end(), x_.begin() + i * p_, x_.begin() + (i + 1) * p_);
      out.c_.insert(out.c_.end(), c_.begin() + i * d_, c_.begin() + (i + 1) * d_);
      out.w_.push_back(w_[i]);
    }
    return out;
  }

  std::vector<std::size_t> all_rows() const {
    std::vector<std::size_t> rows(size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
  }

 private:
  std::size_t p_ = 0;
  std::size_t d_ = 0;
  std::vector<FeatureKind> kinds_;
  std::vector<double> x_;
  std::vector<double> c_;
  std::vector<double> w_;
};

inline double mse_loss(std::span<const double> c_hat, std::span<const double> c) {
  require_dims(c_hat.size(), c.size(), "mse_loss");
  double s = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double e = c_hat[k] - c[k];
    s += e * e;
  }
  return s;
}

// Weighted mean cost of the given rows (the optimal leaf prediction).
inline CostVector leaf_mean(const Dataset& data, std::span<const std::size_t> rows) {
  require(!rows.empty(), Errc::empty_input, "leaf_mean of an empty row set");
  CostVector mean(data.decision_dim(), 0.0);
  double total = 0.0;
  for (std::size_t i : rows) {
    const double w = data.weight(i);
    auto c = data.costs(i);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += w * c[k];
    total += w;
  }
  require(total > 0.0, Errc::empty_input, "leaf_mean needs positive total weight");
  for (double& v : mean) v /= total;
  return mean;
}

inline CostVector leaf_mean(const Dataset& data) { return leaf_mean(data, data.all_rows()); }

// Breaks ties between optimal decisions by jittering every cost entry by
// uniform noise of size magnitude * max(|c|, 1). Applied once per dataset.
inline void perturb_costs(Dataset& data, double magnitude, std::uint64_t seed) {
  if (magnitude <= 0.0) return;
  Rng rng = Rng::stream(seed, "tie-noise");
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double& v : data.mutable_costs(i)) {
      v += magnitude * std::max(std::abs(v), 1.0) * rng.uniform(-1.0, 1.0);
    }
  }
}

// Disjoint (train, holdout) row split; the holdout gets round(fraction * n) rows.
inline std::pair<Dataset, Dataset> holdout_split(const Dataset& data, double fraction, std::uint64_t seed) {
  require(fraction >= 0.0 && fraction < 1.0, Errc::invalid_argument, "holdout fraction must be in [0,1)");
  const std::size_t n = data.size();
  const auto n_hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  Rng rng = Rng::stream(seed, "holdout");
  std::vector<std::size_t> hold = rng.sample_without_replacement(n, n_hold);
  std::vector<char> is_hold(n, 0);
  for (std::size_t i : hold) is_hold[i] = 1;
  std::vector<std::size_t> keep;
  keep.reserve(n - hold.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!is_hold[i]) keep.push_back(i);
  return {data.subset(keep), data.subset(hold)};
}

}  // namespace spotree
