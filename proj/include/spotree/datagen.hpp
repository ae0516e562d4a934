#pragma once

// Synthetic instances: the two-road illustration, the noisy 4x4 grid
// shortest-path family, and a stand-in for constrained news recommendation.
//
// Each generator draws from named substreams of its seed ("features",
// "noise", "B", "constraints", ...), so changing one sample size does not
// shift the randomness used for another purpose.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "spotree/core.hpp"
#include "spotree/oracle.hpp"

namespace spotree {

// ---- two roads, one feature ------------------------------------------------

struct TwoEdgeConfig {
  std::size_t n = 10000;
  double noise = 0.0;  // multiplicative Uniform[1-noise, 1+noise]; 0 = exact costs
  std::uint64_t seed = 0;
};

inline std::array<double, 2> two_edge_costs(double x) { return {5.0 * x + 1.9, (5.0 * x + 0.4) * (5.0 * x + 0.4)}; }

// Where both roads cost the same: 5x + 1.9 = (5x + 0.4)^2.
inline double two_edge_boundary() { return (std::sqrt(7.0) + 0.2) / 10.0; }

inline Dataset gen_two_edge(const TwoEdgeConfig& cfg, std::string_view stream = "train") {
  require(cfg.n >= 1, Errc::invalid_argument, "two-edge generator needs n >= 1");
  const std::string tag(stream);
  Rng xs = Rng::stream(cfg.seed, tag + "/features");
  Rng ns = Rng::stream(cfg.seed, tag + "/noise");
  Dataset data(1, 2);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double x = xs.uniform();
    auto c = two_edge_costs(x);
    if (cfg.noise > 0.0)
      for (double& v : c) v *= ns.uniform(1.0 - cfg.noise, 1.0 + cfg.noise);
    data.add(std::span<const double>(&x, 1), c);
  }
  return data;
}

// ---- grid shortest path ----------------------------------------------------

struct GridSPConfig {
  std::size_t n = 200;
  std::size_t test_size = 1000;
  std::size_t p = 5;
  int degree = 2;
  double noise = 0.0;  // epsilon-bar
  std::size_t grid_width = 4;
  std::size_t grid_height = 4;
  std::uint64_t seed = 0;

  void validate() const {
    require(n >= 1, Errc::invalid_argument, "grid-sp needs n >= 1");
    require(p >= 1, Errc::invalid_argument, "grid-sp needs p >= 1");
    require(degree >= 1, Errc::invalid_argument, "degree must be a positive integer");
    require(noise >= 0.0, Errc::invalid_argument, "noise must be >= 0");
  }
};

struct GridSPInstance {
  Dataset train;
  Dataset test;
  std::vector<std::vector<int>> b_matrix;  // d x p, entries in {0,1}
};

// c_k = ((B x)_k / sqrt(p) + 1)^deg * eps_k with eps_k ~ U[1 - noise, 1 + noise].
inline std::vector<double> grid_costs(const std::vector<std::vector<int>>& b, std::span<const double> x, int degree) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(x.size()));
  std::vector<double> c(b.size());
  for (std::size_t k = 0; k < b.size(); ++k) {
    double bx = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) bx += b[k][j] * x[j];
    c[k] = std::pow(scale * bx + 1.0, degree);
  }
  return c;
}

inline GridSPInstance gen_grid_sp(const GridSPConfig& cfg) {
  cfg.validate();
  const GridShortestPathOracle grid(cfg.grid_width, cfg.grid_height);
  const std::size_t d = grid.decision_dim();
  GridSPInstance inst{Dataset(cfg.p, d), Dataset(cfg.p, d), {}};
  Rng bs = Rng::stream(cfg.seed, "B");
  inst.b_matrix.assign(d, std::vector<int>(cfg.p, 0));
  for (auto& row : inst.b_matrix)
    for (int& v : row) v = bs.bernoulli(0.5) ? 1 : 0;

  auto fill = [&](Dataset& out, std::size_t count, std::string_view tag) {
    Rng xs = Rng::stream(cfg.seed, std::string(tag) + "/features");
    Rng es = Rng::stream(cfg.seed, std::string(tag) + "/noise");
    std::vector<double> x(cfg.p);
    for (std::size_t i = 0; i < count; ++i) {
      for (double& v : x) v = xs.uniform();
      auto c = grid_costs(inst.b_matrix, x, cfg.degree);
      for (double& v : c) v *= es.uniform(1.0 - cfg.noise, 1.0 + cfg.noise);
      out.add(x, c);
    }
  };
  fill(inst.train, cfg.n, "train");
  fill(inst.test, cfg.test_size, "test");
  return inst;
}

// ---- news recommendation stand-in -----------------------------------------
//
// Click probabilities come from a logistic model of the user features,
// clipped to [0.01, 0.99] after multiplicative noise. Costs are stored
// negated so that minimizing cost maximizes the expected click rate.

struct NewsConfig {
  std::size_t d = 6;
  std::size_t p = 5;
  std::size_t n = 2000;
  std::size_t test_size = 2000;
  std::size_t constraints = 5;
  double noise = 0.25;
  double coef_scale = 3.0;     // logistic slopes ~ U[-scale, scale]
  double min_weight = 1.0;     // interaction counts ~ U{min..max}
  double max_weight = 100.0;
  std::uint64_t seed = 0;             // ground truth, features, weights
  std::uint64_t constraint_seed = 0;  // constraint set

  void validate() const {
    require(d >= 2, Errc::invalid_argument, "news needs d >= 2");
    require(p >= 1, Errc::invalid_argument, "news needs p >= 1");
    require(n >= 1, Errc::invalid_argument, "news needs n >= 1");
    require(min_weight > 0.0 && max_weight >= min_weight, Errc::invalid_argument, "bad news weight range");
  }
};

struct NewsInstance {
  Dataset train;
  Dataset test;
  std::vector<HalfSpace> constraints;
  PolytopeLpOracle oracle;
};

// Constraints a_m ~ Exponential(1)^d, b_m = 1, resampled until e/d is feasible.
inline std::vector<HalfSpace> sample_news_constraints(std::size_t d, std::size_t m, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "constraints");
  std::vector<HalfSpace> out;
  while (out.size() < m) {
    HalfSpace h{std::vector<double>(d), 1.0};
    double sum = 0.0;
    for (double& a : h.a) sum += (a = rng.exponential(1.0));
    if (sum / static_cast<double>(d) <= 1.0) out.push_back(std::move(h));
  }
  return out;
}

inline NewsInstance gen_news(const NewsConfig& cfg) {
  cfg.validate();
  Rng truth = Rng::stream(cfg.seed, "truth");
  std::vector<std::vector<double>> slope(cfg.d, std::vector<double>(cfg.p));
  std::vector<double> bias(cfg.d);
  for (std::size_t k = 0; k < cfg.d; ++k) {
    for (double& s : slope[k]) s = truth.uniform(-cfg.coef_scale, cfg.coef_scale);
    bias[k] = truth.uniform(-1.0, 1.0);
  }
  auto cons = sample_news_constraints(cfg.d, cfg.constraints, cfg.constraint_seed);
  NewsInstance inst{Dataset(cfg.p, cfg.d), Dataset(cfg.p, cfg.d), cons, PolytopeLpOracle(cfg.d, cons)};

  auto fill = [&](Dataset& out, std::size_t count, std::string_view tag) {
    Rng xs = Rng::stream(cfg.seed, std::string(tag) + "/features");
    Rng es = Rng::stream(cfg.seed, std::string(tag) + "/noise");
    Rng ws = Rng::stream(cfg.seed, std::string(tag) + "/weights");
    std::vector<double> x(cfg.p), c(cfg.d);
    for (std::size_t i = 0; i < count; ++i) {
      for (double& v : x) v = xs.uniform();
      for (std::size_t k = 0; k < cfg.d; ++k) {
        double eta = bias[k];
        for (std::size_t j = 0; j < cfg.p; ++j) eta += slope[k][j] * (x[j] - 0.5);
        double prob = 1.0 / (1.0 + std::exp(-eta));
        prob *= es.uniform(1.0 - cfg.noise, 1.0 + cfg.noise);
        c[k] = -std::clamp(prob, 0.01, 0.99);
      }
      const auto span = static_cast<std::uint64_t>(cfg.max_weight - cfg.min_weight) + 1;
      out.add(x, c, cfg.min_weight + static_cast<double>(ws.below(span)));
    }
  };
  fill(inst.train, cfg.n, "train");
  fill(inst.test, cfg.test_size, "test");
  return inst;
}

}  // namespace spotree
