#pragma once

// Bagged ensembles of greedy trees. Predictions average the per-tree cost
// vectors and make one oracle call on the average.

#include <cstdio>
#include <filesystem>
#include <string>

#include "spotree/greedy.hpp"
#include "spotree/parallel.hpp"

namespace spotree {

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t feature_bag = 0;  // features per split; 0 means all p
  GreedyConfig tree;            // loss / min leaf / quantiles; max_depth normally unset
  std::uint64_t seed = 0;
  bool bootstrap = true;
  unsigned threads = 1;

  void validate(std::size_t p) const {
    require(n_trees >= 1, Errc::invalid_argument, "forest needs at least one tree");
    require(feature_bag <= p, Errc::invalid_argument, "feature_bag must be <= number of features");
    tree.validate();
  }
};

struct Forest {
  std::size_t feature_dim = 0;
  std::size_t decision_dim = 0;
  LossKind loss = LossKind::spo;
  std::size_t feature_bag = 0;
  std::vector<Tree> trees;
  std::vector<std::uint64_t> tree_seeds;
};

// Row indices drawn with replacement, probability proportional to weight.
inline std::vector<std::size_t> weighted_bootstrap(const Dataset& data, Rng& rng) {
  std::vector<double> cumulative(data.size());
  double run = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) cumulative[i] = (run += data.weight(i));
  std::vector<std::size_t> draws(data.size());
  for (auto& d : draws) {
    const double u = rng.uniform() * run;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    d = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), data.size() - 1);
    while (data.weight(d) == 0.0 && d + 1 < data.size()) ++d;
  }
  return draws;
}

template <DecisionOracle O>
Tree train_forest_member(const Dataset& train, const ForestConfig& cfg, std::uint64_t tree_seed, const O& oracle) {
  GreedyConfig tcfg = cfg.tree;
  tcfg.feature_bag = cfg.feature_bag;
  tcfg.seed = tree_seed;
  Rng sampler = Rng::stream(tree_seed, "bootstrap");
  Rng bagger = Rng::stream(tree_seed, "feature-bag");
  if (!cfg.bootstrap) return grow_tree(train, train.all_rows(), tcfg, oracle, &bagger);
  // Each draw becomes its own unit-weight row.
  Dataset sample = train.subset(weighted_bootstrap(train, sampler));
  for (std::size_t i = 0; i < sample.size(); ++i) sample.set_weight(i, 1.0);
  return grow_tree(sample, sample.all_rows(), tcfg, oracle, &bagger);
}

// B trees on bootstrap samples; per-tree randomness comes from seed + tree
// index, so the result does not depend on the thread count.
template <DecisionOracle O>
Forest train_forest(const Dataset& train, const ForestConfig& cfg, const O& oracle) {
  train.validate();
  cfg.validate(train.feature_dim());
  Forest forest;
  forest.feature_dim = train.feature_dim();
  forest.decision_dim = train.decision_dim();
  forest.loss = cfg.tree.loss;
  forest.feature_bag = cfg.feature_bag == 0 ? train.feature_dim() : cfg.feature_bag;
  forest.trees.resize(cfg.n_trees);
  forest.tree_seeds.resize(cfg.n_trees);
  for (std::size_t b = 0; b < cfg.n_trees; ++b) forest.tree_seeds[b] = derive_seed(cfg.seed, b);
  parallel_for(cfg.n_trees, cfg.threads, [&](std::size_t b) {
    forest.trees[b] = train_forest_member(train, cfg, forest.tree_seeds[b], oracle);
  });
  return forest;
}

template <DecisionOracle O>
std::pair<CostVector, Decision> forest_predict(const Forest& forest, std::span<const double> x, const O& oracle) {
  require_dims(x.size(), forest.feature_dim, "forest_predict features");
  require(!forest.trees.empty(), Errc::empty_input, "forest has no trees");
  CostVector mean(forest.decision_dim, 0.0);
  for (const Tree& t : forest.trees) {
    const auto& leaf = t.leaf_for(x);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += leaf.mean_cost[k];
  }
  for (double& v : mean) v /= static_cast<double>(forest.trees.size());
  Decision dec = oracle.solve_min(mean);
  return {std::move(mean), std::move(dec)};
}

struct BagTuning {
  std::size_t feature_bag = 0;
  std::vector<std::pair<std::size_t, double>> validation_loss;  // (f, weighted SPO)
  Forest forest;                                                // trained on the fit part
};

// Picks f from `candidates` by weighted validation SPO loss on a holdout of
// cfg.tree.validation_fraction (ties go to the smaller f).
template <DecisionOracle O>
BagTuning tune_feature_bag(const Dataset& train, std::vector<std::size_t> candidates, const ForestConfig& cfg,
                           const O& oracle) {
  require(!candidates.empty(), Errc::invalid_argument, "no feature-bag candidates");
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  auto [fit_set, val_set] = holdout_split(train, cfg.tree.validation_fraction, cfg.seed);
  require(!val_set.empty(), Errc::empty_input, "feature-bag tuning needs a nonempty validation split");
  BagTuning out;
  double best = kInf;
  for (std::size_t f : candidates) {
    if (f < 1 || f > train.feature_dim()) continue;
    ForestConfig fc = cfg;
    fc.feature_bag = f;
    Forest forest = train_forest(fit_set, fc, oracle);
    const LossReport rep = evaluate_predictions(val_set, oracle, [&](std::span<const double> x) {
      return forest_predict(forest, x, oracle);
    });
    out.validation_loss.emplace_back(f, rep.weighted_spo);
    if (rep.weighted_spo < best) {
      best = rep.weighted_spo;
      out.feature_bag = f;
      out.forest = std::move(forest);
    }
  }
  require(out.feature_bag != 0, Errc::invalid_argument, "no feature-bag candidate within [1, p]");
  return out;
}

// Directory layout: manifest.json plus tree_NNNN.json per member.
inline void save_forest(const Forest& forest, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, Errc::io_error, "cannot create forest directory " + dir);
  nlohmann::json manifest;
  manifest["format"] = "spotree-forest";
  manifest["version"] = 1;
  manifest["feature_dim"] = forest.feature_dim;
  manifest["decision_dim"] = forest.decision_dim;
  manifest["loss"] = std::string(to_string(forest.loss));
  manifest["feature_bag"] = forest.feature_bag;
  manifest["tree_seeds"] = forest.tree_seeds;
  std::vector<std::string> files;
  for (std::size_t b = 0; b < forest.trees.size(); ++b) {
    char name[32];
    std::snprintf(name, sizeof name, "tree_%04zu.json", b);
    files.emplace_back(name);
    save_tree(forest.trees[b], (fs::path(dir) / name).string());
  }
  manifest["trees"] = files;
  save_json(manifest, (fs::path(dir) / "manifest.json").string());
}

inline Forest load_forest(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto manifest = load_json((fs::path(dir) / "manifest.json").string());
  try {
    require(manifest.at("format") == "spotree-forest", Errc::parse_error, "not a spotree forest manifest");
    Forest forest;
    forest.feature_dim = manifest.at("feature_dim").get<std::size_t>();
    forest.decision_dim = manifest.at("decision_dim").get<std::size_t>();
    forest.loss = parse_loss_kind(manifest.at("loss").get<std::string>());
    forest.feature_bag = manifest.at("feature_bag").get<std::size_t>();
    forest.tree_seeds = manifest.at("tree_seeds").get<std::vector<std::uint64_t>>();
    for (const auto& f : manifest.at("trees")) {
      Tree t = load_tree((fs::path(dir) / f.get<std::string>()).string());
      require(t.feature_dim() == forest.feature_dim && t.decision_dim() == forest.decision_dim,
              Errc::dimension_mismatch, "forest member dimensions disagree with the manifest");
      forest.trees.push_back(std::move(t));
    }
    return forest;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("forest manifest: ") + e.what());
  }
}

}  // namespace spotree
