#pragma once

// Greedy recursive partitioning. With LossKind::spo each candidate split is
// scored by the decision loss of the two child leaf means (one oracle call
// per child); with LossKind::mse this is plain CART regression.
//
// Leaf losses are linear in the row sums once the leaf decision is fixed:
//   sum_i w_i (c_i^T w_l - z_i) = (sum_i w_i c_i)^T w_l - sum_i w_i z_i,
// so a sorted sweep with running sums scores every threshold in O(d) plus
// the two oracle calls.

#include <algorithm>
#include <map>
#include <optional>

#include "spotree/loss.hpp"
#include "spotree/tree.hpp"

namespace spotree {

inline constexpr double kSplitImprovementTol = 1e-9;

struct GreedyConfig {
  LossKind loss = LossKind::spo;
  std::optional<int> max_depth;  // unrestricted when empty
  double min_leaf_weight = 20.0;
  std::size_t quantiles = 100;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  std::size_t feature_bag = 0;  // features tried per split; 0 means all

  void validate() const {
    require(!max_depth || *max_depth >= 0, Errc::invalid_argument, "max_depth must be >= 0");
    require(min_leaf_weight >= 1.0, Errc::invalid_argument, "min_leaf_weight must be >= 1");
    require(quantiles >= 1, Errc::invalid_argument, "quantiles must be >= 1");
    require(validation_fraction >= 0.0 && validation_fraction < 1.0, Errc::invalid_argument,
            "validation_fraction must be in [0,1)");
  }
};

struct SplitCandidate {
  SplitRule rule;
  double loss = 0.0;  // weighted sum of both children's losses
};

namespace detail {

// Running sums over a row set.
struct Moments {
  std::vector<double> sum_c;
  double sum_z = 0.0;
  double sum_sq = 0.0;
  double weight = 0.0;

  explicit Moments(std::size_t d = 0) : sum_c(d, 0.0) {}

  void add(std::span<const double> c, double z, double w) {
    for (std::size_t k = 0; k < sum_c.size(); ++k) sum_c[k] += w * c[k];
    double sq = 0.0;
    for (double v : c) sq += v * v;
    sum_z += w * z;
    sum_sq += w * sq;
    weight += w;
  }

  Moments minus(const Moments& o) const {
    Moments m(sum_c.size());
    for (std::size_t k = 0; k < sum_c.size(); ++k) m.sum_c[k] = sum_c[k] - o.sum_c[k];
    m.sum_z = sum_z - o.sum_z;
    m.sum_sq = sum_sq - o.sum_sq;
    m.weight = weight - o.weight;
    return m;
  }
};

struct NodeFit {
  CostVector mean;
  Decision decision;
  double loss = 0.0;
};

template <DecisionOracle O>
NodeFit fit_node(const Moments& m, LossKind kind, const O& oracle) {
  NodeFit fit;
  fit.mean.resize(m.sum_c.size());
  for (std::size_t k = 0; k < fit.mean.size(); ++k) fit.mean[k] = m.sum_c[k] / m.weight;
  fit.decision = oracle.solve_min(fit.mean);
  if (kind == LossKind::spo) {
    fit.loss = dot(m.sum_c, fit.decision.w) - m.sum_z;
  } else {
    double norm2 = 0.0;
    for (double v : m.sum_c) norm2 += v * v;
    fit.loss = m.sum_sq - norm2 / m.weight;
  }
  fit.loss = std::max(fit.loss, 0.0);
  return fit;
}

// Loss-only variant used while scanning candidates (skips the mean copy for MSE).
template <DecisionOracle O>
double node_loss(const Moments& m, LossKind kind, const O& oracle) {
  if (kind == LossKind::mse) {
    double norm2 = 0.0;
    for (double v : m.sum_c) norm2 += v * v;
    return std::max(m.sum_sq - norm2 / m.weight, 0.0);
  }
  return fit_node(m, kind, oracle).loss;
}

// Gap positions (between sorted unique values u_q and u_{q+1}) that become
// candidate thresholds: every gap when there are few, otherwise `quantiles`
// equally spaced ones.
inline std::vector<std::size_t> candidate_gaps(std::size_t n_unique, std::size_t quantiles) {
  std::vector<std::size_t> gaps;
  if (n_unique < 2) return gaps;
  const std::size_t n_gaps = n_unique - 1;
  if (n_gaps <= quantiles) {
    for (std::size_t g = 0; g < n_gaps; ++g) gaps.push_back(g);
    return gaps;
  }
  for (std::size_t t = 1; t <= quantiles; ++t) {
    const std::size_t g = t * n_gaps / (quantiles + 1);
    if (gaps.empty() || gaps.back() != g) gaps.push_back(g);
  }
  return gaps;
}

// Shared view of a training set with z*(c_i) cached per row.
template <DecisionOracle O>
struct TrainingContext {
  const Dataset& data;
  const O& oracle;
  std::vector<double> z;

  TrainingContext(const Dataset& d, const O& o) : data(d), oracle(o), z(optimal_values(d, o)) {}

  Moments moments(std::span<const std::size_t> rows) const {
    Moments m(data.decision_dim());
    for (std::size_t i : rows) m.add(data.costs(i), z[i], data.weight(i));
    return m;
  }
};

// Calls fn(rule, left, right) for every candidate split of `rows` on the
// given features, in (feature, threshold) order.
template <DecisionOracle O, class Fn>
void for_each_split(const TrainingContext<O>& ctx, std::span<const std::size_t> rows,
                    std::span<const std::size_t> features, std::size_t quantiles, Fn&& fn) {
  const Dataset& data = ctx.data;
  const Moments total = ctx.moments(rows);
  std::vector<std::size_t> order(rows.begin(), rows.end());
  for (std::size_t j : features) {
    if (data.kind(j) == FeatureKind::categorical) {
      std::map<double, Moments> groups;
      for (std::size_t i : rows) {
        auto [it, inserted] = groups.try_emplace(data.feature(i, j), data.decision_dim());
        it->second.add(data.costs(i), ctx.z[i], data.weight(i));
      }
      if (groups.size() < 2) continue;
      for (const auto& [value, left] : groups) fn(SplitRule{j, SplitKind::categorical, value}, left, total.minus(left));
      continue;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data.feature(a, j) < data.feature(b, j); });
    std::vector<double> uniq;
    std::vector<std::size_t> run_end;  // one past the last sorted row holding uniq[q]
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const double v = data.feature(order[pos], j);
      if (uniq.empty() || v != uniq.back()) {
        if (!uniq.empty()) run_end.push_back(pos);
        uniq.push_back(v);
      }
    }
    run_end.push_back(order.size());
    const auto gaps = candidate_gaps(uniq.size(), quantiles);
    Moments left(data.decision_dim());
    std::size_t pos = 0;
    for (std::size_t g : gaps) {
      for (; pos < run_end[g]; ++pos) left.add(data.costs(order[pos]), ctx.z[order[pos]], data.weight(order[pos]));
      double threshold = 0.5 * (uniq[g] + uniq[g + 1]);
      if (!(threshold < uniq[g + 1])) threshold = uniq[g];
      fn(SplitRule{j, SplitKind::numeric, threshold}, left, total.minus(left));
    }
  }
}

template <DecisionOracle O>
std::optional<SplitCandidate> best_split_impl(const TrainingContext<O>& ctx, std::span<const std::size_t> rows,
                                              std::span<const std::size_t> features, const GreedyConfig& cfg,
                                              double parent_loss) {
  std::optional<SplitCandidate> best;
  for_each_split(ctx, rows, features, cfg.quantiles, [&](const SplitRule& rule, const Moments& l, const Moments& r) {
    if (l.weight < cfg.min_leaf_weight || r.weight < cfg.min_leaf_weight) return;
    const double loss = node_loss(l, cfg.loss, ctx.oracle) + node_loss(r, cfg.loss, ctx.oracle);
    if (!best || loss < best->loss) best = SplitCandidate{rule, loss};
  });
  if (best && best->loss < parent_loss - kSplitImprovementTol) return best;
  return std::nullopt;
}

inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> partition_rows(
    const Dataset& data, std::span<const std::size_t> rows, const SplitRule& rule) {
  std::vector<std::size_t> left, right;
  for (std::size_t i : rows) (rule.goes_left(data.features(i)) ? left : right).push_back(i);
  return {std::move(left), std::move(right)};
}

template <DecisionOracle O>
TreeNode make_node(const TrainingContext<O>& ctx, std::span<const std::size_t> rows, LossKind kind, int depth) {
  const Moments m = ctx.moments(rows);
  NodeFit fit = fit_node(m, kind, ctx.oracle);
  TreeNode node;
  node.mean_cost = std::move(fit.mean);
  node.decision = std::move(fit.decision);
  node.weight = m.weight;
  node.loss = fit.loss;
  node.depth = depth;
  return node;
}

template <DecisionOracle O>
int grow(Tree& tree, const TrainingContext<O>& ctx, const std::vector<std::size_t>& rows, int depth,
         const GreedyConfig& cfg, Rng* bag_rng) {
  const int idx = tree.add_node(make_node(ctx, rows, cfg.loss, depth));
  const TreeNode& node = tree.nodes()[idx];
  const bool depth_ok = !cfg.max_depth || depth < *cfg.max_depth;
  if (!depth_ok || node.weight < 2.0 * cfg.min_leaf_weight) return idx;

  const std::size_t p = ctx.data.feature_dim();
  std::vector<std::size_t> features;
  if (cfg.feature_bag > 0 && cfg.feature_bag < p) {
    require(bag_rng != nullptr, Errc::invalid_argument, "feature bagging needs a random stream");
    features = bag_rng->sample_without_replacement(p, cfg.feature_bag);
  } else {
    for (std::size_t j = 0; j < p; ++j) features.push_back(j);
  }
  const auto best = best_split_impl(ctx, rows, features, cfg, node.loss);
  if (!best) return idx;

  auto [left_rows, right_rows] = partition_rows(ctx.data, rows, best->rule);
  tree.nodes()[idx].split = best->rule;
  const int l = grow(tree, ctx, left_rows, depth + 1, cfg, bag_rng);
  const int r = grow(tree, ctx, right_rows, depth + 1, cfg, bag_rng);
  tree.nodes()[idx].left = l;
  tree.nodes()[idx].right = r;
  return idx;
}

}  // namespace detail

// Best admissible split of `rows`, or nothing when no split leaves at least
// min_leaf_weight on both sides and strictly lowers the parent's loss.
template <DecisionOracle O>
std::optional<SplitCandidate> best_split(const Dataset& data, std::span<const std::size_t> rows,
                                         const GreedyConfig& cfg, const O& oracle) {
  require(!rows.empty(), Errc::empty_input, "best_split on an empty row set");
  const detail::TrainingContext<O> ctx(data, oracle);
  const auto parent = detail::fit_node(ctx.moments(rows), cfg.loss, oracle);
  std::vector<std::size_t> features(data.feature_dim());
  std::iota(features.begin(), features.end(), std::size_t{0});
  return detail::best_split_impl(ctx, rows, features, cfg, parent.loss);
}

// Grows a tree on the given rows. bag_rng is only consulted when
// cfg.feature_bag restricts the features tried per split.
template <DecisionOracle O>
Tree grow_tree(const Dataset& data, const std::vector<std::size_t>& rows, const GreedyConfig& cfg, const O& oracle,
               Rng* bag_rng = nullptr) {
  cfg.validate();
  require(!rows.empty(), Errc::empty_input, "cannot train on an empty dataset");
  require_dims(data.decision_dim(), oracle.decision_dim(), "dataset vs oracle");
  const detail::TrainingContext<O> ctx(data, oracle);
  Tree tree(data.feature_dim(), data.decision_dim(), cfg.loss);
  detail::grow(tree, ctx, rows, 0, cfg, bag_rng);
  return tree;
}

// Unpruned greedy tree on the whole training set.
template <DecisionOracle O>
Tree train_greedy(const Dataset& train, const GreedyConfig& cfg, const O& oracle) {
  train.validate();
  require(train.total_weight() >= cfg.min_leaf_weight, Errc::invalid_argument,
          "training weight is below min_leaf_weight");
  Rng bag = Rng::stream(cfg.seed, "feature-bag");
  return grow_tree(train, train.all_rows(), cfg, oracle, &bag);
}

// ---- cost-complexity pruning ---------------------------------------------

namespace detail {

inline void subtree_cost(const Tree& tree, const std::vector<char>& collapsed, int idx, double& loss,
                         std::size_t& leaves) {
  const TreeNode& n = tree.nodes()[idx];
  if (n.is_leaf() || collapsed[idx]) {
    loss += n.loss;
    leaves += 1;
    return;
  }
  subtree_cost(tree, collapsed, n.left, loss, leaves);
  subtree_cost(tree, collapsed, n.right, loss, leaves);
}

inline void collect_internal(const Tree& tree, const std::vector<char>& collapsed, int idx, std::vector<int>& out) {
  const TreeNode& n = tree.nodes()[idx];
  if (n.is_leaf() || collapsed[idx]) return;
  out.push_back(idx);
  collect_internal(tree, collapsed, n.left, out);
  collect_internal(tree, collapsed, n.right, out);
}

inline int copy_collapsed(const Tree& src, const std::vector<char>& collapsed, int idx, Tree& dst) {
  TreeNode n = src.nodes()[idx];
  const bool stop = n.is_leaf() || collapsed[idx];
  if (stop) {
    n.split.reset();
    n.left = n.right = -1;
    return dst.add_node(std::move(n));
  }
  const int out = dst.add_node(n);
  const int l = copy_collapsed(src, collapsed, n.left, dst);
  const int r = copy_collapsed(src, collapsed, n.right, dst);
  dst.nodes()[out].left = l;
  dst.nodes()[out].right = r;
  return out;
}

}  // namespace detail

// Weakest-link subtree sequence from training losses stored on the nodes;
// each entry marks which internal nodes are collapsed. The first entry is the
// full tree and the last is the root alone.
inline std::vector<std::vector<char>> weakest_link_sequence(const Tree& tree) {
  std::vector<std::vector<char>> seq;
  std::vector<char> collapsed(tree.nodes().size(), 0);
  seq.push_back(collapsed);
  for (;;) {
    std::vector<int> internal;
    detail::collect_internal(tree, collapsed, 0, internal);
    if (internal.empty()) break;
    std::vector<double> g(internal.size());
    double g_min = kInf;
    for (std::size_t k = 0; k < internal.size(); ++k) {
      double loss = 0.0;
      std::size_t leaves = 0;
      detail::subtree_cost(tree, collapsed, internal[k], loss, leaves);
      g[k] = (tree.nodes()[internal[k]].loss - loss) / static_cast<double>(leaves - 1);
      g_min = std::min(g_min, g[k]);
    }
    const double tol = 1e-12 * std::max(1.0, std::abs(g_min));
    for (std::size_t k = 0; k < internal.size(); ++k)
      if (g[k] <= g_min + tol) collapsed[internal[k]] = 1;
    seq.push_back(collapsed);
  }
  return seq;
}

// Copy of the tree with the marked internal nodes turned into leaves.
inline Tree collapse(const Tree& tree, const std::vector<char>& collapsed) {
  Tree out(tree.feature_dim(), tree.decision_dim(), tree.loss_kind());
  detail::copy_collapsed(tree, collapsed, 0, out);
  return out;
}

// Cost-complexity pruning: the candidate subtrees come from the weakest-link
// sequence on training loss, and the one with the lowest validation loss is
// kept (ties go to the smaller tree). Leaves keep their training means.
template <DecisionOracle O>
Tree prune(const Tree& tree, const Dataset& validation, LossKind loss, const O& oracle) {
  validation.validate();
  require_dims(validation.feature_dim(), tree.feature_dim(), "validation features");
  require_dims(validation.decision_dim(), tree.decision_dim(), "validation costs");
  const auto seq = weakest_link_sequence(tree);
  if (seq.size() == 1) return tree;

  // Root-to-leaf path per validation row; a candidate subtree predicts with
  // the first collapsed node on the path.
  std::vector<std::vector<int>> paths(validation.size());
  std::vector<double> z(validation.size());
  for (std::size_t i = 0; i < validation.size(); ++i) {
    int idx = 0;
    auto x = validation.features(i);
    paths[i].push_back(0);
    while (!tree.nodes()[idx].is_leaf()) {
      const TreeNode& n = tree.nodes()[idx];
      idx = n.split->goes_left(x) ? n.left : n.right;
      paths[i].push_back(idx);
    }
    if (loss == LossKind::spo) z[i] = oracle.optimal_value(validation.costs(i));
  }
  auto row_loss = [&](std::size_t i, const TreeNode& n) {
    return loss == LossKind::spo ? excess_cost(validation.costs(i), n.decision.w, z[i])
                                 : mse_loss(n.mean_cost, validation.costs(i));
  };

  std::size_t best_k = 0;
  double best_loss = kInf;
  for (std::size_t k = 0; k < seq.size(); ++k) {
    double total = 0.0;
    for (std::size_t i = 0; i < validation.size(); ++i) {
      int at = paths[i].back();
      for (int idx : paths[i]) {
        if (seq[k][idx]) {
          at = idx;
          break;
        }
      }
      total += validation.weight(i) * row_loss(i, tree.nodes()[at]);
    }
    if (k == 0 || total <= best_loss + 1e-12 * std::max(1.0, std::abs(best_loss))) {
      if (k == 0 || total < best_loss) best_loss = total;
      best_k = k;
    }
  }
  if (best_k == 0) return tree;
  return collapse(tree, seq[best_k]);
}

// Holds out validation_fraction of the rows (drawn from cfg.seed), grows on
// the rest and prunes on the holdout. With validation_fraction == 0 this is
// train_greedy.
template <DecisionOracle O>
Tree train_pruned(const Dataset& train, const GreedyConfig& cfg, const O& oracle) {
  if (cfg.validation_fraction <= 0.0) return train_greedy(train, cfg, oracle);
  auto [fit_set, val_set] = holdout_split(train, cfg.validation_fraction, cfg.seed);
  require(!val_set.empty(), Errc::empty_input, "validation split is empty; use more data or prune=false");
  Tree tree = train_greedy(fit_set, cfg, oracle);
  return prune(tree, val_set, cfg.loss, oracle);
}

}  // namespace spotree
