#pragma once

// Exact SPO tree training.
//
// build_milp encodes "best complete tree of depth H" as a mixed-integer
// program over a heap-indexed tree: branch nodes t = 0..B-1 (children 2t+1,
// 2t+2) and leaves l = 0..L-1 sitting at heap positions B+l. Variables, in
// this order:
//   a_<j>_<t>, b_<t>, d_<t>   split feature, split point, split active
//   k_<l>                     leaf nonempty
//   w_<l>_<k>                 leaf decision, constrained to S
//   r_<i>_<l>                 row i sits in leaf l
//   y_<i>_<l>                 r_il * c_i^T w_l, linearized with big-M
// A row with a^T x >= b goes right and one with a^T (x + eps) <= b goes
// left. An inactive branch has b = 1 and sends every row left.
//
// exhaustive_exact is an independent solver for small instances: a full
// search over the greedy candidate thresholds.

#include <cmath>
#include <memory>
#include <numeric>
#include <optional>

#include "spotree/greedy.hpp"
#include "spotree/milp.hpp"

namespace spotree {

struct ExactConfig {
  int depth = 1;
  double min_leaf_weight = 20.0;
  double alpha = 0.0;                 // objective penalty per active split
  double feature_precision = 1e-2;    // rounding grid for features; 0 keeps them as is
  std::size_t quantiles = 100;        // candidate thresholds for exhaustive search
  std::optional<double> time_limit;   // seconds, for an external solver
  std::uint64_t enumeration_limit = 10'000'000;

  void validate() const {
    require(depth >= 1, Errc::invalid_argument, "exact depth must be >= 1");
    require(depth <= 12, Errc::too_large, "exact depth above 12 is not supported");
    require(alpha >= 0.0, Errc::invalid_argument, "alpha must be >= 0");
    require(feature_precision >= 0.0, Errc::invalid_argument, "feature precision must be >= 0");
    require(min_leaf_weight >= 0.0, Errc::invalid_argument, "min_leaf_weight must be >= 0");
    require(quantiles >= 1, Errc::invalid_argument, "quantiles must be >= 1");
  }
};

// What the variables mean, plus the data the model was built from.
struct MilpLayout {
  int depth = 0;
  std::size_t n = 0, p = 0, d = 0, leaves = 0, branches = 0;
  std::vector<double> epsilon;  // per feature
  double epsilon_max = 0.0;
  double m1 = 0.0, m2 = 0.0;
  double alpha = 0.0;
  double min_leaf_weight = 0.0;
  double feature_precision = 0.0;
  std::vector<double> x;  // rounded features, row-major n x p
  std::vector<double> z;  // z*(c_i)

  std::size_t a(std::size_t j, std::size_t t) const { return t * (p + 2) + j; }
  std::size_t b(std::size_t t) const { return t * (p + 2) + p; }
  std::size_t dvar(std::size_t t) const { return t * (p + 2) + p + 1; }
  std::size_t k(std::size_t l) const { return branches * (p + 2) + l; }
  std::size_t w(std::size_t l, std::size_t c) const { return k(leaves) + l * d + c; }
  std::size_t r(std::size_t i, std::size_t l) const { return w(leaves, 0) + i * leaves + l; }
  std::size_t y(std::size_t i, std::size_t l) const { return r(n, 0) + i * leaves + l; }
  std::size_t variable_count() const { return y(n, 0); }
  double xr(std::size_t i, std::size_t j) const { return x[i * p + j]; }
};

struct SpotMilp {
  MilpModel model;
  MilpLayout layout;
  Dataset data;  // training rows as given (unrounded)
};

inline double round_to_precision(double v, double precision) {
  return precision > 0.0 ? std::round(v / precision) * precision : v;
}

// Smallest nonzero gap between sorted values; 1 when all values coincide.
inline double smallest_gap(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double gap = kInf;
  for (std::size_t q = 1; q < v.size(); ++q)
    if (v[q] != v[q - 1]) gap = std::min(gap, v[q] - v[q - 1]);
  return std::isinf(gap) ? 1.0 : gap;
}

template <DecisionOracle O>
SpotMilp build_milp(const Dataset& train, const ExactConfig& cfg, const O& oracle) {
  cfg.validate();
  train.validate();
  require(!train.empty(), Errc::empty_input, "build_milp on an empty dataset");
  require_dims(train.decision_dim(), oracle.decision_dim(), "dataset vs oracle");

  MilpLayout lay;
  lay.depth = cfg.depth;
  lay.n = train.size();
  lay.p = train.feature_dim();
  lay.d = train.decision_dim();
  lay.leaves = std::size_t{1} << cfg.depth;
  lay.branches = lay.leaves - 1;
  lay.alpha = cfg.alpha;
  lay.min_leaf_weight = cfg.min_leaf_weight;
  lay.feature_precision = cfg.feature_precision;
  lay.x.resize(lay.n * lay.p);
  for (std::size_t j = 0; j < lay.p; ++j)
    require(train.kind(j) == FeatureKind::numeric, Errc::invalid_argument,
            "build_milp needs numeric features; binarize categorical ones");
  for (std::size_t i = 0; i < lay.n; ++i)
    for (std::size_t j = 0; j < lay.p; ++j) {
      const double v = train.feature(i, j);
      require(v >= 0.0 && v <= 1.0, Errc::invalid_argument, "build_milp needs features in [0,1]");
      lay.x[i * lay.p + j] = round_to_precision(v, cfg.feature_precision);
    }
  lay.epsilon.resize(lay.p);
  for (std::size_t j = 0; j < lay.p; ++j) {
    std::vector<double> col(lay.n);
    for (std::size_t i = 0; i < lay.n; ++i) col[i] = lay.xr(i, j);
    lay.epsilon[j] = smallest_gap(std::move(col));
  }
  lay.epsilon_max = *std::max_element(lay.epsilon.begin(), lay.epsilon.end());
  const ValueBounds vb = value_bounds(train, oracle);
  lay.m1 = vb.m1;
  lay.m2 = vb.m2;
  lay.z = optimal_values(train, oracle);

  const LinearRegion region = oracle.region();
  require(region.dim == lay.d, Errc::dimension_mismatch, "oracle region dimension");
  for (std::size_t c = 0; c < lay.d; ++c)
    require(std::isfinite(region.lower[c]), Errc::invalid_argument, "decision region needs finite lower bounds");

  const double total_w = train.total_weight();
  SpotMilp out{MilpModel{}, lay, train};
  MilpModel& m = out.model;
  m.name = "spotree";
  const std::string s = "_";
  auto num = [](std::size_t v) { return std::to_string(v); };

  for (std::size_t t = 0; t < lay.branches; ++t) {
    for (std::size_t j = 0; j < lay.p; ++j) m.add_variable("a_" + num(j) + s + num(t), VarKind::binary, 0, 1);
    m.add_variable("b_" + num(t), VarKind::continuous, 0.0, 1.0);
    m.add_variable("d_" + num(t), VarKind::binary, 0, 1, cfg.alpha);
  }
  for (std::size_t l = 0; l < lay.leaves; ++l) m.add_variable("k_" + num(l), VarKind::binary, 0, 1);
  const bool binary_w = region.integer;
  for (std::size_t l = 0; l < lay.leaves; ++l)
    for (std::size_t c = 0; c < lay.d; ++c) {
      const bool unit = region.lower[c] == 0.0 && region.upper[c] == 1.0;
      const VarKind kind = !binary_w ? VarKind::continuous : unit ? VarKind::binary : VarKind::integer;
      m.add_variable("w_" + num(l) + s + num(c), kind, region.lower[c], region.upper[c]);
    }
  for (std::size_t i = 0; i < lay.n; ++i)
    for (std::size_t l = 0; l < lay.leaves; ++l) m.add_variable("r_" + num(i) + s + num(l), VarKind::binary, 0, 1);
  for (std::size_t i = 0; i < lay.n; ++i)
    for (std::size_t l = 0; l < lay.leaves; ++l)
      m.add_variable("y_" + num(i) + s + num(l), VarKind::continuous, -kInf, kInf, train.weight(i) / total_w);
  double zsum = 0.0;
  for (std::size_t i = 0; i < lay.n; ++i) zsum += train.weight(i) * lay.z[i];
  m.objective_offset = -zsum / total_w;

  using Terms = std::vector<std::pair<std::size_t, double>>;
  for (std::size_t i = 0; i < lay.n; ++i) {
    Terms t;
    for (std::size_t l = 0; l < lay.leaves; ++l) t.emplace_back(lay.r(i, l), 1.0);
    m.add_constraint("assign_" + num(i), std::move(t), Sense::eq, 1.0);
  }
  for (std::size_t i = 0; i < lay.n; ++i)
    for (std::size_t l = 0; l < lay.leaves; ++l)
      m.add_constraint("active_" + num(i) + s + num(l), {{lay.r(i, l), 1.0}, {lay.k(l), -1.0}}, Sense::le, 0.0);
  for (std::size_t l = 0; l < lay.leaves; ++l) {
    Terms t;
    for (std::size_t i = 0; i < lay.n; ++i) t.emplace_back(lay.r(i, l), train.weight(i));
    t.emplace_back(lay.k(l), -cfg.min_leaf_weight);
    m.add_constraint("minleaf_" + num(l), std::move(t), Sense::ge, 0.0);
  }
  // Routing along each leaf's ancestor path.
  for (std::size_t l = 0; l < lay.leaves; ++l) {
    std::size_t node = lay.branches + l;
    while (node > 0) {
      const std::size_t parent = (node - 1) / 2;
      const bool right = node == 2 * parent + 2;
      for (std::size_t i = 0; i < lay.n; ++i) {
        Terms t;
        if (right) {
          for (std::size_t j = 0; j < lay.p; ++j) t.emplace_back(lay.a(j, parent), lay.xr(i, j));
          t.emplace_back(lay.b(parent), -1.0);
          t.emplace_back(lay.r(i, l), -1.0);
          m.add_constraint("right_" + num(i) + s + num(l) + s + num(parent), std::move(t), Sense::ge, -1.0);
        } else {
          for (std::size_t j = 0; j < lay.p; ++j)
            t.emplace_back(lay.a(j, parent), lay.xr(i, j) + lay.epsilon[j]);
          t.emplace_back(lay.b(parent), -1.0);
          t.emplace_back(lay.r(i, l), 1.0 + lay.epsilon_max);
          m.add_constraint("left_" + num(i) + s + num(l) + s + num(parent), std::move(t), Sense::le,
                           1.0 + lay.epsilon_max);
        }
      }
      node = parent;
    }
  }
  for (std::size_t t = 0; t < lay.branches; ++t) {
    Terms one;
    for (std::size_t j = 0; j < lay.p; ++j) one.emplace_back(lay.a(j, t), 1.0);
    one.emplace_back(lay.dvar(t), -1.0);
    m.add_constraint("onehot_" + num(t), std::move(one), Sense::eq, 0.0);
    m.add_constraint("inactive_" + num(t), {{lay.b(t), 1.0}, {lay.dvar(t), 1.0}}, Sense::ge, 1.0);
    if (t > 0)
      m.add_constraint("parent_" + num(t), {{lay.dvar(t), 1.0}, {lay.dvar((t - 1) / 2), -1.0}}, Sense::le, 0.0);
  }
  for (std::size_t i = 0; i < lay.n; ++i) {
    const auto c = train.costs(i);
    for (std::size_t l = 0; l < lay.leaves; ++l) {
      Terms t{{lay.y(i, l), 1.0}, {lay.r(i, l), -lay.m1}};
      for (std::size_t k = 0; k < lay.d; ++k) t.emplace_back(lay.w(l, k), -c[k]);
      m.add_constraint("ylin_" + num(i) + s + num(l), std::move(t), Sense::ge, -lay.m1);
      m.add_constraint("ylow_" + num(i) + s + num(l), {{lay.y(i, l), 1.0}, {lay.r(i, l), lay.m2}}, Sense::ge, 0.0);
    }
  }
  for (std::size_t i = 0; i < lay.n; ++i) {
    Terms t;
    for (std::size_t l = 0; l < lay.leaves; ++l) t.emplace_back(lay.y(i, l), 1.0);
    m.add_constraint("lbound_" + num(i), std::move(t), Sense::ge, lay.z[i]);
  }
  for (std::size_t l = 0; l < lay.leaves; ++l)
    for (std::size_t q = 0; q < region.rows.size(); ++q) {
      Terms t;
      for (std::size_t k = 0; k < lay.d; ++k) t.emplace_back(lay.w(l, k), region.rows[q].coef[k]);
      m.add_constraint("region_" + num(l) + s + num(q), std::move(t), region.rows[q].sense, region.rows[q].rhs);
    }
  return out;
}

// Variable assignment that encodes `tree` (routing rows exactly as the tree
// does on the unrounded features).
inline std::vector<double> warm_start(const SpotMilp& milp, const Tree& tree) {
  const MilpLayout& lay = milp.layout;
  const Dataset& data = milp.data;
  require_dims(tree.feature_dim(), lay.p, "warm_start tree features");
  require_dims(tree.decision_dim(), lay.d, "warm_start tree decisions");
  require(tree.depth() <= lay.depth, Errc::invalid_argument,
          "tree depth " + std::to_string(tree.depth()) + " exceeds model depth " + std::to_string(lay.depth));
  std::vector<double> v(lay.variable_count(), 0.0);
  for (std::size_t t = 0; t < lay.branches; ++t) v[lay.b(t)] = 1.0;

  // Heap position of each tree node and the rows reaching it.
  const auto& nodes = tree.nodes();
  std::vector<std::size_t> leaf_of_row(lay.n);
  std::vector<int> tree_node_of_leaf(lay.leaves, -1);
  struct Frame {
    int node;
    std::size_t heap;
    std::vector<std::size_t> rows;
  };
  std::vector<Frame> stack{{0, 0, data.all_rows()}};
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    const TreeNode& n = nodes[f.node];
    if (n.is_leaf()) {
      std::size_t heap = f.heap;
      while (heap < lay.branches) heap = 2 * heap + 1;  // pooled: rows run down the left spine
      const std::size_t l = heap - lay.branches;
      tree_node_of_leaf[l] = f.node;
      for (std::size_t i : f.rows) leaf_of_row[i] = l;
      continue;
    }
    require(f.heap < lay.branches, Errc::invalid_argument, "tree is deeper than the model");
    require(n.split->kind == SplitKind::numeric, Errc::invalid_argument, "categorical splits cannot be encoded");
    const std::size_t j = n.split->feature;
    auto [left, right] = detail::partition_rows(data, f.rows, *n.split);
    double b = 1.0;
    for (std::size_t i : right) b = std::min(b, lay.xr(i, j));
    for (std::size_t i : left)
      require(lay.xr(i, j) + lay.epsilon[j] <= b + 1e-9, Errc::invalid_argument,
              "split on x" + std::to_string(j) + " is not representable after feature rounding");
    v[lay.a(j, f.heap)] = 1.0;
    v[lay.dvar(f.heap)] = 1.0;
    v[lay.b(f.heap)] = b;
    stack.push_back({n.right, 2 * f.heap + 2, std::move(right)});
    stack.push_back({n.left, 2 * f.heap + 1, std::move(left)});
  }

  std::vector<double> leaf_weight(lay.leaves, 0.0);
  for (std::size_t i = 0; i < lay.n; ++i) leaf_weight[leaf_of_row[i]] += data.weight(i);
  for (std::size_t l = 0; l < lay.leaves; ++l) {
    if (leaf_weight[l] > 0.0) {
      require(leaf_weight[l] >= lay.min_leaf_weight, Errc::invalid_argument,
              "leaf weight " + std::to_string(leaf_weight[l]) + " is below the model's minimum leaf weight");
      v[lay.k(l)] = 1.0;
    }
    const int tn = tree_node_of_leaf[l] >= 0 ? tree_node_of_leaf[l] : 0;
    const auto& w = nodes[tn].decision.w;
    for (std::size_t c = 0; c < lay.d; ++c) v[lay.w(l, c)] = w[c];
  }
  for (std::size_t i = 0; i < lay.n; ++i) {
    const std::size_t l = leaf_of_row[i];
    v[lay.r(i, l)] = 1.0;
    const auto c = data.costs(i);
    double cw = 0.0;
    for (std::size_t k = 0; k < lay.d; ++k) cw += c[k] * v[lay.w(l, k)];
    v[lay.y(i, l)] = cw;
  }
  return v;
}

// Tree read off a feasible assignment. Active branch t splits on
// argmax_j a_jt at b_t - eps_j / 2; leaf statistics come from the r
// assignment; branches with an empty side collapse onto the other side.
template <DecisionOracle O>
Tree decode_solution(const SpotMilp& milp, std::span<const double> values, const O& oracle, double tol = 1e-6) {
  const MilpLayout& lay = milp.layout;
  const auto bad = check_feasibility(milp.model, values, tol);
  if (!bad.empty()) {
    std::string msg = "assignment violates " + std::to_string(bad.size()) + " constraint(s):";
    for (std::size_t q = 0; q < std::min<std::size_t>(bad.size(), 5); ++q) msg += " " + bad[q];
    throw Error(Errc::infeasible, msg);
  }
  std::vector<std::vector<std::size_t>> leaf_rows(lay.leaves);
  for (std::size_t i = 0; i < lay.n; ++i)
    for (std::size_t l = 0; l < lay.leaves; ++l)
      if (values[lay.r(i, l)] > 0.5) leaf_rows[l].push_back(i);

  auto rows_under = [&](std::size_t heap) {
    std::size_t lo = heap, hi = heap;
    while (lo < lay.branches) {
      lo = 2 * lo + 1;
      hi = 2 * hi + 2;
    }
    std::vector<std::size_t> rows;
    for (std::size_t h = lo; h <= hi; ++h)
      rows.insert(rows.end(), leaf_rows[h - lay.branches].begin(), leaf_rows[h - lay.branches].end());
    std::sort(rows.begin(), rows.end());
    return rows;
  };

  const detail::TrainingContext<O> ctx(milp.data, oracle);
  Tree tree(lay.p, lay.d, LossKind::spo);
  auto build = [&](auto&& self, std::size_t heap, int depth) -> int {
    const auto rows = rows_under(heap);
    const bool active = heap < lay.branches && values[lay.dvar(heap)] > 0.5;
    if (active) {
      const bool left_empty = rows_under(2 * heap + 1).empty();
      const bool right_empty = rows_under(2 * heap + 2).empty();
      if (left_empty != right_empty) return self(self, left_empty ? 2 * heap + 2 : 2 * heap + 1, depth);
      if (!left_empty) {
        std::size_t j = 0;
        for (std::size_t q = 1; q < lay.p; ++q)
          if (values[lay.a(q, heap)] > values[lay.a(j, heap)]) j = q;
        TreeNode node = detail::make_node(ctx, rows, LossKind::spo, depth);
        node.split = SplitRule{j, SplitKind::numeric, values[lay.b(heap)] - 0.5 * lay.epsilon[j]};
        const int idx = tree.add_node(std::move(node));
        const int l = self(self, 2 * heap + 1, depth + 1);
        const int r = self(self, 2 * heap + 2, depth + 1);
        tree.nodes()[idx].left = l;
        tree.nodes()[idx].right = r;
        return idx;
      }
    }
    require(!rows.empty(), Errc::infeasible, "decoded tree has no rows at the root");
    return tree.add_node(detail::make_node(ctx, rows, LossKind::spo, depth));
  };
  build(build, 0, 0);
  return tree;
}

// ---- exhaustive search ------------------------------------------------------

namespace detail {

struct ExactPlan {
  double cost = 0.0;  // weighted loss plus alpha * W per split
  std::optional<SplitRule> split;
  std::unique_ptr<ExactPlan> left, right;
};

template <DecisionOracle O>
ExactPlan exact_search(const TrainingContext<O>& ctx, const std::vector<std::size_t>& rows, int depth_left,
                       const ExactConfig& cfg, double split_penalty) {
  ExactPlan best;
  best.cost = fit_node(ctx.moments(rows), LossKind::spo, ctx.oracle).loss;
  const Moments total = ctx.moments(rows);
  if (depth_left == 0 || total.weight < 2.0 * cfg.min_leaf_weight) return best;
  std::vector<std::size_t> features(ctx.data.feature_dim());
  std::iota(features.begin(), features.end(), std::size_t{0});
  for_each_split(ctx, rows, features, cfg.quantiles, [&](const SplitRule& rule, const Moments& l, const Moments& r) {
    if (l.weight < cfg.min_leaf_weight || r.weight < cfg.min_leaf_weight) return;
    if (depth_left == 1) {
      const double c = node_loss(l, LossKind::spo, ctx.oracle) + node_loss(r, LossKind::spo, ctx.oracle) +
                       split_penalty;
      if (c < best.cost) {
        best.cost = c;
        best.split = rule;
        best.left.reset();
        best.right.reset();
      }
      return;
    }
    auto [lr, rr] = partition_rows(ctx.data, rows, rule);
    ExactPlan lp = exact_search(ctx, lr, depth_left - 1, cfg, split_penalty);
    if (lp.cost + split_penalty >= best.cost) return;
    ExactPlan rp = exact_search(ctx, rr, depth_left - 1, cfg, split_penalty);
    const double c = lp.cost + rp.cost + split_penalty;
    if (c < best.cost) {
      best.cost = c;
      best.split = rule;
      best.left = std::make_unique<ExactPlan>(std::move(lp));
      best.right = std::make_unique<ExactPlan>(std::move(rp));
    }
  });
  return best;
}

template <DecisionOracle O>
int materialize(Tree& tree, const TrainingContext<O>& ctx, const ExactPlan& plan, const std::vector<std::size_t>& rows,
                int depth) {
  TreeNode node = make_node(ctx, rows, LossKind::spo, depth);
  node.split = plan.split;
  const int idx = tree.add_node(std::move(node));
  if (!plan.split) return idx;
  auto [lr, rr] = partition_rows(ctx.data, rows, *plan.split);
  static const ExactPlan leaf;
  const int l = materialize(tree, ctx, plan.left ? *plan.left : leaf, lr, depth + 1);
  const int r = materialize(tree, ctx, plan.right ? *plan.right : leaf, rr, depth + 1);
  tree.nodes()[idx].left = l;
  tree.nodes()[idx].right = r;
  return idx;
}

}  // namespace detail

// Number of candidate splits at the root and the resulting enumeration size
// (#candidates)^(2^H - 1), saturated at the limit + 1.
template <DecisionOracle O>
std::pair<std::size_t, std::uint64_t> exact_search_size(const Dataset& train, const ExactConfig& cfg,
                                                        const O& oracle) {
  const detail::TrainingContext<O> ctx(train, oracle);
  const auto rows = train.all_rows();
  std::vector<std::size_t> features(train.feature_dim());
  std::iota(features.begin(), features.end(), std::size_t{0});
  std::size_t count = 0;
  detail::for_each_split(ctx, rows, features, cfg.quantiles,
                         [&](const SplitRule&, const detail::Moments&, const detail::Moments&) { ++count; });
  const std::uint64_t cap = cfg.enumeration_limit + 1;
  std::uint64_t size = 1;
  const std::uint64_t branches = (std::uint64_t{1} << cfg.depth) - 1;
  for (std::uint64_t b = 0; b < branches && count > 0; ++b)
    size = size > cap / count ? cap : std::min<std::uint64_t>(cap, size * count);
  return {count, size};
}

// Optimal depth-<=H tree over the greedy candidate thresholds, minimizing
// total training SPO loss + alpha * W * splits subject to min_leaf_weight.
// Ties prefer fewer splits, then the first split in (feature, threshold) order.
template <DecisionOracle O>
Tree exhaustive_exact(const Dataset& train, const ExactConfig& cfg, const O& oracle) {
  cfg.validate();
  train.validate();
  require(!train.empty(), Errc::empty_input, "exhaustive_exact on an empty dataset");
  require_dims(train.decision_dim(), oracle.decision_dim(), "dataset vs oracle");
  require(train.total_weight() >= cfg.min_leaf_weight, Errc::invalid_argument,
          "training weight is below min_leaf_weight");
  const auto [count, size] = exact_search_size(train, cfg, oracle);
  require(size <= cfg.enumeration_limit, Errc::too_large,
          "exhaustive search over " + std::to_string(count) + " candidate splits at depth " +
              std::to_string(cfg.depth) + " exceeds the enumeration limit");
  const detail::TrainingContext<O> ctx(train, oracle);
  const auto rows = train.all_rows();
  const double penalty = cfg.alpha * train.total_weight();
  const detail::ExactPlan plan = detail::exact_search(ctx, rows, cfg.depth, cfg, penalty);
  Tree tree(train.feature_dim(), train.decision_dim(), LossKind::spo);
  detail::materialize(tree, ctx, plan, rows, 0);
  return tree;
}

}  // namespace spotree
