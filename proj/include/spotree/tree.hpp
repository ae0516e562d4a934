#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spotree/core.hpp"

namespace spotree {

enum class LossKind { spo, mse };

inline std::string_view to_string(LossKind k) { return k == LossKind::spo ? "spo" : "mse"; }

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "spo") return LossKind::spo;
  if (s == "mse") return LossKind::mse;
  throw Error(Errc::invalid_argument, "unknown loss '" + std::string(s) + "' (expected spo or mse)");
}

enum class SplitKind { numeric, categorical };

// Numeric: x_j <= value goes left. Categorical: x_j == value goes left.
struct SplitRule {
  std::size_t feature = 0;
  SplitKind kind = SplitKind::numeric;
  double value = 0.0;

  bool goes_left(std::span<const double> x) const {
    return kind == SplitKind::numeric ? x[feature] <= value : x[feature] == value;
  }
  bool operator==(const SplitRule&) const = default;
};

// Every node, internal or not, carries the statistics it would have as a
// leaf; pruning collapses internal nodes onto them.
struct TreeNode {
  std::optional<SplitRule> split;
  int left = -1;
  int right = -1;
  CostVector mean_cost;
  Decision decision;
  double weight = 0.0;  // training weight reaching the node
  double loss = 0.0;    // weighted training loss if the node were a leaf
  int depth = 0;

  bool is_leaf() const { return !split.has_value(); }
};

class Tree {
 public:
  Tree() = default;
  Tree(std::size_t feature_dim, std::size_t decision_dim, LossKind loss)
      : p_(feature_dim), d_(decision_dim), loss_(loss) {}

  std::size_t feature_dim() const { return p_; }
  std::size_t decision_dim() const { return d_; }
  LossKind loss_kind() const { return loss_; }

  std::vector<TreeNode>& nodes() { return nodes_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& root() const { return nodes_.at(0); }

  int add_node(TreeNode node) {
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int leaf_index(std::span<const double> x) const {
    require_dims(x.size(), p_, "Tree::predict features");
    int idx = 0;
    while (!nodes_[idx].is_leaf()) {
      const TreeNode& n = nodes_[idx];
      idx = n.split->goes_left(x) ? n.left : n.right;
    }
    return idx;
  }

  const TreeNode& leaf_for(std::span<const double> x) const { return nodes_[leaf_index(x)]; }

  std::pair<CostVector, Decision> predict(std::span<const double> x) const {
    const TreeNode& leaf = leaf_for(x);
    return {leaf.mean_cost, leaf.decision};
  }

  std::size_t leaf_count() const {
    std::size_t n = 0;
    for (const auto& node : nodes_) n += node.is_leaf();
    return n;
  }

  std::size_t split_count() const { return nodes_.size() - leaf_count(); }

  int depth() const {
    int d = 0;
    for (const auto& node : nodes_)
      if (node.is_leaf()) d = std::max(d, node.depth);
    return d;
  }

  // Sum of leaf losses divided by the root's weight.
  double training_loss() const {
    double s = 0.0;
    for (const auto& node : nodes_)
      if (node.is_leaf()) s += node.loss;
    return s / root().weight;
  }

 private:
  std::size_t p_ = 0;
  std::size_t d_ = 0;
  LossKind loss_ = LossKind::spo;
  std::vector<TreeNode> nodes_;
};

// ---- serialization --------------------------------------------------------
//
// {"format": "spotree-tree", "version": 1, "feature_dim", "decision_dim",
//  "loss", "root": node}, where node is
//   {"kind": "leaf", stats...} or
//   {"kind": "split", "split_kind": "numeric"|"categorical", "feature_index",
//    "threshold", "left": node, "right": node, stats...}
// and stats = mean_cost, decision, objective_value, weight, loss, depth.
// Doubles are written in shortest round-trip form.

inline nlohmann::json node_to_json(const Tree& tree, int idx) {
  const TreeNode& n = tree.nodes()[idx];
  nlohmann::json j;
  if (n.is_leaf()) {
    j["kind"] = "leaf";
  } else {
    j["kind"] = "split";
    j["split_kind"] = n.split->kind == SplitKind::numeric ? "numeric" : "categorical";
    j["feature_index"] = n.split->feature;
    j["threshold"] = n.split->value;
  }
  j["mean_cost"] = n.mean_cost;
  j["decision"] = n.decision.w;
  j["objective_value"] = n.decision.objective_value;
  j["weight"] = n.weight;
  j["loss"] = n.loss;
  j["depth"] = n.depth;
  if (!n.is_leaf()) {
    j["left"] = node_to_json(tree, n.left);
    j["right"] = node_to_json(tree, n.right);
  }
  return j;
}

inline nlohmann::json to_json(const Tree& tree) {
  nlohmann::json j;
  j["format"] = "spotree-tree";
  j["version"] = 1;
  j["feature_dim"] = tree.feature_dim();
  j["decision_dim"] = tree.decision_dim();
  j["loss"] = std::string(to_string(tree.loss_kind()));
  j["root"] = node_to_json(tree, 0);
  return j;
}

namespace detail {

inline int node_from_json(Tree& tree, const nlohmann::json& j) {
  TreeNode n;
  n.mean_cost = j.at("mean_cost").get<std::vector<double>>();
  n.decision.w = j.at("decision").get<std::vector<double>>();
  n.decision.objective_value = j.at("objective_value").get<double>();
  n.weight = j.at("weight").get<double>();
  n.loss = j.at("loss").get<double>();
  n.depth = j.at("depth").get<int>();
  require_dims(n.mean_cost.size(), tree.decision_dim(), "tree node mean_cost");
  require_dims(n.decision.w.size(), tree.decision_dim(), "tree node decision");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "leaf") return tree.add_node(std::move(n));
  require(kind == "split", Errc::parse_error, "unknown node kind '" + kind + "'");
  SplitRule rule;
  rule.feature = j.at("feature_index").get<std::size_t>();
  require(rule.feature < tree.feature_dim(), Errc::parse_error, "split feature index out of range");
  const std::string sk = j.at("split_kind").get<std::string>();
  require(sk == "numeric" || sk == "categorical", Errc::parse_error, "unknown split kind '" + sk + "'");
  rule.kind = sk == "numeric" ? SplitKind::numeric : SplitKind::categorical;
  rule.value = j.at("threshold").get<double>();
  n.split = rule;
  const int idx = tree.add_node(std::move(n));
  const int l = node_from_json(tree, j.at("left"));
  const int r = node_from_json(tree, j.at("right"));
  tree.nodes()[idx].left = l;
  tree.nodes()[idx].right = r;
  return idx;
}

}  // namespace detail

inline Tree tree_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format") == "spotree-tree", Errc::parse_error, "not a spotree tree document");
    Tree tree(j.at("feature_dim").get<std::size_t>(), j.at("decision_dim").get<std::size_t>(),
              parse_loss_kind(j.at("loss").get<std::string>()));
    detail::node_from_json(tree, j.at("root"));
    return tree;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("tree json: ") + e.what());
  }
}

inline void save_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  require(bool(out), Errc::io_error, "cannot write " + path);
  out << j.dump(1) << '\n';
  require(bool(out), Errc::io_error, "write failed for " + path);
}

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), Errc::io_error, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, path + ": " + e.what());
  }
}

inline void save_tree(const Tree& tree, const std::string& path) { save_json(to_json(tree), path); }
inline Tree load_tree(const std::string& path) { return tree_from_json(load_json(path)); }

}  // namespace spotree
