#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "spotree/datagen.hpp"
#include "spotree/exact.hpp"
#include "reference.hpp"

using namespace spotree;

namespace {

// Features on the 0.01 grid in [0,1]; three options whose best one depends
// on the features.
Dataset choice_data(std::size_t n, std::size_t p, std::uint64_t seed, double noise = 0.3) {
  Rng r(seed);
  Dataset data(p, 3);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(p);
    for (double& v : x) v = static_cast<double>(r.below(101)) / 100.0;
    const double a = x[0], b = p > 1 ? x[1] : 0.5;
    std::vector<double> c{1.0 + 2.0 * a, 3.0 - 2.0 * a + b, 1.5 + std::sin(6.0 * b)};
    for (double& v : c) v *= r.uniform(1.0 - noise, 1.0 + noise);
    data.add(x, c);
  }
  return data;
}

ExactConfig exact_config(int depth, double min_leaf) {
  ExactConfig cfg;
  cfg.depth = depth;
  cfg.min_leaf_weight = min_leaf;
  return cfg;
}

GreedyConfig greedy_config(int depth, double min_leaf) {
  GreedyConfig cfg;
  cfg.max_depth = depth;
  cfg.min_leaf_weight = min_leaf;
  return cfg;
}

std::string to_mps(const MilpModel& m) {
  std::ostringstream ss;
  write_mps(m, ss);
  return ss.str();
}

// Depth-first branch and bound over the LP relaxation, for tiny models only.
void branch_and_bound(const MilpModel& m, std::vector<double> lo, std::vector<double> hi, double& best) {
  LinearProgram lp;
  for (std::size_t v = 0; v < m.variables.size(); ++v) lp.add_var(m.variables[v].cost, lo[v], hi[v]);
  for (const auto& c : m.constraints) lp.add_row(c.terms, c.sense, c.rhs);
  const LpResult res = solve_lp(lp);
  if (res.status != LpStatus::optimal) return;
  if (res.objective + m.objective_offset >= best - 1e-9) return;
  std::size_t pick = m.variables.size();
  double frac = 1e-7;
  for (std::size_t v = 0; v < m.variables.size(); ++v) {
    if (m.variables[v].kind == VarKind::continuous) continue;
    const double f = std::abs(res.x[v] - std::round(res.x[v]));
    if (f > frac) {
      frac = f;
      pick = v;
    }
  }
  if (pick == m.variables.size()) {
    best = res.objective + m.objective_offset;
    return;
  }
  auto hi_down = hi;
  hi_down[pick] = std::floor(res.x[pick]);
  auto lo_up = lo;
  lo_up[pick] = std::ceil(res.x[pick]);
  branch_and_bound(m, lo, hi_down, best);
  branch_and_bound(m, lo_up, hi, best);
}

double milp_optimum(const MilpModel& m) {
  std::vector<double> lo, hi;
  for (const auto& v : m.variables) {
    lo.push_back(v.lower);
    hi.push_back(v.upper);
  }
  double best = kInf;
  branch_and_bound(m, lo, hi, best);
  return best;
}

}  // namespace

TEST(MilpBuild, VariableCounts) {
  const Dataset data = choice_data(4, 1, 1);
  const auto milp = build_milp(data, exact_config(1, 1), ChoiceOracle(3));
  std::size_t r = 0, y = 0;
  for (const auto& v : milp.model.variables) {
    r += v.name.starts_with("r_");
    y += v.name.starts_with("y_");
  }
  EXPECT_EQ(r, 8u);
  EXPECT_EQ(y, 8u);
  EXPECT_EQ(milp.model.variables.size(), milp.layout.variable_count());
  EXPECT_EQ(milp.model.index_of("r_3_1"), milp.layout.r(3, 1));
  EXPECT_EQ(milp.model.index_of("a_0_0"), milp.layout.a(0, 0));
  EXPECT_EQ(milp.model.index_of("w_1_2"), milp.layout.w(1, 2));
}

TEST(MilpBuild, BigMValues) {
  const Dataset data = choice_data(30, 2, 2);
  const auto milp = build_milp(data, exact_config(2, 5), ChoiceOracle(3));
  double max_cost = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    for (double c : data.costs(i)) max_cost = std::max(max_cost, c);
  EXPECT_DOUBLE_EQ(milp.layout.m1, max_cost);
  EXPECT_EQ(milp.layout.m2, 0.0);
}

TEST(MilpBuild, EpsilonIsSmallestGap) {
  Dataset data(2, 3);
  for (double x : {0.1, 0.15, 0.4, 0.4, 0.9}) data.add(std::vector<double>{x, 0.3}, std::vector<double>{1, 2, 3});
  ExactConfig cfg = exact_config(1, 1);
  cfg.feature_precision = 0.0;
  const auto milp = build_milp(data, cfg, ChoiceOracle(3));
  EXPECT_NEAR(milp.layout.epsilon[0], 0.05, 1e-12);
  EXPECT_EQ(milp.layout.epsilon[1], 1.0);
  EXPECT_NEAR(milp.layout.epsilon_max, 1.0, 1e-12);
}

TEST(MilpBuild, RejectsUnsupportedInput) {
  Dataset data = choice_data(10, 1, 3);
  data.mutable_features(0)[0] = 1.5;
  EXPECT_THROW(build_milp(data, exact_config(1, 1), ChoiceOracle(3)), Error);
  Dataset cat = choice_data(10, 1, 3);
  cat.set_kind(0, FeatureKind::categorical);
  EXPECT_THROW(build_milp(cat, exact_config(1, 1), ChoiceOracle(3)), Error);
  EXPECT_THROW(build_milp(choice_data(10, 1, 3), exact_config(0, 1), ChoiceOracle(3)), Error);
}

TEST(WarmStart, SingleLeafTree) {
  const Dataset data = choice_data(20, 2, 4);
  const ChoiceOracle oracle(3);
  const auto milp = build_milp(data, exact_config(2, 5), oracle);
  const Tree leaf = train_greedy(data, greedy_config(0, 5), oracle);
  const auto v = warm_start(milp, leaf);
  for (std::size_t t = 0; t < milp.layout.branches; ++t) {
    EXPECT_EQ(v[milp.layout.dvar(t)], 0.0);
    EXPECT_EQ(v[milp.layout.b(t)], 1.0);
  }
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(v[milp.layout.r(i, 0)], 1.0);
  EXPECT_TRUE(check_feasibility(milp.model, v).empty());
  EXPECT_NEAR(objective_value(milp.model, v), leaf.training_loss(), 1e-9);
}

TEST(WarmStart, GreedyTreesAreFeasibleWithMatchingObjective) {
  const ChoiceOracle oracle(3);
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    for (int depth : {1, 2, 3}) {
      const Dataset data = choice_data(80, 3, 10 + seed);
      const Tree tree = train_greedy(data, greedy_config(depth, 5), oracle);
      const auto milp = build_milp(data, exact_config(depth, 5), oracle);
      const auto v = warm_start(milp, tree);
      const auto bad = check_feasibility(milp.model, v, 1e-9);
      EXPECT_TRUE(bad.empty()) << (bad.empty() ? "" : bad.front());
      EXPECT_NEAR(objective_value(milp.model, v), tree.training_loss(), 1e-9);
      for (std::size_t i = 0; i < data.size(); ++i) {
        double ysum = 0.0;
        for (std::size_t l = 0; l < milp.layout.leaves; ++l) ysum += v[milp.layout.y(i, l)];
        EXPECT_GE(ysum, milp.layout.z[i] - 1e-9);
      }
    }
}

TEST(WarmStart, SplitPenaltyEntersTheObjective) {
  const ChoiceOracle oracle(3);
  const Dataset data = choice_data(60, 2, 21);
  const Tree tree = train_greedy(data, greedy_config(2, 5), oracle);
  ExactConfig cfg = exact_config(2, 5);
  cfg.alpha = 0.01;
  const auto milp = build_milp(data, cfg, oracle);
  const auto v = warm_start(milp, tree);
  EXPECT_NEAR(objective_value(milp.model, v), tree.training_loss() + 0.01 * static_cast<double>(tree.split_count()),
              1e-9);
}

TEST(WarmStart, RejectsDeeperTrees) {
  const ChoiceOracle oracle(3);
  const Dataset data = choice_data(100, 2, 5);
  const Tree tree = train_greedy(data, greedy_config(3, 5), oracle);
  ASSERT_GT(tree.depth(), 1);
  const auto milp = build_milp(data, exact_config(1, 5), oracle);
  EXPECT_THROW(warm_start(milp, tree), Error);
}

TEST(MpsExport, DeterministicAndReparsable) {
  const ChoiceOracle oracle(3);
  const Dataset data = choice_data(15, 2, 6);
  const auto a = build_milp(data, exact_config(2, 3), oracle);
  const auto b = build_milp(data, exact_config(2, 3), oracle);
  const std::string text = to_mps(a.model);
  EXPECT_EQ(text, to_mps(b.model));
  std::istringstream in(text);
  const MilpModel back = read_mps(in);
  EXPECT_TRUE(same_model(a.model, back));
  EXPECT_EQ(to_mps(back), text);
  EXPECT_NE(text.find("INTORG"), std::string::npos);
  EXPECT_NE(text.find("ENDATA"), std::string::npos);

  const auto path = std::filesystem::temp_directory_path() / "spotree_model.mps";
  export_model(a.model, path.string());
  EXPECT_TRUE(same_model(load_mps(path.string()), a.model));
  std::filesystem::remove(path);
}

TEST(MpsExport, ContinuousRegionAndOffset) {
  const PolytopeLpOracle oracle(3, {{{1.0, 0.0, 0.0}, 0.6}});
  const Dataset data = choice_data(10, 1, 7);
  const auto milp = build_milp(data, exact_config(1, 2), oracle);
  EXPECT_EQ(milp.model.variables[milp.layout.w(0, 0)].kind, VarKind::continuous);
  std::istringstream in(to_mps(milp.model));
  const MilpModel back = read_mps(in);
  EXPECT_TRUE(same_model(milp.model, back));
  EXPECT_EQ(back.objective_offset, milp.model.objective_offset);
}

TEST(MpsExport, RejectsMalformedFiles) {
  std::istringstream missing_end("NAME x\nROWS\n N obj\nCOLUMNS\n");
  EXPECT_THROW(read_mps(missing_end), Error);
  std::istringstream bad_row("NAME x\nROWS\n Q r1\nENDATA\n");
  EXPECT_THROW(read_mps(bad_row), Error);
}

TEST(Solution, RoundTrip) {
  const ChoiceOracle oracle(3);
  const Dataset data = choice_data(12, 1, 8);
  const auto milp = build_milp(data, exact_config(1, 3), oracle);
  const Tree tree = train_greedy(data, greedy_config(1, 3), oracle);
  const auto v = warm_start(milp, tree);
  std::stringstream ss;
  write_solution(milp.model, v, ss);
  EXPECT_EQ(read_solution(milp.model, ss), v);
  std::istringstream unknown("zz_9 1\n");
  EXPECT_THROW(read_solution(milp.model, unknown), Error);
}

TEST(Decode, AllInactiveIsOneLeaf) {
  const ChoiceOracle oracle(3);
  const Dataset data = choice_data(20, 2, 9);
  const auto milp = build_milp(data, exact_config(2, 5), oracle);
  const auto v = warm_start(milp, train_greedy(data, greedy_config(0, 5), oracle));
  const Tree tree = decode_solution(milp, v, oracle);
  EXPECT_EQ(tree.leaf_count(), 1u);
}

TEST(Decode, WarmStartRoundTripKeepsRouting) {
  const ChoiceOracle oracle(3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset data = choice_data(80, 3, 30 + seed);
    const Tree tree = train_greedy(data, greedy_config(2, 5), oracle);
    const auto milp = build_milp(data, exact_config(2, 5), oracle);
    const Tree back = decode_solution(milp, warm_start(milp, tree), oracle);
    EXPECT_EQ(back.leaf_count(), tree.leaf_count());
    EXPECT_NEAR(back.training_loss(), tree.training_loss(), 1e-12);
    for (std::size_t i = 0; i < data.size(); ++i)
      EXPECT_EQ(back.leaf_for(data.features(i)).mean_cost, tree.leaf_for(data.features(i)).mean_cost);
  }
}

TEST(Decode, ThresholdSitsBelowTheSplitPoint) {
  Dataset data(1, 2);
  for (double x : {0.1, 0.2, 0.3, 0.5, 0.6, 0.7}) {
    const std::vector<double> c = x < 0.4 ? std::vector<double>{1, 2} : std::vector<double>{2, 1};
    data.add(std::span<const double>(&x, 1), c);
  }
  const ChoiceOracle oracle(2);
  const auto milp = build_milp(data, exact_config(1, 1), oracle);
  auto v = warm_start(milp, train_greedy(data, greedy_config(1, 1), oracle));
  ASSERT_EQ(v[milp.layout.dvar(0)], 1.0);
  EXPECT_NEAR(v[milp.layout.b(0)], 0.5, 1e-12);
  const Tree tree = decode_solution(milp, v, oracle);
  const double s = tree.root().split->value;
  EXPECT_GE(s, 0.5 - milp.layout.epsilon[0] - 1e-12);
  EXPECT_LT(s, 0.5);
  const double at_b = 0.5;
  EXPECT_EQ(tree.predict(std::span<const double>(&at_b, 1)).second.w, (std::vector<double>{0, 1}));
}

TEST(Decode, InfeasibleAssignmentThrows) {
  const ChoiceOracle oracle(3);
  const Dataset data = choice_data(20, 1, 10);
  const auto milp = build_milp(data, exact_config(1, 5), oracle);
  auto v = warm_start(milp, train_greedy(data, greedy_config(1, 5), oracle));
  v[milp.layout.r(0, 0)] = 1.0;
  v[milp.layout.r(0, 1)] = 1.0;
  try {
    decode_solution(milp, v, oracle);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::infeasible);
  }
}

TEST(Exhaustive, NeverWorseThanGreedy) {
  const ChoiceOracle oracle(3);
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    for (int depth : {1, 2}) {
      const Dataset data = choice_data(60, 2, 40 + seed);
      ExactConfig cfg = exact_config(depth, 5);
      const Tree exact = exhaustive_exact(data, cfg, oracle);
      const Tree greedy = train_greedy(data, greedy_config(depth, 5), oracle);
      EXPECT_LE(exact.training_loss(), greedy.training_loss() + 1e-12);
      EXPECT_LE(exact.depth(), depth);
      for (const auto& n : exact.nodes())
        if (n.is_leaf()) {
        EXPECT_GE(n.weight, 5.0);
      }
    }
}

TEST(Exhaustive, DepthOneMatchesGreedyOnTwoEdge) {
  const Dataset data = gen_two_edge({2000, 0.0, 3});
  ExactConfig cfg = exact_config(1, 20);
  const Tree exact = exhaustive_exact(data, cfg, ChoiceOracle(2));
  const Tree greedy = train_greedy(data, greedy_config(1, 20), ChoiceOracle(2));
  ASSERT_EQ(exact.leaf_count(), 2u);
  EXPECT_EQ(exact.root().split, greedy.root().split);
}

TEST(Exhaustive, MatchesBruteForceAtDepthTwo) {
  const ChoiceOracle oracle(3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset data = choice_data(20, 2, 50 + seed);
    const Tree exact = exhaustive_exact(data, exact_config(2, 3), oracle);
    EXPECT_NEAR(exact.training_loss() * data.total_weight(), reference::best_tree_loss(data, data.all_rows(), 2, 3, reference::cheapest_option), 1e-9);
  }
}

TEST(Exhaustive, RefusesOversizedSearches) {
  const ChoiceOracle oracle(3);
  const Dataset data = choice_data(400, 5, 11);
  ExactConfig cfg = exact_config(3, 5);
  EXPECT_GT(exact_search_size(data, cfg, oracle).second, cfg.enumeration_limit);
  try {
    exhaustive_exact(data, cfg, oracle);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::too_large);
  }
}

// The exported model solved by a small branch and bound agrees with the
// exhaustive search when every gap is a candidate threshold.
TEST(Exhaustive, AgreesWithTheMilpOptimum) {
  const ChoiceOracle oracle(2);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng r(seed);
    Dataset data(1, 2);
    for (int i = 0; i < 7; ++i) {
      const double x = (i + 1) / 10.0;
      data.add(std::span<const double>(&x, 1), std::vector<double>{r.uniform(0, 2), r.uniform(0, 2)});
    }
    const ExactConfig cfg = exact_config(1, 2);
    const double milp = milp_optimum(build_milp(data, cfg, oracle).model);
    EXPECT_NEAR(milp, exhaustive_exact(data, cfg, oracle).training_loss(), 1e-7);
  }
}
