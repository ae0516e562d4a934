// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "spotree/spotree.hpp"
#include "reference.hpp"

using namespace spotree;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void criterion(const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (secs > limit_s) {
    out.pass = false;
    out.detail += fmt(" [over the %.0f s limit]", limit_s);
  }
  if (!out.pass) ++failures;
  std::printf("%s  %-28s %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", name.c_str(), out.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Features on the 0.01 grid, three options whose best one depends on x.
Dataset choice_data(std::size_t n, std::size_t p, Rng& r, bool weighted) {
  Dataset data(p, 3);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(p);
    for (double& v : x) v = static_cast<double>(r.below(101)) / 100.0;
    const double a = x[0], b = p > 1 ? x[1] : 0.5;
    std::vector<double> c{1.0 + 2.0 * a, 3.0 - 2.0 * a + b, 1.5 + std::sin(6.0 * b)};
    for (double& v : c) v *= r.uniform(0.7, 1.3);
    data.add(x, c, weighted ? r.uniform(0.5, 2.0) : 1.0);
  }
  return data;
}

// Mean normalized SPO per (cell, model) over ok rows.
std::map<std::pair<std::string, std::string>, double> cell_means(const ExperimentResult& res) {
  std::map<std::pair<std::string, std::string>, double> m;
  for (const auto& s : res.summary) m[{s.cell, s.model}] = s.mean;
  return m;
}

std::size_t count_errors(const ExperimentResult& res) {
  std::size_t e = 0;
  for (const auto& r : res.rows) e += r.status != "ok";
  return e;
}

template <DecisionOracle O>
bool mean_beats_candidates(const O& oracle, Rng& r, double& worst_gap) {
  const std::size_t d = oracle.decision_dim();
  const std::size_t n = 1 + r.below(40);
  Dataset leaf(1, d);
  const double x = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> c(d);
    for (double& v : c) v = r.uniform(-1.0, 3.0);
    leaf.add(std::span<const double>(&x, 1), c, r.uniform(0.05, 5.0));
  }
  const auto rows = leaf.all_rows();
  const double at_mean = within_leaf_spo_loss(leaf, rows, leaf_mean(leaf), oracle);
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> cand(d);
    if (k % 2 == 0) {
      for (double& v : cand) v = r.uniform(-3.0, 5.0);
    } else {
      const auto base = leaf.costs(r.below(n));
      for (std::size_t q = 0; q < d; ++q) cand[q] = base[q] + r.uniform(-0.5, 0.5);
    }
    const double gap = within_leaf_spo_loss(leaf, rows, cand, oracle) - at_mean;
    worst_gap = std::min(worst_gap, gap);
    if (gap < -1e-9) return false;
  }
  return true;
}

Outcome leaf_mean_optimality() {
  Rng r(101);
  const GridShortestPathOracle grid;
  const ChoiceOracle choice2(2);
  double worst = kInf;
  std::size_t ok = 0;
  for (std::size_t s = 0; s < 200; ++s) {
    bool pass = false;
    switch (s % 4) {
      case 0:
        pass = mean_beats_candidates(PolytopeLpOracle(2, sample_news_constraints(2, 2, s)), r, worst);
        break;
      case 1:
        pass = mean_beats_candidates(choice2, r, worst);
        break;
      case 2:
        pass = mean_beats_candidates(grid, r, worst);
        break;
      default:
        pass = mean_beats_candidates(PolytopeLpOracle(24, sample_news_constraints(24, 3, s)), r, worst);
    }
    ok += pass;
  }
  return {ok == 200, fmt("%zu/200 leaves, min(candidate - mean) = %.3g", ok, worst)};
}

Outcome two_edge() {
  const Dataset train = gen_two_edge({10000, 0.0, 11}, "train");
  const Dataset test = gen_two_edge({10000, 0.0, 11}, "test");
  const ChoiceOracle oracle(2);
  std::map<std::pair<LossKind, int>, double> loss;
  double threshold = std::nan("");
  for (LossKind kind : {LossKind::spo, LossKind::mse})
    for (int h = 1; h <= 4; ++h) {
      GreedyConfig cfg;
      cfg.loss = kind;
      cfg.max_depth = h;
      cfg.min_leaf_weight = 20;
      const Tree t = train_greedy(train, cfg, oracle);
      loss[{kind, h}] =
          evaluate_predictions(test, oracle, [&](std::span<const double> x) { return t.predict(x); }).normalized_spo();
      if (kind == LossKind::spo && h == 1 && t.root().split) threshold = t.root().split->value;
    }
  std::string broken;
  if (!(threshold >= 0.27 && threshold <= 0.30)) broken += " threshold";
  for (int h = 1; h <= 4; ++h)
    if (loss[{LossKind::spo, h}] > 0.001) broken += fmt(" spot_d%d>0.001", h);
  if (loss[{LossKind::mse, 1}] - loss[{LossKind::spo, 1}] < 0.02) broken += " cart_d1-spot_d1<0.02";
  for (int h = 1; h <= 3; ++h)
    if (loss[{LossKind::mse, h}] <= 0.01) broken += fmt(" cart_d%d<=0.01", h);
  if (loss[{LossKind::mse, 4}] > 0.01) broken += " cart_d4>0.01";
  return {broken.empty(),
          fmt("threshold %.4f; SPOT d1-4 %.2g %.2g %.2g %.2g; CART d1-4 %.4f %.4f %.4f %.4f%s%s", threshold,
                    loss[{LossKind::spo, 1}], loss[{LossKind::spo, 2}], loss[{LossKind::spo, 3}],
                    loss[{LossKind::spo, 4}], loss[{LossKind::mse, 1}], loss[{LossKind::mse, 2}],
                    loss[{LossKind::mse, 3}], loss[{LossKind::mse, 4}], broken.empty() ? "" : "; violated:",
                    broken.c_str())};
}

ExperimentSpec small_grid_spec() {
  ExperimentSpec s;
  s.id = "grid-sp";
  s.n_values = {200};
  s.degrees = {2, 10};
  s.noises = {0.0, 0.25};
  s.trials = 10;
  s.seed = 2024;
  return s;
}

Outcome grid_study() {
  ExperimentSpec s = small_grid_spec();
  s.depths = {1, 2, 3};
  s.unrestricted = true;
  const auto res = run_experiment(s);
  const auto mean = cell_means(res);
  bool every = true;
  double total = 0.0;
  int count = 0;
  std::string worst;
  double worst_pct = kInf;
  for (const auto& cell : res.cells)
    for (const std::string tag : {"d1", "d2", "d3", "full"}) {
      const double spot = mean.at({cell.id, "spot_" + tag}), cart = mean.at({cell.id, "cart_" + tag});
      every = every && spot < cart;
      const double pct = (cart - spot) / cart * 100.0;
      total += pct;
      ++count;
      if (pct < worst_pct) {
        worst_pct = pct;
        worst = cell.id + " " + tag;
      }
    }
  const double avg = total / count;
  const std::size_t errors = count_errors(res);
  return {every && avg >= 10.0 && errors == 0,
          fmt("SPOT < CART in every cell/depth: %s; average improvement %.1f%%; weakest %s %.1f%%; %zu error rows",
              every ? "yes" : "no", avg, worst.c_str(), worst_pct, errors)};
}

Outcome forest_study() {
  ExperimentSpec s = small_grid_spec();
  s.depths.clear();
  s.unrestricted = false;
  s.forests = true;
  s.forest_trees = 100;
  const auto res = run_experiment(s);
  const auto mean = cell_means(res);
  double total = 0.0;
  std::string per_cell;
  for (const auto& cell : res.cells) {
    const double spo = mean.at({cell.id, "spo_forest"}), cart = mean.at({cell.id, "cart_forest"});
    const double pct = (cart - spo) / cart * 100.0;
    total += pct;
    per_cell += fmt(" %.1f", pct);
  }
  const double avg = total / static_cast<double>(res.cells.size());
  const std::size_t errors = count_errors(res);
  return {avg >= 5.0 && errors == 0,
          fmt("average improvement %.1f%% (per cell:%s); %zu error rows", avg, per_cell.c_str(), errors)};
}

Outcome exact_optimality() {
  const ChoiceOracle oracle(3);
  Rng r(55);
  std::size_t dominated = 0, matched = 0;
  double max_diff = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t n = 20 + r.below(21), p = 1 + r.below(3);
    const int depth = 1 + static_cast<int>(r.below(2));
    const Dataset data = choice_data(n, p, r, inst % 2 == 1);
    ExactConfig ec;
    ec.depth = depth;
    ec.min_leaf_weight = 3;
    GreedyConfig gc;
    gc.max_depth = depth;
    gc.min_leaf_weight = 3;
    const double exact = exhaustive_exact(data, ec, oracle).training_loss();
    dominated += exact <= train_greedy(data, gc, oracle).training_loss() + 1e-12;

    const Dataset tiny = choice_data(6 + r.below(7), 1, r, inst % 2 == 1);
    ExactConfig tc;
    tc.depth = 1;
    tc.min_leaf_weight = 1;
    const double got = exhaustive_exact(tiny, tc, oracle).training_loss() * tiny.total_weight();
    const double want = reference::best_tree_loss(tiny, tiny.all_rows(), 1, 1.0, reference::cheapest_option);
    max_diff = std::max(max_diff, std::abs(got - want));
    matched += std::abs(got - want) <= 1e-9;
  }
  return {dominated == 20 && matched == 20,
          fmt("exact <= greedy on %zu/20; brute force agrees on %zu/20 (max diff %.2g)", dominated, matched, max_diff)};
}

template <DecisionOracle O>
bool verify_warm_start(const Dataset& data, int depth, const O& oracle, std::string& why) {
  GreedyConfig gc;
  gc.max_depth = depth;
  gc.min_leaf_weight = 3;
  const Tree tree = train_greedy(data, gc, oracle);
  ExactConfig ec;
  ec.depth = depth;
  ec.min_leaf_weight = 3;
  ec.feature_precision = 0.0;
  const SpotMilp milp = build_milp(data, ec, oracle);
  const auto v = warm_start(milp, tree);
  const auto bad = check_feasibility(milp.model, v, 1e-9);
  if (!bad.empty()) {
    why = "infeasible: " + bad.front();
    return false;
  }
  const double obj = objective_value(milp.model, v);
  if (std::abs(obj - tree.training_loss()) > 1e-9) {
    why = fmt("objective %.12g vs loss %.12g", obj, tree.training_loss());
    return false;
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    double ysum = 0.0;
    for (std::size_t l = 0; l < milp.layout.leaves; ++l) ysum += v[milp.layout.y(i, l)];
    if (ysum - milp.layout.z[i] < -1e-9) {
      why = fmt("row %zu: sum y - z = %.3g", i, ysum - milp.layout.z[i]);
      return false;
    }
  }
  std::stringstream ss;
  write_mps(milp.model, ss);
  if (!same_model(read_mps(ss), milp.model)) {
    why = "exported model does not re-parse identically";
    return false;
  }
  return true;
}

Outcome milp_verification() {
  Rng r(77);
  std::size_t ok = 0;
  std::string why;
  for (int k = 0; k < 20; ++k) {
    const int depth = 1 + k % 3;
    bool pass = false;
    if (k < 14) {
      pass = verify_warm_start(choice_data(40 + r.below(40), 1 + r.below(3), r, k % 2 == 0), depth, ChoiceOracle(3), why);
    } else {
      GridSPConfig g;
      g.n = 30;
      g.test_size = 1;
      g.degree = 2;
      g.noise = 0.25;
      g.seed = static_cast<std::uint64_t>(k);
      pass = verify_warm_start(gen_grid_sp(g).train, depth, GridShortestPathOracle(), why);
    }
    ok += pass;
  }
  return {ok == 20, fmt("%zu/20 warm starts feasible, exact objective, row bounds, MPS round trip%s", ok,
                        why.empty() ? "" : ("; first failure: " + why).c_str())};
}

Outcome oracle_correctness() {
  Rng r(9);
  const GridShortestPathOracle grid;
  const auto paths = reference::grid_paths(4, 4);
  std::size_t grid_ok = 0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> c(24);
    for (double& v : c) v = r.uniform(-1.0, 4.0);
    grid_ok += std::abs(grid.optimal_value(c) - reference::grid_min(paths, c)) <= 1e-9;
  }
  std::size_t lp_ok = 0;
  for (std::uint64_t k = 0; k < 50; ++k) {
    const std::size_t d = 2 + r.below(3), m = r.below(4);
    const auto cons = sample_news_constraints(d, m, 500 + k);
    std::vector<double> c(d);
    for (double& v : c) v = r.uniform(-1.0, 1.0);
    std::vector<std::pair<std::vector<double>, double>> raw;
    for (const auto& h : cons) raw.emplace_back(h.a, h.b);
    lp_ok += std::abs(PolytopeLpOracle(d, cons).optimal_value(c) - reference::simplex_vertex_min(c, raw)) <= 1e-8;
  }
  return {grid_ok == 100 && lp_ok == 50 && paths.size() == 20,
          fmt("grid %zu/100 over %zu paths; LP %zu/50", grid_ok, paths.size(), lp_ok)};
}

Outcome interpretability() {
  ExperimentSpec s;
  s.id = "grid-sp";
  s.n_values = {2000};
  s.degrees = {10};
  s.noises = {0.5};
  s.depths.clear();
  s.unrestricted = true;
  s.trials = 10;
  s.seed = 31;
  const auto res = run_experiment(s);
  std::map<std::size_t, const ResultRow*> spot, cart;
  for (const auto& row : res.rows) {
    if (row.status != "ok") continue;
    (row.model == "spot_full" ? spot : cart)[row.trial] = &row;
  }
  std::size_t good = 0;
  double spot_leaves = 0.0, cart_leaves = 0.0;
  for (const auto& [t, sr] : spot) {
    if (!cart.count(t)) continue;
    const ResultRow* cr = cart.at(t);
    good += sr->leaves <= cr->leaves && sr->normalized_spo <= cr->normalized_spo + 0.01;
    spot_leaves += static_cast<double>(sr->leaves);
    cart_leaves += static_cast<double>(cr->leaves);
  }
  return {good >= 8, fmt("%zu/10 trials smaller and no worse; mean leaves SPOT %.1f vs CART %.1f", good,
                         spot_leaves / 10.0, cart_leaves / 10.0)};
}

Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / "spotree_acceptance_determinism";
  fs::remove_all(base);
  std::vector<ExperimentSpec> specs;
  ExperimentSpec g = small_grid_spec();
  g.n_values = {100};
  g.trials = 2;
  g.depths = {1, 2};
  g.exact_depths = {1};
  g.forests = true;
  g.forest_trees = 5;
  g.test_size = 200;
  specs.push_back(g);
  ExperimentSpec news = preset_spec("news");
  news.n_values = {400};
  news.test_size = 200;
  news.trials = 2;
  news.depths = {2};
  news.min_leaf_weight = 500;
  specs.push_back(news);
  ExperimentSpec te = preset_spec("two-edge");
  te.n_values = {500};
  te.test_size = 500;
  specs.push_back(te);
  std::size_t same = 0, total = 0;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    ExperimentSpec a = specs[k], b = specs[k];
    a.out_dir = (base / (std::to_string(k) + "a")).string();
    b.out_dir = (base / (std::to_string(k) + "b")).string();
    b.threads = 3;
    run_experiment(a);
    run_experiment(b);
    for (const char* f : {"results.csv", "summary.csv", "improvements.csv", "manifest.json"}) {
      ++total;
      const std::string fa = slurp(fs::path(a.out_dir) / f);
      same += !fa.empty() && fa == slurp(fs::path(b.out_dir) / f);
    }
  }
  fs::remove_all(base);
  return {same == total, fmt("%zu/%zu output files byte-identical across reruns", same, total)};
}

Outcome news_study() {
  ExperimentSpec s = preset_spec("news");
  s.depths = {2};
  s.unrestricted = false;
  s.trials = 10;
  s.seed = 8;
  const auto res = run_experiment(s);
  std::map<std::size_t, double> spot, cart;
  for (const auto& row : res.rows)
    if (row.status == "ok") (row.model == "spot_d2" ? spot : cart)[row.trial] = row.weighted_spo;
  std::size_t wins = 0;
  for (const auto& [t, v] : spot) wins += cart.count(t) && v <= cart.at(t);

  // Tree and forest invariants under sample weights.
  NewsConfig nc;
  nc.n = 1000;
  nc.test_size = 300;
  nc.seed = 4;
  nc.constraint_seed = 6;
  const auto inst = gen_news(nc);
  std::size_t violations = 0;
  auto check_tree = [&](const Tree& t, double min_leaf) {
    for (const auto& node : t.nodes()) {
      if (node.is_leaf() && node.weight < min_leaf) ++violations;
      if (!inst.oracle.is_feasible(node.decision.w)) ++violations;
    }
  };
  GreedyConfig gc;
  gc.max_depth = 2;
  gc.min_leaf_weight = 1000;
  check_tree(train_greedy(inst.train, gc, inst.oracle), 1000);
  gc.max_depth.reset();
  check_tree(train_pruned(inst.train, gc, inst.oracle), 1000);
  ForestConfig fc;
  fc.n_trees = 10;
  fc.feature_bag = 3;
  fc.bootstrap = false;
  fc.tree.min_leaf_weight = 1000;
  fc.seed = 3;
  const Forest weighted = train_forest(inst.train, fc, inst.oracle);
  for (const auto& t : weighted.trees) check_tree(t, 1000);
  fc.bootstrap = true;
  fc.tree.min_leaf_weight = 20;
  const Forest bagged = train_forest(inst.train, fc, inst.oracle);
  for (const auto& t : bagged.trees) check_tree(t, 20);
  for (const Forest* f : {&weighted, &bagged})
    for (std::size_t i = 0; i < inst.test.size(); ++i)
      violations += !inst.oracle.is_feasible(forest_predict(*f, inst.test.features(i), inst.oracle).second.w);
  return {wins >= 8 && violations == 0,
          fmt("SPOT d2 <= CART d2 weighted SPO in %zu/10 seeds; %zu weighted invariant violations", wins, violations)};
}

}  // namespace

int main() {
  criterion("1 leaf-mean optimality", 60, leaf_mean_optimality);
  criterion("2 two-edge", 60, two_edge);
  criterion("3 grid study", 600, grid_study);
  criterion("4 forest study", 1800, forest_study);
  criterion("5 exact optimality", 600, exact_optimality);
  criterion("6 milp verification", 600, milp_verification);
  criterion("7 oracles", 600, oracle_correctness);
  criterion("8 interpretability", 900, interpretability);
  criterion("9 determinism", 1800, determinism);
  criterion("10 news (synthetic)", 1800, news_study);
  std::printf("%s: %d failed\n", failures == 0 ? "ALL PASS" : "FAILED", failures);
  return failures == 0 ? 0 : 1;
}
