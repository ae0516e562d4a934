// spotree command-line driver.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <variant>

#include <CLI11.hpp>

#include "spotree/spotree.hpp"

namespace fs = std::filesystem;
using namespace spotree;

namespace {

using AnyOracle = std::variant<GridShortestPathOracle, PolytopeLpOracle, ChoiceOracle>;

struct OracleOptions {
  std::string kind = "grid";
  std::size_t grid_width = 4;
  std::size_t grid_height = 4;
  std::string constraints;
  std::size_t choices = 2;

  void add_to(CLI::App* app) {
    app->add_option("--oracle", kind, "Decision oracle: grid, lp or choice")
        ->check(CLI::IsMember({"grid", "lp", "choice"}));
    app->add_option("--grid-width", grid_width, "Grid nodes per row");
    app->add_option("--grid-height", grid_height, "Grid nodes per column");
    app->add_option("--constraints", constraints, "Constraint file for the LP oracle");
    app->add_option("--choices", choices, "Alternatives for the choice oracle");
  }

  AnyOracle make() const {
    if (kind == "grid") return GridShortestPathOracle(grid_width, grid_height);
    if (kind == "choice") return ChoiceOracle(choices);
    require(!constraints.empty(), Errc::invalid_argument, "--oracle lp needs --constraints");
    return load_polytope_oracle(constraints);
  }
};

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 1;
};

void print_json(const nlohmann::json& j) { std::cout << j.dump() << '\n'; }

bool is_forest_dir(const std::string& path) { return fs::is_directory(path) && fs::exists(fs::path(path) / "manifest.json"); }

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used != 0 && used == tok.size(), Errc::invalid_argument, "bad list entry '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPO Trees: decision trees and forests trained on decision (SPO) loss"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master random seed")->capture_default_str();
  app.add_option("--out", g.out, "Output path (file or directory, per subcommand)");
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str();

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset (train.csv, test.csv)");
  std::string gen_kind = "grid-sp";
  std::size_t gen_n = 200, gen_test = 1000, gen_p = 5, gen_constraints = 5;
  int gen_deg = 2;
  double gen_noise = 0.0;
  gen->add_option("--experiment", gen_kind, "two-edge, grid-sp or news")
      ->check(CLI::IsMember({"two-edge", "grid-sp", "news"}));
  gen->add_option("--n", gen_n, "Training rows");
  gen->add_option("--test-size", gen_test, "Test rows");
  gen->add_option("--p", gen_p, "Features (grid-sp, news)");
  gen->add_option("--deg", gen_deg, "Polynomial degree (grid-sp)");
  gen->add_option("--noise", gen_noise, "Noise half-width");
  gen->add_option("--num-constraints", gen_constraints, "Side constraints (news)");

  // train
  auto* train = app.add_subcommand("train", "Train a single tree");
  std::string tr_input, tr_loss = "spo", tr_method = "greedy";
  int tr_depth = -1;
  double tr_min_leaf = 20.0, tr_val = 0.2;
  std::size_t tr_quantiles = 100;
  bool tr_prune = false;
  OracleOptions tr_oracle;
  train->add_option("--input", tr_input, "Training CSV")->required();
  train->add_option("--loss", tr_loss, "spo or mse")->check(CLI::IsMember({"spo", "mse"}));
  train->add_option("--method", tr_method, "greedy or exact")->check(CLI::IsMember({"greedy", "exact"}));
  train->add_option("--max-depth", tr_depth, "Maximum depth (-1 = unrestricted)");
  train->add_option("--min-leaf", tr_min_leaf, "Minimum leaf weight");
  train->add_option("--quantiles", tr_quantiles, "Candidate thresholds per feature");
  train->add_flag("--prune", tr_prune, "Hold out a validation split and prune");
  train->add_option("--validation-fraction", tr_val, "Holdout share used by --prune");
  tr_oracle.add_to(train);

  // prune
  auto* prune_cmd = app.add_subcommand("prune", "Prune a tree on validation data");
  std::string pr_tree, pr_val;
  OracleOptions pr_oracle;
  prune_cmd->add_option("--tree", pr_tree, "Tree JSON")->required();
  prune_cmd->add_option("--validation", pr_val, "Validation CSV")->required();
  pr_oracle.add_to(prune_cmd);

  // train-forest
  auto* forest_cmd = app.add_subcommand("train-forest", "Train a forest");
  std::string fo_input, fo_loss = "spo", fo_tune;
  std::size_t fo_trees = 100, fo_bag = 0, fo_quantiles = 100;
  double fo_min_leaf = 20.0;
  OracleOptions fo_oracle;
  forest_cmd->add_option("--input", fo_input, "Training CSV")->required();
  forest_cmd->add_option("--loss", fo_loss, "spo or mse")->check(CLI::IsMember({"spo", "mse"}));
  forest_cmd->add_option("--trees", fo_trees, "Number of trees");
  forest_cmd->add_option("--feature-bag", fo_bag, "Features per split (0 = all)");
  forest_cmd->add_option("--tune", fo_tune, "Comma list of feature-bag sizes to tune over");
  forest_cmd->add_option("--min-leaf", fo_min_leaf, "Minimum leaf weight");
  forest_cmd->add_option("--quantiles", fo_quantiles, "Candidate thresholds per feature");
  fo_oracle.add_to(forest_cmd);

  // export-milp / decode-solution share the model options
  auto* export_cmd = app.add_subcommand("export-milp", "Write the exact-training MILP in MPS format");
  auto* decode_cmd = app.add_subcommand("decode-solution", "Turn a MILP solution file into a tree");
  std::string mi_input, mi_warm, mi_solution;
  ExactConfig mi_cfg;
  OracleOptions mi_oracle;
  for (auto* c : {export_cmd, decode_cmd}) {
    c->add_option("--input", mi_input, "Training CSV")->required();
    c->add_option("--depth", mi_cfg.depth, "Tree depth H");
    c->add_option("--min-leaf", mi_cfg.min_leaf_weight, "Minimum leaf weight");
    c->add_option("--alpha", mi_cfg.alpha, "Penalty per active split");
    c->add_option("--precision", mi_cfg.feature_precision, "Feature rounding grid (0 = none)");
    mi_oracle.add_to(c);
  }
  export_cmd->add_option("--warm-start", mi_warm, "Tree JSON to encode as a start solution (<out>.mst)");
  decode_cmd->add_option("--solution", mi_solution, "Solution file: 'name value' lines")->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a tree or forest on a dataset");
  std::string ev_model, ev_input;
  OracleOptions ev_oracle;
  eval_cmd->add_option("--model", ev_model, "Tree JSON or forest directory")->required();
  eval_cmd->add_option("--input", ev_input, "Dataset CSV")->required();
  ev_oracle.add_to(eval_cmd);

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Run a study and write CSV reports");
  std::string ex_id = "grid-sp", ex_n, ex_deg, ex_noise, ex_depths, ex_exact;
  std::size_t ex_trials = 0, ex_trees = 0, ex_test = 0;
  bool ex_no_prune = false, ex_forests = false, ex_no_full = false;
  exp_cmd->add_option("--experiment", ex_id, "two-edge, grid-sp or news")
      ->check(CLI::IsMember({"two-edge", "grid-sp", "news"}));
  exp_cmd->add_option("--trials", ex_trials, "Trials per cell");
  exp_cmd->add_option("--n", ex_n, "Comma list of training sizes");
  exp_cmd->add_option("--deg", ex_deg, "Comma list of degrees");
  exp_cmd->add_option("--noise", ex_noise, "Comma list of noise levels");
  exp_cmd->add_option("--depths", ex_depths, "Comma list of fixed depths");
  exp_cmd->add_option("--exact-depths", ex_exact, "Comma list of exhaustive-exact depths");
  exp_cmd->add_option("--trees", ex_trees, "Trees per forest");
  exp_cmd->add_option("--test-size", ex_test, "Test rows");
  exp_cmd->add_flag("--forests", ex_forests, "Also train SPO and CART forests");
  exp_cmd->add_flag("--no-prune", ex_no_prune, "Skip validation pruning of single trees");
  exp_cmd->add_flag("--no-unrestricted", ex_no_full, "Skip the depth-unrestricted trees");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  try {
    auto need_out = [&](const char* what) {
      require(!g.out.empty(), Errc::invalid_argument, std::string("--out is required for ") + what);
    };

    if (*gen) {
      need_out("gen");
      fs::create_directories(g.out);
      const std::string train_path = (fs::path(g.out) / "train.csv").string();
      const std::string test_path = (fs::path(g.out) / "test.csv").string();
      nlohmann::json man{{"experiment", gen_kind}, {"n", gen_n}, {"test_size", gen_test}, {"noise", gen_noise},
                         {"seed", g.seed}};
      if (gen_kind == "two-edge") {
        TwoEdgeConfig cfg{gen_n, gen_noise, g.seed};
        write_dataset_csv(gen_two_edge(cfg, "train"), train_path);
        cfg.n = gen_test;
        write_dataset_csv(gen_two_edge(cfg, "test"), test_path);
        man["oracle"] = "choice";
      } else if (gen_kind == "grid-sp") {
        GridSPConfig cfg;
        cfg.n = gen_n;
        cfg.test_size = gen_test;
        cfg.p = gen_p;
        cfg.degree = gen_deg;
        cfg.noise = gen_noise;
        cfg.seed = g.seed;
        const auto inst = gen_grid_sp(cfg);
        write_dataset_csv(inst.train, train_path);
        write_dataset_csv(inst.test, test_path);
        man["p"] = gen_p;
        man["degree"] = gen_deg;
        man["oracle"] = "grid";
        man["b_matrix"] = inst.b_matrix;
      } else {
        NewsConfig cfg;
        cfg.n = gen_n;
        cfg.test_size = gen_test;
        cfg.p = gen_p;
        cfg.noise = gen_noise;
        cfg.constraints = gen_constraints;
        cfg.seed = g.seed;
        cfg.constraint_seed = derive_seed(g.seed, std::string_view("constraints"));
        const auto inst = gen_news(cfg);
        write_dataset_csv(inst.train, train_path);
        write_dataset_csv(inst.test, test_path);
        std::ofstream cf(fs::path(g.out) / "constraints.txt");
        write_constraints(cf, cfg.d, inst.constraints);
        man["p"] = gen_p;
        man["oracle"] = "lp";
        man["constraints_file"] = "constraints.txt";
      }
      write_manifest(train_path, man);
      print_json({{"train", train_path}, {"test", test_path}});
      return 0;
    }

    if (*train) {
      need_out("train");
      const Dataset data = read_dataset_csv(tr_input);
      const AnyOracle oracle = tr_oracle.make();
      const Tree tree = std::visit(
          [&](const auto& o) {
            if (tr_method == "exact") {
              ExactConfig cfg;
              require(tr_depth >= 1, Errc::invalid_argument, "--method exact needs --max-depth >= 1");
              cfg.depth = tr_depth;
              cfg.min_leaf_weight = tr_min_leaf;
              cfg.quantiles = tr_quantiles;
              return exhaustive_exact(data, cfg, o);
            }
            GreedyConfig cfg;
            cfg.loss = parse_loss_kind(tr_loss);
            if (tr_depth >= 0) cfg.max_depth = tr_depth;
            cfg.min_leaf_weight = tr_min_leaf;
            cfg.quantiles = tr_quantiles;
            cfg.seed = g.seed;
            cfg.validation_fraction = tr_prune ? tr_val : 0.0;
            return train_pruned(data, cfg, o);
          },
          oracle);
      save_tree(tree, g.out);
      print_json({{"out", g.out}, {"leaves", tree.leaf_count()}, {"depth", tree.depth()},
                  {"training_loss", tree.training_loss()}});
      return 0;
    }

    if (*prune_cmd) {
      need_out("prune");
      const Tree tree = load_tree(pr_tree);
      const Dataset val = read_dataset_csv(pr_val);
      const AnyOracle oracle = pr_oracle.make();
      const Tree pruned = std::visit([&](const auto& o) { return prune(tree, val, tree.loss_kind(), o); }, oracle);
      save_tree(pruned, g.out);
      print_json({{"out", g.out}, {"leaves_before", tree.leaf_count()}, {"leaves_after", pruned.leaf_count()}});
      return 0;
    }

    if (*forest_cmd) {
      need_out("train-forest");
      const Dataset data = read_dataset_csv(fo_input);
      const AnyOracle oracle = fo_oracle.make();
      ForestConfig cfg;
      cfg.n_trees = fo_trees;
      cfg.feature_bag = fo_bag;
      cfg.tree.loss = parse_loss_kind(fo_loss);
      cfg.tree.min_leaf_weight = fo_min_leaf;
      cfg.tree.quantiles = fo_quantiles;
      cfg.seed = g.seed;
      cfg.threads = g.threads;
      nlohmann::json info;
      const Forest forest = std::visit(
          [&](const auto& o) {
            if (!fo_tune.empty()) {
              BagTuning t = tune_feature_bag(data, parse_size_list(fo_tune), cfg, o);
              for (auto [f, loss] : t.validation_loss) info["validation_loss"][std::to_string(f)] = loss;
              return std::move(t.forest);
            }
            return train_forest(data, cfg, o);
          },
          oracle);
      save_forest(forest, g.out);
      info["out"] = g.out;
      info["trees"] = forest.trees.size();
      info["feature_bag"] = forest.feature_bag;
      print_json(info);
      return 0;
    }

    if (*export_cmd || *decode_cmd) {
      need_out(*export_cmd ? "export-milp" : "decode-solution");
      const Dataset data = read_dataset_csv(mi_input);
      const AnyOracle oracle = mi_oracle.make();
      std::visit(
          [&](const auto& o) {
            const SpotMilp milp = build_milp(data, mi_cfg, o);
            if (*export_cmd) {
              export_model(milp.model, g.out);
              nlohmann::json info{{"out", g.out},
                                  {"variables", milp.model.variables.size()},
                                  {"constraints", milp.model.constraints.size()},
                                  {"m1", milp.layout.m1},
                                  {"m2", milp.layout.m2}};
              if (!mi_warm.empty()) {
                const auto start = warm_start(milp, load_tree(mi_warm));
                std::ofstream f(g.out + ".mst");
                require(bool(f), Errc::io_error, "cannot write " + g.out + ".mst");
                write_solution(milp.model, start, f);
                info["warm_start"] = g.out + ".mst";
                info["warm_start_objective"] = objective_value(milp.model, start);
              }
              print_json(info);
            } else {
              std::ifstream f(mi_solution);
              require(bool(f), Errc::io_error, "cannot open " + mi_solution);
              const auto values = read_solution(milp.model, f);
              const Tree tree = decode_solution(milp, values, o);
              save_tree(tree, g.out);
              print_json({{"out", g.out},
                          {"objective", objective_value(milp.model, values)},
                          {"leaves", tree.leaf_count()},
                          {"training_loss", tree.training_loss()}});
            }
          },
          oracle);
      return 0;
    }

    if (*eval_cmd) {
      const Dataset data = read_dataset_csv(ev_input);
      const AnyOracle oracle = ev_oracle.make();
      nlohmann::json out;
      std::visit(
          [&](const auto& o) {
            LossReport rep;
            if (is_forest_dir(ev_model)) {
              const Forest forest = load_forest(ev_model);
              require_dims(data.feature_dim(), forest.feature_dim, "dataset vs forest features");
              rep = evaluate_predictions(data, o, [&](std::span<const double> x) { return forest_predict(forest, x, o); });
              std::size_t leaves = 0;
              int depth = 0;
              for (const Tree& t : forest.trees) {
                leaves += t.leaf_count();
                depth = std::max(depth, t.depth());
              }
              out["trees"] = forest.trees.size();
              out["leaves"] = leaves;
              out["depth"] = depth;
            } else {
              const Tree tree = load_tree(ev_model);
              require_dims(data.feature_dim(), tree.feature_dim(), "dataset vs tree features");
              require_dims(data.decision_dim(), tree.decision_dim(), "dataset vs tree costs");
              rep = evaluate_predictions(data, o, [&](std::span<const double> x) { return tree.predict(x); });
              out["leaves"] = tree.leaf_count();
              out["depth"] = tree.depth();
            }
            out["normalized_spo"] = rep.normalized_spo();
            out["weighted_spo"] = rep.weighted_spo;
            out["mean_spo"] = rep.mean_spo();
            out["weighted_mse"] = rep.weighted_mse;
            out["mean_mse"] = rep.mean_mse();
            out["total_weight"] = rep.total_weight;
          },
          oracle);
      print_json(out);
      return 0;
    }

    if (*exp_cmd) {
      ExperimentSpec spec = preset_spec(ex_id);
      if (ex_trials) spec.trials = ex_trials;
      if (!ex_n.empty()) spec.n_values = parse_size_list(ex_n);
      if (!ex_deg.empty()) {
        spec.degrees.clear();
        for (auto v : parse_size_list(ex_deg)) spec.degrees.push_back(static_cast<int>(v));
      }
      if (!ex_noise.empty()) {
        spec.noises.clear();
        std::stringstream ss(ex_noise);
        for (std::string tok; std::getline(ss, tok, ',');) spec.noises.push_back(std::stod(tok));
      }
      if (!ex_depths.empty()) {
        spec.depths.clear();
        for (auto v : parse_size_list(ex_depths)) spec.depths.push_back(static_cast<int>(v));
      }
      if (!ex_exact.empty()) {
        spec.exact_depths.clear();
        for (auto v : parse_size_list(ex_exact)) spec.exact_depths.push_back(static_cast<int>(v));
      }
      if (ex_trees) spec.forest_trees = ex_trees;
      if (ex_test) spec.test_size = ex_test;
      if (ex_forests) spec.forests = true;
      if (ex_no_prune) spec.prune = false;
      if (ex_no_full) spec.unrestricted = false;
      spec.seed = g.seed;
      spec.threads = g.threads;
      spec.out_dir = g.out.empty() ? "results" : g.out;
      const ExperimentResult res = run_experiment(spec);
      std::size_t failed = 0;
      for (const auto& r : res.rows) failed += r.status == "error";
      print_json({{"out", spec.out_dir}, {"rows", res.rows.size()}, {"errors", failed}});
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"error", to_string(e.code())}, {"message", e.what()}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 0;
}
