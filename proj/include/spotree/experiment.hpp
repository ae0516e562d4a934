#pragma once

// Experiment harness: generates data per (cell, trial), trains every
// configured model, scores it on the test set and writes
//   results.csv       one row per (cell, trial, model)
//   summary.csv       per (cell, model) mean / sample sd of test loss
//   improvements.csv  percentage improvement of each model over its baseline
//   manifest.json     the spec and the list of cells
// Trial seeds are derive_seed(derive_seed(master, cell id), trial), so any
// cell can be rerun on its own and thread count never changes the output.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "spotree/datagen.hpp"
#include "spotree/dataset_io.hpp"
#include "spotree/exact.hpp"
#include "spotree/forest.hpp"

namespace spotree {

inline constexpr const char* kResultsSchema = "# spotree-results v1";

struct ExperimentSpec {
  std::string id = "grid-sp";  // two-edge | grid-sp | news
  std::vector<std::size_t> n_values{200};
  std::vector<int> degrees{2, 10};       // grid-sp only
  std::vector<double> noises{0.0, 0.25};  // epsilon-bar (grid-sp, two-edge) or news noise
  std::vector<int> depths{1, 2, 3};
  bool unrestricted = true;
  std::vector<LossKind> losses{LossKind::spo, LossKind::mse};
  std::vector<int> exact_depths;  // exhaustive-exact models; empty = none
  bool forests = false;
  std::size_t forest_trees = 100;
  std::vector<std::size_t> bag_candidates{2, 3, 4, 5};
  std::size_t trials = 10;
  std::size_t test_size = 1000;
  std::size_t p = 5;
  double min_leaf_weight = 20.0;
  std::size_t quantiles = 100;
  double validation_fraction = 0.2;
  bool prune = true;
  double tie_noise = 1e-6;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out_dir;  // nothing is written when empty

  void validate() const {
    require(id == "two-edge" || id == "grid-sp" || id == "news", Errc::invalid_argument,
            "unknown experiment '" + id + "' (expected two-edge, grid-sp or news)");
    require(trials >= 1, Errc::invalid_argument, "trials must be >= 1");
    require(!n_values.empty() && !noises.empty(), Errc::invalid_argument, "empty parameter grid");
    require(id != "grid-sp" || !degrees.empty(), Errc::invalid_argument, "grid-sp needs at least one degree");
    require(!losses.empty(), Errc::invalid_argument, "no losses configured");
    require(!depths.empty() || unrestricted || forests || !exact_depths.empty(), Errc::invalid_argument,
            "no models configured");
    for (int h : depths) require(h >= 0, Errc::invalid_argument, "depths must be >= 0");
    require(test_size >= 1, Errc::invalid_argument, "test_size must be >= 1");
    require(validation_fraction >= 0.0 && validation_fraction < 1.0, Errc::invalid_argument,
            "validation_fraction must be in [0,1)");
  }
};

// Preset grids for the three studies.
inline ExperimentSpec preset_spec(const std::string& id) {
  ExperimentSpec s;
  s.id = id;
  if (id == "two-edge") {
    s.n_values = {10000};
    s.noises = {0.0};
    s.depths = {1, 2, 3, 4};
    s.unrestricted = false;
    s.trials = 1;
    s.test_size = 10000;
    s.p = 1;
    s.prune = false;
  } else if (id == "news") {
    s.n_values = {2000};
    s.noises = {0.25};
    s.depths = {1, 2, 3};
    s.test_size = 2000;
    s.min_leaf_weight = 1000.0;
  }
  s.validate();
  return s;
}

struct ExperimentCell {
  std::string id;
  std::size_t n = 0;
  int degree = 0;
  double noise = 0.0;
};

struct ResultRow {
  std::string cell;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string model;
  std::string status = "ok";  // ok | skipped | error
  double normalized_spo = std::nan("");
  double weighted_spo = std::nan("");
  double weighted_mse = std::nan("");
  std::size_t leaves = 0;
  int depth = 0;
  std::string note;
};

struct SummaryRow {
  std::string cell;
  std::string model;
  std::size_t count = 0;
  double mean = std::nan("");
  double sd = std::nan("");
  double mean_leaves = std::nan("");
};

struct ImprovementRow {
  std::string cell;  // "ALL" for the across-cell average
  std::string baseline;
  std::string model;
  double baseline_mean = std::nan("");
  double model_mean = std::nan("");
  double pct = std::nan("");  // (baseline - model) / baseline * 100
};

struct ExperimentResult {
  std::vector<ExperimentCell> cells;
  std::vector<ResultRow> rows;
  std::vector<SummaryRow> summary;
  std::vector<ImprovementRow> improvements;
};

inline std::string format_param(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline std::vector<ExperimentCell> experiment_cells(const ExperimentSpec& spec) {
  std::vector<ExperimentCell> cells;
  for (std::size_t n : spec.n_values) {
    if (spec.id == "grid-sp") {
      for (int deg : spec.degrees)
        for (double eps : spec.noises)
          cells.push_back({spec.id + "/n=" + std::to_string(n) + "/deg=" + std::to_string(deg) +
                               "/eps=" + format_param(eps),
                           n, deg, eps});
    } else {
      for (double eps : spec.noises)
        cells.push_back({spec.id + "/n=" + std::to_string(n) + "/eps=" + format_param(eps), n, 0, eps});
    }
  }
  return cells;
}

inline std::uint64_t trial_seed(std::uint64_t master, const std::string& cell, std::size_t trial) {
  return derive_seed(derive_seed(master, std::string_view(cell)), static_cast<std::uint64_t>(trial));
}

// Names of the models a spec trains, in row order within a trial.
inline std::vector<std::string> experiment_models(const ExperimentSpec& spec) {
  std::vector<std::string> names;
  for (LossKind loss : spec.losses) {
    const std::string base = loss == LossKind::spo ? "spot" : "cart";
    for (int h : spec.depths) names.push_back(base + "_d" + std::to_string(h));
    if (spec.unrestricted) names.push_back(base + "_full");
  }
  for (int h : spec.exact_depths) names.push_back("exact_d" + std::to_string(h));
  if (spec.forests)
    for (LossKind loss : spec.losses) names.push_back(loss == LossKind::spo ? "spo_forest" : "cart_forest");
  return names;
}

namespace detail {

template <DecisionOracle O>
void score(ResultRow& row, const Dataset& test, const O& oracle, auto&& predict) {
  const LossReport rep = evaluate_predictions(test, oracle, predict);
  row.normalized_spo = rep.normalized_spo();
  row.weighted_spo = rep.mean_spo();
  row.weighted_mse = rep.mean_mse();
}

template <DecisionOracle O>
std::vector<ResultRow> run_trial(const ExperimentSpec& spec, const std::string& cell, std::size_t trial,
                                 std::uint64_t seed, Dataset train, const Dataset& test, const O& oracle) {
  if (spec.tie_noise > 0.0) perturb_costs(train, spec.tie_noise, derive_seed(seed, std::string_view("tie-noise")));
  std::vector<ResultRow> rows;
  auto run = [&](const std::string& model, auto&& body) {
    ResultRow row;
    row.cell = cell;
    row.trial = trial;
    row.seed = seed;
    row.model = model;
    try {
      body(row);
    } catch (const Error& e) {
      row.status = e.code() == Errc::too_large ? "skipped" : "error";
      row.note = std::string(to_string(e.code())) + ": " + e.what();
    }
    rows.push_back(std::move(row));
  };
  auto tree_body = [&](LossKind loss, std::optional<int> depth) {
    return [&, loss, depth](ResultRow& row) {
      GreedyConfig cfg;
      cfg.loss = loss;
      cfg.max_depth = depth;
      cfg.min_leaf_weight = spec.min_leaf_weight;
      cfg.quantiles = spec.quantiles;
      cfg.validation_fraction = spec.prune ? spec.validation_fraction : 0.0;
      cfg.seed = derive_seed(seed, std::string_view("holdout"));
      const Tree tree = train_pruned(train, cfg, oracle);
      score(row, test, oracle, [&](std::span<const double> x) { return tree.predict(x); });
      row.leaves = tree.leaf_count();
      row.depth = tree.depth();
    };
  };
  for (LossKind loss : spec.losses) {
    const std::string base = loss == LossKind::spo ? "spot" : "cart";
    for (int h : spec.depths) run(base + "_d" + std::to_string(h), tree_body(loss, h));
    if (spec.unrestricted) run(base + "_full", tree_body(loss, std::nullopt));
  }
  for (int h : spec.exact_depths) {
    run("exact_d" + std::to_string(h), [&](ResultRow& row) {
      ExactConfig cfg;
      cfg.depth = h;
      cfg.min_leaf_weight = spec.min_leaf_weight;
      cfg.quantiles = spec.quantiles;
      const Tree tree = exhaustive_exact(train, cfg, oracle);
      score(row, test, oracle, [&](std::span<const double> x) { return tree.predict(x); });
      row.leaves = tree.leaf_count();
      row.depth = tree.depth();
    });
  }
  if (spec.forests) {
    for (LossKind loss : spec.losses) {
      run(loss == LossKind::spo ? "spo_forest" : "cart_forest", [&](ResultRow& row) {
        ForestConfig fc;
        fc.n_trees = spec.forest_trees;
        fc.tree.loss = loss;
        fc.tree.min_leaf_weight = spec.min_leaf_weight;
        fc.tree.quantiles = spec.quantiles;
        fc.tree.validation_fraction = spec.validation_fraction > 0.0 ? spec.validation_fraction : 0.2;
        fc.seed = derive_seed(seed, std::string_view("forest"));
        std::vector<std::size_t> cands;
        for (std::size_t f : spec.bag_candidates)
          if (f >= 1 && f <= train.feature_dim()) cands.push_back(f);
        if (cands.empty()) cands.push_back(train.feature_dim());
        const BagTuning tuned = tune_feature_bag(train, cands, fc, oracle);
        score(row, test, oracle,
              [&](std::span<const double> x) { return forest_predict(tuned.forest, x, oracle); });
        std::size_t leaves = 0;
        for (const Tree& t : tuned.forest.trees) leaves += t.leaf_count();
        row.leaves = leaves;
        row.note = "f=" + std::to_string(tuned.feature_bag);
      });
    }
  }
  return rows;
}

inline std::vector<ResultRow> run_cell_trial(const ExperimentSpec& spec, const ExperimentCell& cell,
                                             std::size_t trial) {
  const std::uint64_t seed = trial_seed(spec.seed, cell.id, trial);
  if (spec.id == "grid-sp") {
    GridSPConfig g;
    g.n = cell.n;
    g.test_size = spec.test_size;
    g.p = spec.p;
    g.degree = cell.degree;
    g.noise = cell.noise;
    g.seed = seed;
    GridSPInstance inst = gen_grid_sp(g);
    const GridShortestPathOracle oracle(g.grid_width, g.grid_height);
    return run_trial(spec, cell.id, trial, seed, std::move(inst.train), inst.test, oracle);
  }
  if (spec.id == "two-edge") {
    TwoEdgeConfig t{cell.n, cell.noise, seed};
    Dataset train = gen_two_edge(t, "train");
    t.n = spec.test_size;
    const Dataset test = gen_two_edge(t, "test");
    return run_trial(spec, cell.id, trial, seed, std::move(train), test, ChoiceOracle(2));
  }
  NewsConfig nc;
  nc.n = cell.n;
  nc.test_size = spec.test_size;
  nc.p = spec.p;
  nc.noise = cell.noise;
  nc.seed = seed;
  nc.constraint_seed = derive_seed(seed, std::string_view("constraints"));
  NewsInstance inst = gen_news(nc);
  return run_trial(spec, cell.id, trial, seed, std::move(inst.train), inst.test, inst.oracle);
}

}  // namespace detail

// Mean and sample standard deviation over the "ok" rows of each
// (cell, model), in cell order then model order.
inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::map<std::pair<std::string, std::string>, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) groups[{r.cell, r.model}].push_back(&r);
  std::vector<SummaryRow> out;
  for (const auto& [key, members] : groups) {
    SummaryRow s{key.first, key.second};
    double sum = 0.0, leaves = 0.0;
    for (const ResultRow* r : members)
      if (r->status == "ok") {
        ++s.count;
        sum += r->normalized_spo;
        leaves += static_cast<double>(r->leaves);
      }
    if (s.count > 0) {
      s.mean = sum / static_cast<double>(s.count);
      s.mean_leaves = leaves / static_cast<double>(s.count);
      double ss = 0.0;
      for (const ResultRow* r : members)
        if (r->status == "ok") ss += (r->normalized_spo - s.mean) * (r->normalized_spo - s.mean);
      s.sd = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Baseline/model pairs: CART vs SPOT per depth, CART forest vs SPO forest,
// greedy SPOT vs exhaustive at the same depth.
inline std::vector<ImprovementRow> improvements(const std::vector<SummaryRow>& summary) {
  std::map<std::pair<std::string, std::string>, double> mean;
  std::vector<std::string> cells, models;
  for (const auto& s : summary) {
    mean[{s.cell, s.model}] = s.mean;
    if (std::find(cells.begin(), cells.end(), s.cell) == cells.end()) cells.push_back(s.cell);
    if (std::find(models.begin(), models.end(), s.model) == models.end()) models.push_back(s.model);
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& m : models) {
    if (m.rfind("spot_", 0) == 0) pairs.emplace_back("cart_" + m.substr(5), m);
    if (m == "spo_forest") pairs.emplace_back("cart_forest", m);
    if (m.rfind("exact_", 0) == 0) pairs.emplace_back("spot_" + m.substr(6), m);
  }
  std::vector<ImprovementRow> out;
  for (const auto& [base, model] : pairs) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& cell : cells) {
      auto b = mean.find({cell, base});
      auto m = mean.find({cell, model});
      if (b == mean.end() || m == mean.end()) continue;
      ImprovementRow row{cell, base, model, b->second, m->second};
      row.pct = (b->second - m->second) / b->second * 100.0;
      if (std::isfinite(row.pct)) {
        total += row.pct;
        ++count;
      }
      out.push_back(row);
    }
    if (count > 0) {
      ImprovementRow all{"ALL", base, model};
      all.pct = total / static_cast<double>(count);
      out.push_back(all);
    }
  }
  return out;
}

inline void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << kResultsSchema << '\n';
  out << "cell,trial,seed,model,status,normalized_spo,weighted_spo,weighted_mse,leaves,depth,note\n";
  for (const auto& r : rows) {
    std::string note = r.note;
    std::replace(note.begin(), note.end(), ',', ';');
    std::replace(note.begin(), note.end(), '\n', ' ');
    out << r.cell << ',' << r.trial << ',' << r.seed << ',' << r.model << ',' << r.status << ','
        << format_double(r.normalized_spo) << ',' << format_double(r.weighted_spo) << ','
        << format_double(r.weighted_mse) << ',' << r.leaves << ',' << r.depth << ',' << note << '\n';
  }
}

inline void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << "# spotree-summary v1\n";
  out << "cell,model,count,mean_normalized_spo,sd_normalized_spo,mean_leaves\n";
  for (const auto& s : rows)
    out << s.cell << ',' << s.model << ',' << s.count << ',' << format_double(s.mean) << ','
        << format_double(s.sd) << ',' << format_double(s.mean_leaves) << '\n';
}

inline void write_improvements_csv(const std::vector<ImprovementRow>& rows, std::ostream& out) {
  out << "# spotree-improvements v1\n";
  out << "cell,baseline,model,baseline_mean,model_mean,pct_improvement\n";
  for (const auto& r : rows)
    out << r.cell << ',' << r.baseline << ',' << r.model << ',' << format_double(r.baseline_mean) << ','
        << format_double(r.model_mean) << ',' << format_double(r.pct) << '\n';
}

inline nlohmann::json spec_to_json(const ExperimentSpec& s) {
  nlohmann::json j;
  j["experiment"] = s.id;
  j["n_values"] = s.n_values;
  j["degrees"] = s.degrees;
  j["noises"] = s.noises;
  j["depths"] = s.depths;
  j["unrestricted"] = s.unrestricted;
  std::vector<std::string> losses;
  for (LossKind k : s.losses) losses.emplace_back(to_string(k));
  j["losses"] = losses;
  j["exact_depths"] = s.exact_depths;
  j["forests"] = s.forests;
  j["forest_trees"] = s.forest_trees;
  j["bag_candidates"] = s.bag_candidates;
  j["trials"] = s.trials;
  j["test_size"] = s.test_size;
  j["p"] = s.p;
  j["min_leaf_weight"] = s.min_leaf_weight;
  j["quantiles"] = s.quantiles;
  j["validation_fraction"] = s.validation_fraction;
  j["prune"] = s.prune;
  j["tie_noise"] = s.tie_noise;
  j["seed"] = s.seed;
  return j;
}

inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentResult res;
  res.cells = experiment_cells(spec);
  const std::size_t jobs = res.cells.size() * spec.trials;
  std::vector<std::vector<ResultRow>> slots(jobs);
  parallel_for(jobs, spec.threads, [&](std::size_t job) {
    slots[job] = detail::run_cell_trial(spec, res.cells[job / spec.trials], job % spec.trials);
  });
  for (auto& s : slots)
    for (auto& r : s) res.rows.push_back(std::move(r));
  std::stable_sort(res.rows.begin(), res.rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.cell, a.trial, a.model) < std::tie(b.cell, b.trial, b.model);
  });
  res.summary = summarize(res.rows);
  res.improvements = improvements(res.summary);

  if (!spec.out_dir.empty()) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(spec.out_dir, ec);
    require(!ec, Errc::io_error, "cannot create output directory " + spec.out_dir);
    auto open = [&](const char* name) {
      std::ofstream f(fs::path(spec.out_dir) / name, std::ios::binary);
      require(bool(f), Errc::io_error, std::string("cannot write ") + name);
      return f;
    };
    {
      auto f = open("results.csv");
      write_results_csv(res.rows, f);
    }
    {
      auto f = open("summary.csv");
      write_summary_csv(res.summary, f);
    }
    {
      auto f = open("improvements.csv");
      write_improvements_csv(res.improvements, f);
    }
    nlohmann::json manifest = spec_to_json(spec);
    manifest["format"] = "spotree-experiment";
    manifest["version"] = 1;
    std::vector<std::string> ids;
    for (const auto& c : res.cells) ids.push_back(c.id);
    manifest["cells"] = ids;
    manifest["models"] = experiment_models(spec);
    save_json(manifest, (fs::path(spec.out_dir) / "manifest.json").string());
  }
  return res;
}

}  // namespace spotree
