#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "spotree/experiment.hpp"

using namespace spotree;

namespace {

ExperimentSpec tiny_grid_spec() {
  ExperimentSpec s;
  s.id = "grid-sp";
  s.n_values = {100};
  s.degrees = {2};
  s.noises = {0.25};
  s.depths = {1, 2};
  s.trials = 2;
  s.test_size = 100;
  s.seed = 77;
  return s;
}

std::string results_text(const ExperimentResult& r) {
  std::ostringstream ss;
  write_results_csv(r.rows, ss);
  return ss.str();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Experiment, OneRowPerModelForASingleCellTrial) {
  ExperimentSpec s = tiny_grid_spec();
  s.trials = 1;
  s.exact_depths = {1};
  s.forests = true;
  s.forest_trees = 3;
  const auto res = run_experiment(s);
  const auto models = experiment_models(s);
  EXPECT_EQ(models.size(), 9u);
  ASSERT_EQ(res.rows.size(), models.size());
  for (const auto& r : res.rows) {
    EXPECT_EQ(r.status, "ok") << r.model << " " << r.note;
    EXPECT_EQ(r.cell, "grid-sp/n=100/deg=2/eps=0.25");
    EXPECT_GE(r.normalized_spo, 0.0);
    EXPECT_GE(r.leaves, 1u);
  }
}

TEST(Experiment, CellsCoverTheGrid) {
  ExperimentSpec s;
  s.n_values = {200, 10000};
  const auto cells = experiment_cells(s);
  ASSERT_EQ(cells.size(), 8u);
  EXPECT_EQ(cells[0].id, "grid-sp/n=200/deg=2/eps=0");
  EXPECT_EQ(cells[3].id, "grid-sp/n=200/deg=10/eps=0.25");
  EXPECT_EQ(experiment_cells(preset_spec("two-edge"))[0].id, "two-edge/n=10000/eps=0");
}

TEST(Experiment, SameSeedSameBytesRegardlessOfThreads) {
  ExperimentSpec s = tiny_grid_spec();
  s.noises = {0.0, 0.25};
  const std::string a = results_text(run_experiment(s));
  s.threads = 3;
  EXPECT_EQ(results_text(run_experiment(s)), a);
  s.seed = 78;
  EXPECT_NE(results_text(run_experiment(s)), a);
}

TEST(Experiment, TrialSeedsAreIndependentPerCell) {
  EXPECT_EQ(trial_seed(1, "a", 0), trial_seed(1, "a", 0));
  EXPECT_NE(trial_seed(1, "a", 0), trial_seed(1, "a", 1));
  EXPECT_NE(trial_seed(1, "a", 0), trial_seed(1, "b", 0));
  EXPECT_NE(trial_seed(1, "a", 0), trial_seed(2, "a", 0));
}

// Summary and improvement figures recomputed from the raw rows.
TEST(Experiment, SummaryMatchesAnIndependentAggregation) {
  ExperimentSpec s = tiny_grid_spec();
  s.trials = 3;
  s.noises = {0.0, 0.5};
  const auto res = run_experiment(s);
  for (const auto& sum : res.summary) {
    std::vector<double> v;
    for (const auto& r : res.rows)
      if (r.cell == sum.cell && r.model == sum.model && r.status == "ok") v.push_back(r.normalized_spo);
    ASSERT_EQ(v.size(), sum.count);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size() - 1);
    EXPECT_NEAR(sum.mean, mean, 1e-12);
    EXPECT_NEAR(sum.sd, std::sqrt(var), 1e-12);
  }
  std::size_t all_rows = 0;
  for (const auto& imp : res.improvements) {
    if (imp.cell == "ALL") {
      ++all_rows;
      double total = 0.0;
      int count = 0;
      for (const auto& other : res.improvements)
        if (other.cell != "ALL" && other.model == imp.model && other.baseline == imp.baseline) {
          total += other.pct;
          ++count;
        }
      EXPECT_NEAR(imp.pct, total / count, 1e-9);
      continue;
    }
    EXPECT_NEAR(imp.pct, (imp.baseline_mean - imp.model_mean) / imp.baseline_mean * 100.0, 1e-9);
  }
  EXPECT_EQ(all_rows, 3u);  // depths 1, 2 and unrestricted
}

TEST(Experiment, OversizedExactIsSkippedAndFailuresAreRecorded) {
  ExperimentSpec s = tiny_grid_spec();
  s.trials = 1;
  s.depths = {1};
  s.unrestricted = false;
  s.losses = {LossKind::spo};
  s.exact_depths = {3};
  const auto res = run_experiment(s);
  ASSERT_EQ(res.rows.size(), 2u);
  EXPECT_EQ(res.rows[0].model, "exact_d3");
  EXPECT_EQ(res.rows[0].status, "skipped");
  EXPECT_EQ(res.rows[1].status, "ok");

  s.exact_depths.clear();
  s.min_leaf_weight = 1000;
  const auto failed = run_experiment(s);
  ASSERT_EQ(failed.rows.size(), 1u);
  EXPECT_EQ(failed.rows[0].status, "error");
  EXPECT_FALSE(failed.rows[0].note.empty());
}

TEST(Experiment, WritesVersionedFiles) {
  ExperimentSpec s = tiny_grid_spec();
  s.trials = 1;
  const auto dir = std::filesystem::temp_directory_path() / "spotree_experiment_test";
  std::filesystem::remove_all(dir);
  s.out_dir = dir.string();
  const auto res = run_experiment(s);
  const std::string results = slurp(dir / "results.csv");
  EXPECT_EQ(results, results_text(res));
  EXPECT_EQ(results.rfind(kResultsSchema, 0), 0u);
  EXPECT_TRUE(std::filesystem::exists(dir / "summary.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "improvements.csv"));
  const auto manifest = load_json((dir / "manifest.json").string());
  EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), 77u);
  std::filesystem::remove_all(dir);
}

TEST(Experiment, NewsRunsWithWeights) {
  ExperimentSpec s = preset_spec("news");
  s.n_values = {300};
  s.test_size = 100;
  s.trials = 1;
  s.depths = {1};
  s.unrestricted = false;
  s.min_leaf_weight = 500;
  const auto res = run_experiment(s);
  ASSERT_EQ(res.rows.size(), 2u);
  for (const auto& r : res.rows) EXPECT_EQ(r.status, "ok") << r.note;
}

TEST(Experiment, RejectsInvalidSpecs) {
  ExperimentSpec s = tiny_grid_spec();
  s.id = "nope";
  EXPECT_THROW(run_experiment(s), Error);
  s = tiny_grid_spec();
  s.trials = 0;
  EXPECT_THROW(run_experiment(s), Error);
  s = tiny_grid_spec();
  s.n_values.clear();
  EXPECT_THROW(run_experiment(s), Error);
}
