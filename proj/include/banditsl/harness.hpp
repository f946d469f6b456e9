#pragma once

// The training loop: per round, a strategy picks a class, batches are drawn
// from it, the learner takes one step, and the validation-loss drop is the
// reward. The bandit strategy feeds rewards into the time-varying GP;
// baselines pick uniformly or round-robin over the most frequent classes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "banditsl/bandit.hpp"
#include "banditsl/data.hpp"
#include "banditsl/kernel.hpp"
#include "banditsl/learner.hpp"
#include "banditsl/ranking.hpp"
#include "banditsl/types.hpp"

namespace banditsl {

enum class StrategyKind { Bandit, Uniform, FrequencyTopN };

struct Strategy {
  StrategyKind kind = StrategyKind::Bandit;
  int top_n = 0;  // FrequencyTopN only
};

Strategy parse_strategy(const std::string& text);  // "bandit" | "uniform" | "freq:<N>"
std::string to_string(const Strategy& strategy);

struct LearnerConfig {
  std::string type = "logistic";  // logistic | mlp
  double learning_rate = 0.05;
  int hidden_units = 64;  // mlp only
};

struct RunConfig {
  // exactly one of dataset_path / synthetic
  std::optional<std::string> dataset_path;
  std::optional<SyntheticConfig> synthetic;
  // word2vec text file for file datasets; "synthetic" when generated
  std::string embeddings = "synthetic";

  KernelConfig<double> kernel;
  double beta = 2.0;
  double epsilon = 0.01;
  double sigma_f = 0.1;
  std::size_t window_cap = 500;

  LearnerConfig learner;
  int train_batch = 32;
  int val_batch = 64;
  double predict_threshold = 0.5;

  Timestep ranking_interval = 20;
  double convergence_threshold = 0.05;
  bool stop_on_convergence = true;
  Timestep max_rounds = 1000;
  std::uint64_t seed = 1;
  Strategy strategy;

  void validate() const;  // throws ConfigError
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& config);

struct PreparedData {
  LabeledDataset dataset;
  ArmSet arms;
  std::set<std::string> clean_class_ids;  // empty when unknown
};

// Generates or loads the dataset and the arm embeddings named by the config.
PreparedData prepare_data(const RunConfig& config);

struct F1Stats {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Per-class precision/recall/F1 over the test split; zero-denominator cases
// report 0.
std::map<std::string, F1Stats> compute_per_class_f1(const Learner& learner,
                                                    const VectorXd& params,
                                                    const LabeledDataset& dataset,
                                                    double threshold);

double macro_f1(const std::map<std::string, F1Stats>& stats,
                const std::set<std::string>& classes);

struct RunArtifacts {
  PullHistory pulls;
  std::vector<double> reward_trace;
  std::vector<RankingSnapshot> ranking_snapshots;
  Ranking final_ranking;
  VectorXd final_params;
  std::map<std::string, F1Stats> per_class_f1;
  std::optional<Timestep> convergence_round;
  Timestep rounds_executed = 0;
  std::vector<std::string> class_ids;
  std::vector<std::string> f1_order;  // rank order (bandit) or frequency order (baselines)
  std::string strategy_label;
  std::uint64_t seed = 0;
  LearnerConfig learner_config;
  int feature_dim = 0;
  std::vector<std::string> clean_class_ids;
};

RunArtifacts run_training(const RunConfig& config);
RunArtifacts run_training(const RunConfig& config, const PreparedData& data);

enum class ReportFormat { Csv, Json, All };

// Writes pulls.csv, rewards.csv, ranking.csv, f1.csv (CSV family),
// rankings.json, history.json, run.json (JSON family), and params.bin with
// its params.json sidecar.
void emit_report(const RunArtifacts& artifacts, const std::filesystem::path& out_dir,
                 ReportFormat format = ReportFormat::All);

struct MultiRunResult {
  std::vector<RunArtifacts> runs;       // completed runs, in seed order
  std::vector<std::string> failures;    // per-run error reports
  Ranking average;                      // mean pull counts across completed runs
};

// S independent runs with seeds config.seed + s; runs execute concurrently.
MultiRunResult run_multi(const RunConfig& config, int num_runs);

}  // namespace banditsl
