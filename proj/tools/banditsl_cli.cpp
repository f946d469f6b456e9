// banditsl command line: generate synthetic benchmarks, run single or
// multi-run training, aggregate rankings from stored pull histories, and
// evaluate saved learner parameters.
//
// Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "banditsl/errors.hpp"
#include "banditsl/harness.hpp"

namespace fs = std::filesystem;
using namespace banditsl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return j;
}

// The generate command accepts either a bare synthetic block or a full run
// config whose dataset is synthetic.
SyntheticConfig synthetic_from_config_file(const fs::path& path) {
  const nlohmann::json j = read_json_file(path);
  if (j.contains("num_clean_classes") || j.contains("instances_per_class")) {
    RunConfig wrapper;  // reuse the validating parser
    nlohmann::json run;
    run["dataset"]["synthetic"] = j;
    wrapper = parse_run_config(run);
    return *wrapper.synthetic;
  }
  if (j.contains("synthetic")) {
    nlohmann::json run;
    run["dataset"]["synthetic"] = j.at("synthetic");
    return *parse_run_config(run).synthetic;
  }
  const RunConfig config = parse_run_config(j);
  if (!config.synthetic)
    throw ConfigError(path.string() + ": no synthetic dataset block to generate from");
  return *config.synthetic;
}

int cmd_generate(const fs::path& config_path, const fs::path& out_dir) {
  const SyntheticConfig config = synthetic_from_config_file(config_path);
  const SyntheticData data = generate_synthetic(config);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  save_dataset(data.dataset, out_dir / "dataset.jsonl");
  std::map<std::string, VectorXd> embeddings;
  for (const Arm& arm : data.arms.arms()) embeddings[arm.id] = arm.embedding;
  save_embeddings(embeddings, out_dir / "embeddings.txt");

  nlohmann::json clean = nlohmann::json::array();
  for (const std::string& id : data.clean_class_ids) clean.push_back(id);
  std::ofstream out(out_dir / "clean_classes.json");
  if (!out) throw IoError("cannot write " + (out_dir / "clean_classes.json").string());
  out << clean.dump(2) << '\n';

  std::cout << "wrote " << data.dataset.size() << " instances, "
            << data.dataset.num_classes() << " classes to " << out_dir.string() << '\n';
  return kExitOk;
}

int cmd_run(const fs::path& config_path, const fs::path& out_dir,
            const std::optional<std::string>& strategy, const std::optional<std::uint64_t>& seed) {
  RunConfig config = load_run_config(config_path);
  if (strategy) config.strategy = parse_strategy(*strategy);
  if (seed) config.seed = *seed;
  config.validate();

  const RunArtifacts artifacts = run_training(config);
  emit_report(artifacts, out_dir);

  std::cout << "strategy=" << artifacts.strategy_label << " seed=" << artifacts.seed
            << " rounds=" << artifacts.rounds_executed;
  if (artifacts.convergence_round)
    std::cout << " converged_at=" << *artifacts.convergence_round;
  else
    std::cout << " converged_at=never";
  std::cout << " out=" << out_dir.string() << '\n';
  return kExitOk;
}

int cmd_multirun(const fs::path& config_path, int runs, const fs::path& out_dir) {
  const RunConfig config = load_run_config(config_path);
  const MultiRunResult result = run_multi(config, runs);

  for (std::size_t s = 0; s < result.runs.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof(name), "run_%03zu", s);
    emit_report(result.runs[s], out_dir / name);
  }
  write_ranking_csv(out_dir / "average_ranking.csv", result.average, "mean_pull_count");
  write_ranking_json(out_dir / "average_ranking.json", result.average, "mean_pull_count");

  for (const std::string& failure : result.failures) std::cerr << "FAILED: " << failure << '\n';
  std::cout << "completed " << result.runs.size() << "/" << runs << " runs, average ranking in "
            << out_dir.string() << '\n';
  if (!result.failures.empty()) return kExitNumeric;
  return kExitOk;
}

int cmd_rank(const std::vector<std::string>& run_dirs, const std::optional<fs::path>& out_path) {
  std::vector<PullHistory> histories;
  std::vector<std::string> class_ids;
  for (const std::string& dir : run_dirs) {
    const fs::path run_json = fs::path(dir) / "run.json";
    const nlohmann::json j = read_json_file(run_json);
    std::vector<std::string> classes;
    try {
      classes = j.at("classes").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(run_json.string() + ": " + e.what());
    }
    std::sort(classes.begin(), classes.end());
    if (class_ids.empty()) {
      class_ids = classes;
    } else if (classes != class_ids) {
      throw DataError(dir + ": class set differs from previous runs");
    }
    histories.push_back(read_pulls_csv(fs::path(dir) / "pulls.csv"));
  }
  const Ranking average = average_ranking(histories, class_ids);

  std::cout << "rank,class_id,mean_pull_count\n";
  for (std::size_t i = 0; i < average.order.size(); ++i) {
    std::cout << (i + 1) << ',' << average.order[i] << ','
              << average.counts.at(average.order[i]) << '\n';
  }
  if (out_path) write_ranking_csv(*out_path, average, "mean_pull_count");
  return kExitOk;
}

int cmd_eval(const fs::path& params_path, const fs::path& dataset_path, double threshold) {
  const LoadedLearner loaded = load_params(params_path);
  const LabeledDataset dataset = load_dataset(dataset_path);
  if (dataset.num_classes() != loaded.learner->num_classes() ||
      dataset.feature_dim() != loaded.learner->feature_dim()) {
    std::ostringstream msg;
    msg << "dataset shape (" << dataset.num_classes() << " classes, " << dataset.feature_dim()
        << " features) does not match saved learner (" << loaded.learner->num_classes() << ", "
        << loaded.learner->feature_dim() << ")";
    throw DataError(msg.str());
  }
  const auto stats = compute_per_class_f1(*loaded.learner, loaded.params, dataset, threshold);
  std::cout << "class_id,precision,recall,f1\n";
  for (const auto& [id, s] : stats) {
    std::cout << id << ',' << s.precision << ',' << s.recall << ',' << s.f1 << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bandit-supervised training: learnability-driven class selection"};
  app.require_subcommand(1);

  std::string config_path, out_dir, strategy_text, params_path, dataset_path;
  std::vector<std::string> run_dirs;
  std::string rank_out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int runs = 10;
  double threshold = 0.5;

  auto* generate = app.add_subcommand("generate", "write a synthetic dataset and embeddings");
  generate->add_option("--config", config_path, "config file (synthetic block or run config)")
      ->required();
  generate->add_option("--out", out_dir, "output directory")->required();

  auto* run = app.add_subcommand("run", "execute one training run");
  run->add_option("--config", config_path, "run config file")->required();
  run->add_option("--out", out_dir, "output directory for artifacts")->required();
  run->add_option("--strategy", strategy_text, "override strategy: bandit|uniform|freq:<N>");
  run->add_option("--seed", seed, "override seed")->each([&](const std::string&) { seed_set = true; });

  auto* multirun = app.add_subcommand("multirun", "execute S runs and average their rankings");
  multirun->add_option("--config", config_path, "run config file")->required();
  multirun->add_option("--runs", runs, "number of runs")->required();
  multirun->add_option("--out", out_dir, "output directory")->required();

  auto* rank = app.add_subcommand("rank", "average ranking from stored run directories");
  rank->add_option("--runs", run_dirs, "run directories (each with run.json and pulls.csv)")
      ->required()
      ->expected(-1);
  rank->add_option("--out", rank_out, "also write the ranking CSV here");

  auto* eval = app.add_subcommand("eval", "per-class F1 of saved parameters on a dataset");
  eval->add_option("--params", params_path, "params.bin path (sidecar .json alongside)")
      ->required();
  eval->add_option("--dataset", dataset_path, "dataset JSON-lines file")->required();
  eval->add_option("--threshold", threshold, "prediction threshold in (0,1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (generate->parsed()) return cmd_generate(config_path, out_dir);
    if (run->parsed()) {
      return cmd_run(config_path, out_dir,
                     strategy_text.empty() ? std::nullopt : std::optional(strategy_text),
                     seed_set ? std::optional(seed) : std::nullopt);
    }
    if (multirun->parsed()) {
      if (runs < 1) throw ConfigError("--runs must be positive");
      return cmd_multirun(config_path, runs, out_dir);
    }
    if (rank->parsed()) {
      return cmd_rank(run_dirs,
                      rank_out.empty() ? std::nullopt : std::optional<fs::path>(rank_out));
    }
    if (eval->parsed()) return cmd_eval(params_path, dataset_path, threshold);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ContractViolation& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitConfig;
}
