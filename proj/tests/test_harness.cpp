#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "banditsl/errors.hpp"
#include "banditsl/harness.hpp"
#include "test_util.hpp"

using namespace banditsl;
using testutil::vec;

namespace {

namespace fs = std::filesystem;

RunConfig tiny_config() {
  RunConfig config;
  SyntheticConfig synthetic;
  synthetic.num_clean_classes = 4;
  synthetic.num_noise_classes = 2;
  synthetic.instances_per_class = 30;
  synthetic.feature_dim = 8;
  synthetic.embedding_dim = 4;
  synthetic.prototype_noise_sigma = 0.3;
  synthetic.seed = 5;
  config.synthetic = synthetic;
  config.learner.learning_rate = 0.1;
  config.train_batch = 8;
  config.val_batch = 16;
  config.ranking_interval = 10;
  config.max_rounds = 60;
  config.window_cap = 100;
  config.seed = 1;
  return config;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("strategy parsing") {
  CHECK(parse_strategy("bandit").kind == StrategyKind::Bandit);
  CHECK(parse_strategy("uniform").kind == StrategyKind::Uniform);
  const Strategy freq = parse_strategy("freq:32");
  CHECK(freq.kind == StrategyKind::FrequencyTopN);
  CHECK(freq.top_n == 32);
  CHECK(to_string(freq) == "freq:32");
  CHECK_THROWS_AS(parse_strategy("freq:0"), ConfigError);
  CHECK_THROWS_AS(parse_strategy("freq:x"), ConfigError);
  CHECK_THROWS_AS(parse_strategy("greedy"), ConfigError);
}

TEST_CASE("run config JSON round-trip and validation") {
  const RunConfig config = tiny_config();
  const RunConfig parsed = parse_run_config(run_config_to_json(config));
  CHECK(parsed.synthetic->num_clean_classes == 4);
  CHECK(parsed.max_rounds == 60);
  CHECK(parsed.learner.learning_rate == 0.1);
  CHECK(parsed.kernel.family == KernelFamily::Matern52);

  RunConfig bad = tiny_config();
  bad.max_rounds = 5;  // below ranking_interval
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_config();
  bad.epsilon = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_config();
  bad.synthetic.reset();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_config();
  bad.embeddings = "some/path.txt";  // synthetic datasets carry their own
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  nlohmann::json j = run_config_to_json(tiny_config());
  j["learner"]["type"] = "transformer";
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
}

TEST_CASE("max_rounds 1 executes exactly one pull") {
  RunConfig config = tiny_config();
  config.ranking_interval = 1;
  config.max_rounds = 1;
  const RunArtifacts artifacts = run_training(config);
  CHECK(artifacts.rounds_executed == 1);
  CHECK(artifacts.pulls.size() == 1);
  CHECK(artifacts.reward_trace.size() == 1);
  CHECK_FALSE(artifacts.convergence_round.has_value());  // single snapshot cannot converge
}

TEST_CASE("identical configs and seeds reproduce identical artifacts") {
  const RunConfig config = tiny_config();
  const RunArtifacts a = run_training(config);
  const RunArtifacts b = run_training(config);
  REQUIRE(a.pulls.size() == b.pulls.size());
  for (std::size_t i = 0; i < a.pulls.size(); ++i) {
    CHECK(a.pulls.pulls[i].t == b.pulls.pulls[i].t);
    CHECK(a.pulls.pulls[i].class_id == b.pulls.pulls[i].class_id);
    CHECK(a.pulls.pulls[i].reward == b.pulls.pulls[i].reward);
  }
  CHECK((a.final_params.array() == b.final_params.array()).all());
  CHECK(a.final_ranking.order == b.final_ranking.order);
}

TEST_CASE("strategies execute identical update budgets when stopping is disabled") {
  RunConfig config = tiny_config();
  config.stop_on_convergence = false;
  for (const char* strategy : {"bandit", "uniform", "freq:3"}) {
    config.strategy = parse_strategy(strategy);
    const RunArtifacts artifacts = run_training(config);
    CHECK(artifacts.rounds_executed == config.max_rounds);
    CHECK(artifacts.reward_trace.size() == static_cast<std::size_t>(config.max_rounds));
  }
}

TEST_CASE("convergence halts the loop with no further pulls") {
  RunConfig config = tiny_config();
  config.max_rounds = 2000;
  const RunArtifacts artifacts = run_training(config);
  if (artifacts.convergence_round) {
    CHECK(artifacts.rounds_executed == *artifacts.convergence_round);
    CHECK(artifacts.pulls.pulls.back().t == *artifacts.convergence_round);
  }
}

TEST_CASE("frequency strategy cycles over the most frequent classes") {
  RunConfig config = tiny_config();
  config.strategy = parse_strategy("freq:2");
  config.stop_on_convergence = false;
  config.max_rounds = 20;
  const RunArtifacts artifacts = run_training(config);
  // equal class frequencies tie-break lexicographically
  std::set<std::string> used;
  for (const Pull& pull : artifacts.pulls.pulls) used.insert(pull.class_id);
  CHECK(used == std::set<std::string>{"class_000", "class_001"});
  CHECK(artifacts.pulls.pulls[0].class_id == "class_000");
  CHECK(artifacts.pulls.pulls[1].class_id == "class_001");
  CHECK(artifacts.pulls.pulls[2].class_id == "class_000");
}

TEST_CASE("with beta large every arm is tried within the first |arms| pulls") {
  RunConfig config = tiny_config();
  config.synthetic->num_clean_classes = 6;
  config.synthetic->num_noise_classes = 4;
  config.synthetic->embedding_dim = 8;
  config.beta = 1e6;  // variance term dominates every observed mean
  config.epsilon = 0.0;
  config.stop_on_convergence = false;
  config.max_rounds = 10;
  config.ranking_interval = 10;
  const RunArtifacts artifacts = run_training(config);
  std::set<std::string> seen;
  for (const Pull& pull : artifacts.pulls.pulls) seen.insert(pull.class_id);
  CHECK(seen.size() == 10);
}

TEST_CASE("per-class F1 on hand-built predictions") {
  // learner that predicts class a for everything, never class b
  std::vector<Instance> instances;
  instances.push_back({"t0", vec({1.0}), {"a"}, Split::Train});
  instances.push_back({"v0", vec({1.0}), {"a"}, Split::Val});
  instances.push_back({"t1", vec({1.0}), {"b"}, Split::Train});
  instances.push_back({"v1", vec({1.0}), {"b"}, Split::Val});
  // test: a-positive x2 + one a-or-b multi-label + one pure b
  instances.push_back({"e0", vec({1.0}), {"a"}, Split::Test});
  instances.push_back({"e1", vec({1.0}), {"a", "b"}, Split::Test});
  instances.push_back({"e2", vec({1.0}), {"b"}, Split::Test});
  const LabeledDataset dataset = LabeledDataset::from_instances(std::move(instances));

  const LogisticLearner learner(2, 1, 0.1);
  VectorXd params = VectorXd::Zero(learner.param_count());
  params(2) = 50.0;   // bias a: always predicted
  params(3) = -50.0;  // bias b: never predicted
  const auto stats = compute_per_class_f1(learner, params, dataset, 0.5);
  // class a: TP=2, FP=1, FN=0 -> P=2/3, R=1, F1=0.8
  CHECK(stats.at("a").precision == doctest::Approx(2.0 / 3.0));
  CHECK(stats.at("a").recall == doctest::Approx(1.0));
  CHECK(stats.at("a").f1 == doctest::Approx(0.8));
  // class b: no predicted positives -> all zero by convention
  CHECK(stats.at("b").precision == 0.0);
  CHECK(stats.at("b").recall == 0.0);
  CHECK(stats.at("b").f1 == 0.0);
}

TEST_CASE("per-class F1 is 1.0 under perfect predictions") {
  std::vector<Instance> instances;
  instances.push_back({"t0", vec({1.0, 0.0}), {"a"}, Split::Train});
  instances.push_back({"v0", vec({1.0, 0.0}), {"a"}, Split::Val});
  instances.push_back({"t1", vec({0.0, 1.0}), {"b"}, Split::Train});
  instances.push_back({"v1", vec({0.0, 1.0}), {"b"}, Split::Val});
  instances.push_back({"e0", vec({1.0, 0.0}), {"a"}, Split::Test});
  instances.push_back({"e1", vec({0.0, 1.0}), {"b"}, Split::Test});
  const LabeledDataset dataset = LabeledDataset::from_instances(std::move(instances));

  const LogisticLearner learner(2, 2, 0.1);
  VectorXd params(learner.param_count());
  // W = [[100,-100],[-100,100]], b = [-50,-50]: exact diagonal prediction
  params << 100.0, -100.0, -100.0, 100.0, -50.0, -50.0;
  const auto stats = compute_per_class_f1(learner, params, dataset, 0.5);
  CHECK(stats.at("a").f1 == 1.0);
  CHECK(stats.at("b").f1 == 1.0);
  CHECK(macro_f1(stats, {"a", "b"}) == 1.0);
}

TEST_CASE("per-class F1 worked example: TP=2 FP=1 FN=1") {
  std::vector<Instance> instances;
  instances.push_back({"t0", vec({1.0}), {"a"}, Split::Train});
  instances.push_back({"v0", vec({1.0}), {"a"}, Split::Val});
  // predictor below says "a" iff feature > 0
  instances.push_back({"e0", vec({1.0}), {"a"}, Split::Test});   // TP
  instances.push_back({"e1", vec({1.0}), {"a"}, Split::Test});   // TP
  instances.push_back({"e2", vec({1.0}), {}, Split::Test});      // FP
  instances.push_back({"e3", vec({-1.0}), {"a"}, Split::Test});  // FN
  const LabeledDataset dataset = LabeledDataset::from_instances(std::move(instances));

  const LogisticLearner learner(1, 1, 0.1);
  VectorXd params(learner.param_count());
  params << 100.0, 0.0;
  const auto stats = compute_per_class_f1(learner, params, dataset, 0.5);
  CHECK(stats.at("a").precision == doctest::Approx(2.0 / 3.0));
  CHECK(stats.at("a").recall == doctest::Approx(2.0 / 3.0));
  CHECK(stats.at("a").f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("emit_report writes the full artifact set") {
  TempDir dir("banditsl_report_test");
  RunConfig config = tiny_config();
  config.max_rounds = 20;
  config.stop_on_convergence = false;
  const RunArtifacts artifacts = run_training(config);
  emit_report(artifacts, dir.path);

  for (const char* name : {"pulls.csv", "rewards.csv", "ranking.csv", "f1.csv",
                           "rankings.json", "history.json", "run.json", "params.bin",
                           "params.json"}) {
    CHECK(fs::exists(dir.path / name));
  }

  // pull counts recovered from the emitted CSV match the artifacts exactly
  const PullHistory loaded = read_pulls_csv(dir.path / "pulls.csv");
  CHECK(pull_counts(loaded) == pull_counts(artifacts.pulls));

  // f1.csv row count = classes + header
  std::ifstream f1(dir.path / "f1.csv");
  std::string line;
  int rows = 0;
  while (std::getline(f1, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 1 + static_cast<int>(artifacts.class_ids.size()));

  // saved parameters load back into a usable learner
  const LoadedLearner loaded_params = load_params(dir.path / "params.bin");
  CHECK(loaded_params.learner->num_classes() == 6);
  CHECK((loaded_params.params.array() == artifacts.final_params.array()).all());
}

TEST_CASE("emit_report on an empty artifact writes header-only CSVs") {
  TempDir dir("banditsl_empty_report");
  RunArtifacts artifacts;
  artifacts.strategy_label = "bandit";
  emit_report(artifacts, dir.path);
  for (const char* name : {"pulls.csv", "ranking.csv", "f1.csv"}) {
    std::ifstream in(dir.path / name);
    std::string header, rest;
    CHECK(static_cast<bool>(std::getline(in, header)));
    CHECK_FALSE(static_cast<bool>(std::getline(in, rest)));
  }
  CHECK_FALSE(fs::exists(dir.path / "params.bin"));  // nothing to save
}

TEST_CASE("run_multi averages rankings across seeds") {
  RunConfig config = tiny_config();
  config.max_rounds = 30;
  config.stop_on_convergence = false;
  const MultiRunResult result = run_multi(config, 3);
  REQUIRE(result.runs.size() == 3);
  CHECK(result.failures.empty());
  CHECK(result.runs[0].seed == 1);
  CHECK(result.runs[2].seed == 3);
  CHECK(result.average.size() == 6);

  // single run: average equals that run's ranking
  const MultiRunResult single = run_multi(config, 1);
  CHECK(single.average.order == single.runs[0].final_ranking.order);

  // mean counts match a direct recomputation
  std::vector<PullHistory> histories;
  for (const RunArtifacts& run : result.runs) histories.push_back(run.pulls);
  std::vector<std::string> classes = result.runs[0].class_ids;
  const Ranking direct = average_ranking(histories, classes);
  CHECK(direct.order == result.average.order);
}

TEST_CASE("run_multi matches sequential single runs") {
  RunConfig config = tiny_config();
  config.max_rounds = 20;
  config.stop_on_convergence = false;
  const MultiRunResult multi = run_multi(config, 2);

  const PreparedData data = prepare_data(config);
  for (int s = 0; s < 2; ++s) {
    RunConfig single = config;
    single.seed = config.seed + static_cast<std::uint64_t>(s);
    const RunArtifacts expected = run_training(single, data);
    const RunArtifacts& actual = multi.runs[static_cast<std::size_t>(s)];
    REQUIRE(actual.pulls.size() == expected.pulls.size());
    for (std::size_t i = 0; i < expected.pulls.size(); ++i) {
      CHECK(actual.pulls.pulls[i].class_id == expected.pulls.pulls[i].class_id);
      CHECK(actual.pulls.pulls[i].reward == expected.pulls.pulls[i].reward);
    }
  }
}

TEST_CASE("prepare_data joins file datasets with embeddings") {
  TempDir dir("banditsl_prepare_test");
  const auto dataset_path = dir.path / "data.jsonl";
  const auto embeddings_path = dir.path / "emb.txt";
  {
    std::ofstream out(dataset_path);
    out << R"({"id":"i0","features":[1,0],"labels":["a"],"split":"train"})" << "\n"
        << R"({"id":"i1","features":[0,1],"labels":["a"],"split":"val"})" << "\n"
        << R"({"id":"i2","features":[1,1],"labels":["b"],"split":"train"})" << "\n"
        << R"({"id":"i3","features":[0,0],"labels":["b"],"split":"val"})" << "\n";
  }
  {
    std::ofstream out(embeddings_path);
    out << "a 1 0 0\nb 0 1 0\n";
  }
  RunConfig config;
  config.dataset_path = dataset_path.string();
  config.embeddings = embeddings_path.string();
  config.ranking_interval = 1;
  config.max_rounds = 2;
  const PreparedData data = prepare_data(config);
  CHECK(data.dataset.size() == 4);
  CHECK(data.arms.size() == 2);
  CHECK(data.clean_class_ids.empty());

  // a class without an embedding is a data error naming the class
  {
    std::ofstream out(embeddings_path);
    out << "a 1 0 0\n";
  }
  try {
    prepare_data(config);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
}
