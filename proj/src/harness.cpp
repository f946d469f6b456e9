#include "banditsl/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "banditsl/errors.hpp"
#include "banditsl/gp.hpp"

namespace banditsl {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// classes ordered by training-set frequency, most frequent first, ties by id
std::vector<std::string> frequency_order(const LabeledDataset& dataset) {
  std::vector<std::pair<std::string, std::size_t>> freq;
  for (const std::string& id : dataset.class_ids())
    freq.emplace_back(id, dataset.class_instances(id, Split::Train).size());
  std::sort(freq.begin(), freq.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> order;
  order.reserve(freq.size());
  for (auto& [id, count] : freq) order.push_back(std::move(id));
  return order;
}

}  // namespace

Strategy parse_strategy(const std::string& text) {
  if (text == "bandit") return {StrategyKind::Bandit, 0};
  if (text == "uniform") return {StrategyKind::Uniform, 0};
  if (text.rfind("freq:", 0) == 0) {
    int n = 0;
    try {
      std::size_t used = 0;
      n = std::stoi(text.substr(5), &used);
      if (used != text.size() - 5) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ConfigError("strategy '" + text + "': expected freq:<N> with integer N");
    }
    if (n < 1) throw ConfigError("strategy '" + text + "': N must be positive");
    return {StrategyKind::FrequencyTopN, n};
  }
  throw ConfigError("unknown strategy '" + text + "' (expected bandit|uniform|freq:<N>)");
}

std::string to_string(const Strategy& strategy) {
  switch (strategy.kind) {
    case StrategyKind::Bandit: return "bandit";
    case StrategyKind::Uniform: return "uniform";
    case StrategyKind::FrequencyTopN: return "freq:" + std::to_string(strategy.top_n);
  }
  return "unknown";
}

void RunConfig::validate() const {
  if (dataset_path.has_value() == synthetic.has_value())
    throw ConfigError("config: exactly one of 'dataset' path or synthetic block is required");
  if (synthetic) {
    if (embeddings != "synthetic")
      throw ConfigError("config: synthetic datasets carry their own embeddings; "
                        "set embeddings to \"synthetic\"");
    try {
      synthetic->validate();
    } catch (const ContractViolation& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  } else if (embeddings == "synthetic") {
    throw ConfigError("config: file datasets need an embeddings file path");
  }
  try {
    kernel.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!(beta >= 0)) throw ConfigError("config: beta must be nonnegative");
  if (!(epsilon >= 0 && epsilon <= 1)) throw ConfigError("config: epsilon must lie in [0, 1]");
  if (!(sigma_f > 0)) throw ConfigError("config: sigma_f must be positive");
  if (window_cap < 1) throw ConfigError("config: window_cap must be positive");
  if (learner.type != "logistic" && learner.type != "mlp")
    throw ConfigError("config: learner type must be logistic or mlp");
  if (!(learner.learning_rate >= 0))
    throw ConfigError("config: learning_rate must be nonnegative");
  if (learner.hidden_units < 1) throw ConfigError("config: hidden_units must be positive");
  if (train_batch < 1 || val_batch < 1)
    throw ConfigError("config: batch sizes must be positive");
  if (!(predict_threshold > 0 && predict_threshold < 1))
    throw ConfigError("config: predict_threshold must lie in (0, 1)");
  if (ranking_interval < 1) throw ConfigError("config: ranking_interval must be positive");
  if (!(convergence_threshold >= 0 && convergence_threshold <= 1))
    throw ConfigError("config: convergence_threshold must lie in [0, 1]");
  if (max_rounds < ranking_interval)
    throw ConfigError("config: max_rounds must be at least ranking_interval");
}

namespace {

SyntheticConfig parse_synthetic_config(const nlohmann::json& j) {
  SyntheticConfig config;
  try {
    config.num_clean_classes = j.value("num_clean_classes", config.num_clean_classes);
    config.num_noise_classes = j.value("num_noise_classes", config.num_noise_classes);
    config.instances_per_class = j.value("instances_per_class", config.instances_per_class);
    config.feature_dim = j.value("feature_dim", config.feature_dim);
    config.embedding_dim = j.value("embedding_dim", config.embedding_dim);
    config.prototype_noise_sigma = j.value("prototype_noise_sigma", config.prototype_noise_sigma);
    config.random_embeddings = j.value("random_embeddings", config.random_embeddings);
    config.seed = j.value("seed", config.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: synthetic block: ") + e.what());
  }
  return config;
}

nlohmann::json synthetic_config_to_json(const SyntheticConfig& config) {
  nlohmann::json j;
  j["num_clean_classes"] = config.num_clean_classes;
  j["num_noise_classes"] = config.num_noise_classes;
  j["instances_per_class"] = config.instances_per_class;
  j["feature_dim"] = config.feature_dim;
  j["embedding_dim"] = config.embedding_dim;
  j["prototype_noise_sigma"] = config.prototype_noise_sigma;
  j["random_embeddings"] = config.random_embeddings;
  j["seed"] = config.seed;
  return j;
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig config;
  try {
    if (j.contains("dataset")) {
      const auto& dataset = j.at("dataset");
      if (dataset.is_string()) {
        config.dataset_path = dataset.get<std::string>();
      } else if (dataset.is_object() && dataset.contains("synthetic")) {
        config.synthetic = parse_synthetic_config(dataset.at("synthetic"));
      } else {
        throw ConfigError("config: 'dataset' must be a path or {\"synthetic\": {...}}");
      }
    }
    config.embeddings = j.value("embeddings", config.embeddings);
    if (j.contains("kernel")) {
      const auto& kernel = j.at("kernel");
      config.kernel.family =
          kernel_family_from_string(kernel.value("family", std::string("matern52")));
      config.kernel.lengthscale = kernel.value("lengthscale", config.kernel.lengthscale);
      config.kernel.output_scale = kernel.value("output_scale", config.kernel.output_scale);
      config.kernel.normalize = kernel.value("normalize", config.kernel.normalize);
    }
    config.beta = j.value("beta", config.beta);
    config.epsilon = j.value("epsilon", config.epsilon);
    config.sigma_f = j.value("sigma_f", config.sigma_f);
    config.window_cap = j.value("window_cap", config.window_cap);
    if (j.contains("learner")) {
      const auto& learner = j.at("learner");
      config.learner.type = learner.value("type", config.learner.type);
      config.learner.learning_rate = learner.value("learning_rate", config.learner.learning_rate);
      config.learner.hidden_units = learner.value("hidden_units", config.learner.hidden_units);
    }
    config.train_batch = j.value("train_batch", config.train_batch);
    config.val_batch = j.value("val_batch", config.val_batch);
    config.predict_threshold = j.value("predict_threshold", config.predict_threshold);
    config.ranking_interval = j.value("ranking_interval", config.ranking_interval);
    config.convergence_threshold = j.value("convergence_threshold", config.convergence_threshold);
    config.stop_on_convergence = j.value("stop_on_convergence", config.stop_on_convergence);
    config.max_rounds = j.value("max_rounds", config.max_rounds);
    config.seed = j.value("seed", config.seed);
    if (j.contains("strategy")) config.strategy = parse_strategy(j.at("strategy").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

nlohmann::json run_config_to_json(const RunConfig& config) {
  nlohmann::json j;
  if (config.dataset_path) {
    j["dataset"] = *config.dataset_path;
  } else if (config.synthetic) {
    j["dataset"]["synthetic"] = synthetic_config_to_json(*config.synthetic);
  }
  j["embeddings"] = config.embeddings;
  j["kernel"]["family"] = to_string(config.kernel.family);
  j["kernel"]["lengthscale"] = config.kernel.lengthscale;
  j["kernel"]["output_scale"] = config.kernel.output_scale;
  j["kernel"]["normalize"] = config.kernel.normalize;
  j["beta"] = config.beta;
  j["epsilon"] = config.epsilon;
  j["sigma_f"] = config.sigma_f;
  j["window_cap"] = config.window_cap;
  j["learner"]["type"] = config.learner.type;
  j["learner"]["learning_rate"] = config.learner.learning_rate;
  j["learner"]["hidden_units"] = config.learner.hidden_units;
  j["train_batch"] = config.train_batch;
  j["val_batch"] = config.val_batch;
  j["predict_threshold"] = config.predict_threshold;
  j["ranking_interval"] = config.ranking_interval;
  j["convergence_threshold"] = config.convergence_threshold;
  j["stop_on_convergence"] = config.stop_on_convergence;
  j["max_rounds"] = config.max_rounds;
  j["seed"] = config.seed;
  j["strategy"] = to_string(config.strategy);
  return j;
}

PreparedData prepare_data(const RunConfig& config) {
  config.validate();
  if (config.synthetic) {
    SyntheticData data = generate_synthetic(*config.synthetic);
    return {std::move(data.dataset), std::move(data.arms), std::move(data.clean_class_ids)};
  }
  LabeledDataset dataset = load_dataset(*config.dataset_path);
  const auto embeddings = load_embeddings(config.embeddings);
  std::vector<Arm> arms;
  std::vector<std::string> missing;
  for (const std::string& id : dataset.class_ids()) {
    auto it = embeddings.find(id);
    if (it == embeddings.end()) {
      missing.push_back(id);
      continue;
    }
    arms.push_back({id, it->second});
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "classes without embeddings:";
    for (const std::string& id : missing) msg << ' ' << id;
    throw DataError(msg.str());
  }
  return {std::move(dataset), ArmSet(std::move(arms)), {}};
}

std::map<std::string, F1Stats> compute_per_class_f1(const Learner& learner,
                                                    const VectorXd& params,
                                                    const LabeledDataset& dataset,
                                                    double threshold) {
  const auto test = dataset.split_indices(Split::Test);
  if (test.empty()) throw ContractViolation("compute_per_class_f1: empty test split");
  const auto& class_ids = dataset.class_ids();
  std::vector<long> tp(class_ids.size(), 0), fp(class_ids.size(), 0), fn(class_ids.size(), 0);
  for (std::size_t idx : test) {
    const Instance& inst = dataset.instances()[idx];
    const auto predicted = predict_labels(learner, params, inst.features, threshold, class_ids);
    for (std::size_t c = 0; c < class_ids.size(); ++c) {
      const bool truth =
          std::binary_search(inst.labels.begin(), inst.labels.end(), class_ids[c]);
      const bool hit = predicted.count(class_ids[c]) != 0;
      if (hit && truth) ++tp[c];
      else if (hit) ++fp[c];
      else if (truth) ++fn[c];
    }
  }
  std::map<std::string, F1Stats> stats;
  for (std::size_t c = 0; c < class_ids.size(); ++c) {
    F1Stats s;
    s.precision = tp[c] + fp[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fp[c]) : 0.0;
    s.recall = tp[c] + fn[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fn[c]) : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall)
                                      : 0.0;
    stats[class_ids[c]] = s;
  }
  return stats;
}

double macro_f1(const std::map<std::string, F1Stats>& stats,
                const std::set<std::string>& classes) {
  if (classes.empty()) throw ContractViolation("macro_f1: empty class set");
  double total = 0;
  for (const std::string& id : classes) {
    auto it = stats.find(id);
    if (it == stats.end()) throw ContractViolation("macro_f1: no stats for class '" + id + "'");
    total += it->second.f1;
  }
  return total / static_cast<double>(classes.size());
}

RunArtifacts run_training(const RunConfig& config) {
  return run_training(config, prepare_data(config));
}

RunArtifacts run_training(const RunConfig& config, const PreparedData& data) {
  config.validate();
  const LabeledDataset& dataset = data.dataset;
  const ArmSet& arms = data.arms;

  auto learner = make_learner(config.learner.type, dataset.num_classes(), dataset.feature_dim(),
                              config.learner.learning_rate, config.learner.hidden_units);
  std::mt19937_64 rng(config.seed);
  VectorXd params = learner->init_params(rng);
  GpState<double> gp(config.kernel, config.epsilon, config.sigma_f, config.window_cap);

  std::vector<std::string> round_robin;
  if (config.strategy.kind == StrategyKind::FrequencyTopN) {
    round_robin = frequency_order(dataset);
    const std::size_t keep =
        std::min<std::size_t>(round_robin.size(), static_cast<std::size_t>(config.strategy.top_n));
    round_robin.resize(keep);
  }
  std::uniform_int_distribution<std::size_t> uniform_arm(0, arms.size() - 1);

  RunArtifacts artifacts;
  artifacts.class_ids.assign(dataset.class_ids().begin(), dataset.class_ids().end());
  artifacts.strategy_label = to_string(config.strategy);
  artifacts.seed = config.seed;
  artifacts.learner_config = config.learner;
  artifacts.feature_dim = dataset.feature_dim();
  artifacts.clean_class_ids.assign(data.clean_class_ids.begin(), data.clean_class_ids.end());

  for (Timestep t = 1; t <= config.max_rounds; ++t) {
    std::string class_id;
    switch (config.strategy.kind) {
      case StrategyKind::Bandit:
        class_id = select_arm(gp, arms, config.beta, t, artifacts.pulls);
        break;
      case StrategyKind::Uniform:
        class_id = arms.at(uniform_arm(rng)).id;
        break;
      case StrategyKind::FrequencyTopN:
        class_id = round_robin[static_cast<std::size_t>((t - 1) % static_cast<Timestep>(
                                   round_robin.size()))];
        break;
    }

    const Batch train = sample_batch(dataset, class_id, Split::Train, config.train_batch, rng);
    const Batch val = sample_batch(dataset, class_id, Split::Val, config.val_batch, rng);
    SpgResult spg = self_prediction_gain(*learner, params, train, val);
    params = std::move(spg.params);

    artifacts.pulls = record_pull(std::move(artifacts.pulls), t, class_id, spg.reward);
    artifacts.reward_trace.push_back(spg.reward);
    if (config.strategy.kind == StrategyKind::Bandit)
      gp = observe(std::move(gp), arms.embedding_of(class_id), spg.reward, t);

    if (t % config.ranking_interval == 0) {
      artifacts.ranking_snapshots.push_back(
          {t, rank_by_pulls(pull_counts(artifacts.pulls, arms))});
      if (config.stop_on_convergence &&
          converged(artifacts.ranking_snapshots, config.ranking_interval,
                    config.convergence_threshold)) {
        artifacts.convergence_round = t;
        break;
      }
    }
  }

  artifacts.rounds_executed = static_cast<Timestep>(artifacts.pulls.size());
  artifacts.final_ranking = rank_by_pulls(pull_counts(artifacts.pulls, arms));
  artifacts.final_params = std::move(params);
  if (!dataset.split_indices(Split::Test).empty()) {
    artifacts.per_class_f1 = compute_per_class_f1(*learner, artifacts.final_params, dataset,
                                                  config.predict_threshold);
  }
  artifacts.f1_order = config.strategy.kind == StrategyKind::Bandit
                           ? artifacts.final_ranking.order
                           : frequency_order(dataset);
  return artifacts;
}

// ---------------------------------------------------------------------------
// Report emission

namespace {

void write_rewards_csv(const std::filesystem::path& path, const RunArtifacts& artifacts) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "round,reward\n";
  for (std::size_t i = 0; i < artifacts.reward_trace.size(); ++i) {
    out << artifacts.pulls.pulls[i].t << ',' << format_double(artifacts.reward_trace[i]) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_f1_csv(const std::filesystem::path& path, const RunArtifacts& artifacts) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "class_id,precision,recall,f1\n";
  for (const std::string& id : artifacts.f1_order) {
    auto it = artifacts.per_class_f1.find(id);
    if (it == artifacts.per_class_f1.end()) continue;
    out << id << ',' << format_double(it->second.precision) << ','
        << format_double(it->second.recall) << ',' << format_double(it->second.f1) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_snapshots_json(const std::filesystem::path& path, const RunArtifacts& artifacts) {
  nlohmann::json snapshots = nlohmann::json::array();
  for (const RankingSnapshot& snap : artifacts.ranking_snapshots) {
    nlohmann::json entry;
    entry["round"] = snap.round;
    entry["order"] = snap.ranking.order;
    entry["counts"] = snap.ranking.counts;
    snapshots.push_back(std::move(entry));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << snapshots.dump(2) << '\n';
}

// reward history in JSON form: one entry per observation fed to the GP
void write_history_json(const std::filesystem::path& path, const RunArtifacts& artifacts) {
  nlohmann::json entries = nlohmann::json::array();
  for (const Pull& pull : artifacts.pulls.pulls) {
    nlohmann::json entry;
    entry["class_id"] = pull.class_id;
    entry["timestep"] = pull.t;
    entry["reward"] = pull.reward;
    entries.push_back(std::move(entry));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << entries.dump(2) << '\n';
}

void write_run_json(const std::filesystem::path& path, const RunArtifacts& artifacts) {
  nlohmann::json j;
  j["strategy"] = artifacts.strategy_label;
  j["seed"] = artifacts.seed;
  j["rounds_executed"] = artifacts.rounds_executed;
  if (artifacts.convergence_round) j["convergence_round"] = *artifacts.convergence_round;
  else j["convergence_round"] = nullptr;
  j["classes"] = artifacts.class_ids;
  j["clean_classes"] = artifacts.clean_class_ids;
  j["learner"]["type"] = artifacts.learner_config.type;
  j["learner"]["learning_rate"] = artifacts.learner_config.learning_rate;
  j["learner"]["hidden_units"] = artifacts.learner_config.hidden_units;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

void emit_report(const RunArtifacts& artifacts, const std::filesystem::path& out_dir,
                 ReportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  if (format == ReportFormat::Csv || format == ReportFormat::All) {
    write_pulls_csv(out_dir / "pulls.csv", artifacts.pulls);
    write_rewards_csv(out_dir / "rewards.csv", artifacts);
    write_ranking_csv(out_dir / "ranking.csv", artifacts.final_ranking);
    write_f1_csv(out_dir / "f1.csv", artifacts);
  }
  if (format == ReportFormat::Json || format == ReportFormat::All) {
    write_snapshots_json(out_dir / "rankings.json", artifacts);
    write_history_json(out_dir / "history.json", artifacts);
    write_run_json(out_dir / "run.json", artifacts);
  }
  if (artifacts.final_params.size() > 0) {
    auto learner = make_learner(artifacts.learner_config.type,
                                static_cast<int>(artifacts.class_ids.size()),
                                artifacts.feature_dim, artifacts.learner_config.learning_rate,
                                artifacts.learner_config.hidden_units);
    save_params(out_dir / "params.bin", *learner, artifacts.final_params);
  }
}

// ---------------------------------------------------------------------------
// Multi-run orchestration

MultiRunResult run_multi(const RunConfig& config, int num_runs) {
  if (num_runs < 1) throw ContractViolation("run_multi: need at least one run");
  config.validate();
  const PreparedData data = prepare_data(config);

  std::vector<RunConfig> configs(static_cast<std::size_t>(num_runs), config);
  for (int s = 0; s < num_runs; ++s)
    configs[static_cast<std::size_t>(s)].seed = config.seed + static_cast<std::uint64_t>(s);

  struct Outcome {
    std::optional<RunArtifacts> artifacts;
    std::exception_ptr error;
  };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(num_runs));

  const unsigned workers =
      std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                      static_cast<unsigned>(num_runs)));
  std::vector<std::future<void>> futures;
  for (unsigned w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&, w]() {
      for (std::size_t s = w; s < static_cast<std::size_t>(num_runs); s += workers) {
        try {
          outcomes[s].artifacts = run_training(configs[s], data);
        } catch (...) {
          outcomes[s].error = std::current_exception();
        }
      }
    }));
  }
  for (auto& fut : futures) fut.get();

  MultiRunResult result;
  std::vector<PullHistory> histories;
  std::exception_ptr first_error;
  for (std::size_t s = 0; s < outcomes.size(); ++s) {
    if (outcomes[s].artifacts) {
      histories.push_back(outcomes[s].artifacts->pulls);
      result.runs.push_back(std::move(*outcomes[s].artifacts));
      continue;
    }
    if (!first_error) first_error = outcomes[s].error;
    try {
      std::rethrow_exception(outcomes[s].error);
    } catch (const std::exception& e) {
      result.failures.push_back("run " + std::to_string(s) + " (seed " +
                                std::to_string(configs[s].seed) + "): " + e.what());
    }
  }
  if (result.runs.empty()) std::rethrow_exception(first_error);

  std::vector<std::string> class_ids;
  for (const Arm& arm : data.arms.arms()) class_ids.push_back(arm.id);
  std::sort(class_ids.begin(), class_ids.end());
  result.average = average_ranking(histories, class_ids);
  return result;
}

}  // namespace banditsl
