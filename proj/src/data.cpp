#include "banditsl/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "banditsl/errors.hpp"

namespace banditsl {

namespace {

void check_label_token(const std::string& label, const std::string& where) {
  if (label.empty()) throw DataError(where + ": empty class label");
  for (char c : label) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == '"') {
      throw DataError(where + ": class label '" + label +
                      "' contains whitespace, comma, or quote");
    }
  }
}

VectorXd random_unit_vector(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  VectorXd v(dim);
  do {
    for (int i = 0; i < dim; ++i) v(i) = gauss(rng);
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

// 70/15/15 per class, train rounded first, validation forced to at least one
// instance whenever the class has two or more.
std::array<int, 3> split_counts(int n) {
  int train = static_cast<int>(std::llround(0.70 * n));
  int val = static_cast<int>(std::llround(0.15 * n));
  train = std::clamp(train, 1, std::max(1, n - 1));
  if (n >= 2) val = std::clamp(val, 1, n - train);
  return {train, val, n - train - val};
}

}  // namespace

const char* to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "unknown";
}

std::optional<Split> split_from_string(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  return std::nullopt;
}

bool operator==(const Instance& a, const Instance& b) {
  return a.id == b.id && a.split == b.split && a.labels == b.labels &&
         a.features.size() == b.features.size() &&
         (a.features.array() == b.features.array()).all();
}

LabeledDataset LabeledDataset::from_instances(std::vector<Instance> instances) {
  if (instances.empty()) throw DataError("dataset contains no instances");
  LabeledDataset dataset;
  dataset.feature_dim_ = static_cast<int>(instances.front().features.size());
  if (dataset.feature_dim_ < 1) throw DataError("dataset instances must have features");

  std::set<std::string> classes;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    Instance& inst = instances[i];
    if (inst.features.size() != dataset.feature_dim_) {
      std::ostringstream msg;
      msg << "instance '" << inst.id << "': feature dimension " << inst.features.size()
          << " differs from " << dataset.feature_dim_;
      throw DataError(msg.str());
    }
    if (!inst.features.allFinite())
      throw DataError("instance '" + inst.id + "': non-finite feature values");
    std::sort(inst.labels.begin(), inst.labels.end());
    inst.labels.erase(std::unique(inst.labels.begin(), inst.labels.end()), inst.labels.end());
    for (const std::string& label : inst.labels) {
      check_label_token(label, "instance '" + inst.id + "'");
      classes.insert(label);
    }
    dataset.split_indices_[static_cast<int>(inst.split)].push_back(i);
  }

  dataset.class_ids_.assign(classes.begin(), classes.end());
  for (std::size_t c = 0; c < dataset.class_ids_.size(); ++c)
    dataset.class_cols_[dataset.class_ids_[c]] = static_cast<int>(c);

  for (std::size_t i = 0; i < instances.size(); ++i) {
    for (const std::string& label : instances[i].labels)
      dataset.class_index_[label][static_cast<int>(instances[i].split)].push_back(i);
  }

  std::vector<std::string> rejected;
  for (const std::string& class_id : dataset.class_ids_) {
    const auto& per_split = dataset.class_index_[class_id];
    if (per_split[static_cast<int>(Split::Train)].empty() ||
        per_split[static_cast<int>(Split::Val)].empty())
      rejected.push_back(class_id);
  }
  if (!rejected.empty()) {
    std::ostringstream msg;
    msg << "classes lacking train or validation instances:";
    for (const std::string& id : rejected) msg << ' ' << id;
    throw DataError(msg.str());
  }

  dataset.instances_ = std::move(instances);
  return dataset;
}

int LabeledDataset::class_column(const std::string& class_id) const {
  auto it = class_cols_.find(class_id);
  if (it == class_cols_.end()) throw DataError("unknown class '" + class_id + "'");
  return it->second;
}

std::span<const std::size_t> LabeledDataset::class_instances(const std::string& class_id,
                                                             Split split) const {
  auto it = class_index_.find(class_id);
  if (it == class_index_.end()) throw DataError("unknown class '" + class_id + "'");
  return it->second[static_cast<int>(split)];
}

std::span<const std::size_t> LabeledDataset::split_indices(Split split) const {
  return split_indices_[static_cast<int>(split)];
}

bool operator==(const LabeledDataset& a, const LabeledDataset& b) {
  return a.instances() == b.instances();
}

void SyntheticConfig::validate() const {
  if (num_clean_classes < 1)
    throw ContractViolation("SyntheticConfig: num_clean_classes must be positive");
  if (num_noise_classes < 0)
    throw ContractViolation("SyntheticConfig: num_noise_classes must be nonnegative");
  if (instances_per_class < 1)
    throw ContractViolation("SyntheticConfig: instances_per_class must be positive");
  if (feature_dim < 1) throw ContractViolation("SyntheticConfig: feature_dim must be positive");
  if (embedding_dim < 1)
    throw ContractViolation("SyntheticConfig: embedding_dim must be positive");
  if (feature_dim < embedding_dim)
    throw ContractViolation("SyntheticConfig: feature_dim must be at least embedding_dim");
  if (!(prototype_noise_sigma > 0))
    throw ContractViolation("SyntheticConfig: prototype_noise_sigma must be positive");
}

SyntheticData generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int n = config.instances_per_class;
  const auto counts = split_counts(n);

  std::vector<Instance> instances;
  instances.reserve(static_cast<std::size_t>(config.num_clean_classes) * n);
  std::vector<VectorXd> prototypes;
  prototypes.reserve(config.num_clean_classes);
  std::vector<std::string> clean_ids;

  char buf[64];
  for (int c = 0; c < config.num_clean_classes; ++c) {
    std::snprintf(buf, sizeof(buf), "class_%03d", c);
    clean_ids.emplace_back(buf);
    prototypes.push_back(random_unit_vector(config.feature_dim, rng));
    for (int k = 0; k < n; ++k) {
      Instance inst;
      std::snprintf(buf, sizeof(buf), "%s_%04d", clean_ids.back().c_str(), k);
      inst.id = buf;
      inst.features = prototypes.back();
      for (int d = 0; d < config.feature_dim; ++d)
        inst.features(d) += config.prototype_noise_sigma * gauss(rng);
      inst.labels = {clean_ids.back()};
      inst.split = k < counts[0] ? Split::Train : (k < counts[0] + counts[1] ? Split::Val : Split::Test);
      instances.push_back(std::move(inst));
    }
  }

  // pools of clean instances per split, in insertion order
  std::array<std::vector<std::size_t>, 3> pools;
  for (std::size_t i = 0; i < instances.size(); ++i)
    pools[static_cast<int>(instances[i].split)].push_back(i);

  std::vector<std::string> noise_ids;
  for (int j = 0; j < config.num_noise_classes; ++j) {
    std::snprintf(buf, sizeof(buf), "noise_%03d", j);
    noise_ids.emplace_back(buf);
    for (int s = 0; s < 3; ++s) {
      std::vector<std::size_t> chosen;
      std::sample(pools[s].begin(), pools[s].end(), std::back_inserter(chosen),
                  static_cast<std::size_t>(counts[s]), rng);
      for (std::size_t idx : chosen) instances[idx].labels.push_back(noise_ids.back());
    }
  }

  std::vector<Arm> arms;
  for (int c = 0; c < config.num_clean_classes; ++c) {
    VectorXd embedding;
    if (config.random_embeddings) {
      embedding = random_unit_vector(config.embedding_dim, rng);
    } else {
      embedding = prototypes[c].head(config.embedding_dim);
      const double norm = embedding.norm();
      embedding = norm < 1e-12 ? random_unit_vector(config.embedding_dim, rng)
                               : VectorXd(embedding / norm);
    }
    arms.push_back({clean_ids[c], std::move(embedding)});
  }
  for (int j = 0; j < config.num_noise_classes; ++j)
    arms.push_back({noise_ids[j], random_unit_vector(config.embedding_dim, rng)});
  std::sort(arms.begin(), arms.end(), [](const Arm& a, const Arm& b) { return a.id < b.id; });

  SyntheticData data{LabeledDataset::from_instances(std::move(instances)), ArmSet(std::move(arms)),
                     {clean_ids.begin(), clean_ids.end()}};
  return data;
}

Batch sample_batch(const LabeledDataset& dataset, const std::string& class_id, Split split,
                   int batch_size, std::mt19937_64& rng) {
  if (batch_size < 1) throw ContractViolation("sample_batch: batch_size must be positive");
  const auto candidates = dataset.class_instances(class_id, split);
  if (candidates.empty()) {
    throw DataError("class '" + class_id + "' has no instances in split " +
                    to_string(split));
  }
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  Batch batch;
  batch.features.resize(batch_size, dataset.feature_dim());
  batch.targets = MatrixXd::Zero(batch_size, dataset.num_classes());
  batch.indices.reserve(static_cast<std::size_t>(batch_size));
  for (int row = 0; row < batch_size; ++row) {
    const std::size_t idx = candidates[pick(rng)];
    const Instance& inst = dataset.instances()[idx];
    batch.features.row(row) = inst.features.transpose();
    for (const std::string& label : inst.labels)
      batch.targets(row, dataset.class_column(label)) = 1.0;
    batch.indices.push_back(idx);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Embedding file I/O

namespace {

bool looks_like_header(const std::vector<std::string>& tokens) {
  if (tokens.size() != 2) return false;
  for (const std::string& tok : tokens) {
    if (tok.empty()) return false;
    for (char c : tok)
      if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::vector<std::string> whitespace_tokens(const std::string& line) {
  std::istringstream iss(line);
  std::vector<std::string> tokens;
  std::string tok;
  while (iss >> tok) tokens.push_back(tok);
  return tokens;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::map<std::string, VectorXd> load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());

  std::map<std::string, VectorXd> embeddings;
  std::optional<std::size_t> declared_count;
  Eigen::Index dim = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = whitespace_tokens(line);
    if (tokens.empty()) continue;
    if (line_no == 1 && looks_like_header(tokens)) {
      declared_count = std::stoull(tokens[0]);
      dim = static_cast<Eigen::Index>(std::stoull(tokens[1]));
      if (dim < 1)
        throw DataError(path.string() + ": line 1: header declares dimension " +
                        std::to_string(dim));
      continue;
    }
    if (tokens.size() < 2)
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": expected 'token v1 ... vd'");
    const Eigen::Index line_dim = static_cast<Eigen::Index>(tokens.size()) - 1;
    if (dim < 0) dim = line_dim;
    if (line_dim != dim) {
      std::ostringstream msg;
      msg << path.string() << ": line " << line_no << ": dimension " << line_dim
          << " differs from " << dim;
      throw DataError(msg.str());
    }
    VectorXd values(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      try {
        std::size_t used = 0;
        values(i) = std::stod(tokens[static_cast<std::size_t>(i) + 1], &used);
        if (used != tokens[static_cast<std::size_t>(i) + 1].size()) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw DataError(path.string() + ": line " + std::to_string(line_no) + ": bad number '" +
                        tokens[static_cast<std::size_t>(i) + 1] + "'");
      }
      if (!std::isfinite(values(i)))
        throw DataError(path.string() + ": line " + std::to_string(line_no) +
                        ": non-finite value");
    }
    if (!embeddings.emplace(tokens[0], std::move(values)).second)
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": duplicate token '" + tokens[0] + "'");
  }
  if (embeddings.empty()) throw DataError(path.string() + ": no embeddings found");
  if (declared_count && *declared_count != embeddings.size()) {
    std::ostringstream msg;
    msg << path.string() << ": header declares " << *declared_count << " vectors, parsed "
        << embeddings.size();
    throw DataError(msg.str());
  }
  return embeddings;
}

void save_embeddings(const std::map<std::string, VectorXd>& embeddings,
                     const std::filesystem::path& path) {
  if (embeddings.empty()) throw ContractViolation("save_embeddings: nothing to write");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << embeddings.size() << ' ' << embeddings.begin()->second.size() << '\n';
  for (const auto& [token, values] : embeddings) {
    out << token;
    for (Eigen::Index i = 0; i < values.size(); ++i) out << ' ' << format_double(values(i));
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Dataset file I/O

LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Instance> instances;
  std::string line;
  std::size_t line_no = 0;
  Eigen::Index feature_dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ": line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    Instance inst;
    try {
      inst.id = j.at("id").get<std::string>();
      const auto& features = j.at("features");
      if (!features.is_array() || features.empty())
        throw DataError(where + ": 'features' must be a nonempty array");
      inst.features.resize(static_cast<Eigen::Index>(features.size()));
      for (std::size_t i = 0; i < features.size(); ++i) {
        if (!features[i].is_number()) throw DataError(where + ": 'features' must be numeric");
        inst.features(static_cast<Eigen::Index>(i)) = features[i].get<double>();
      }
      for (const auto& label : j.at("labels")) {
        if (!label.is_string()) throw DataError(where + ": 'labels' must be strings");
        inst.labels.push_back(label.get<std::string>());
      }
      const auto split = split_from_string(j.at("split").get<std::string>());
      if (!split)
        throw DataError(where + ": 'split' must be one of train|val|test");
      inst.split = *split;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (feature_dim < 0) feature_dim = inst.features.size();
    if (inst.features.size() != feature_dim) {
      std::ostringstream msg;
      msg << where << ": feature dimension " << inst.features.size() << " differs from "
          << feature_dim;
      throw DataError(msg.str());
    }
    instances.push_back(std::move(inst));
  }
  if (instances.empty()) throw DataError(path.string() + ": no instances found");
  return LabeledDataset::from_instances(std::move(instances));
}

void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const Instance& inst : dataset.instances()) {
    nlohmann::json j;
    j["id"] = inst.id;
    j["features"] = std::vector<double>(inst.features.data(),
                                        inst.features.data() + inst.features.size());
    j["labels"] = inst.labels;
    j["split"] = to_string(inst.split);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace banditsl
