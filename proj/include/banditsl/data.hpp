#pragma once

// Dataset representation, per-class sampling, the synthetic noisy-class
// generator, and embedding ingestion.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "banditsl/bandit.hpp"
#include "banditsl/learner.hpp"
#include "banditsl/types.hpp"

namespace banditsl {

enum class Split : int { Train = 0, Val = 1, Test = 2 };

const char* to_string(Split split);
std::optional<Split> split_from_string(std::string_view name);

struct Instance {
  std::string id;
  VectorXd features;
  std::vector<std::string> labels;  // stored sorted and unique
  Split split = Split::Train;
};

bool operator==(const Instance& a, const Instance& b);

// Immutable after construction; per-class per-split index lists are built
// once. Every class must have at least one train and one validation instance.
class LabeledDataset {
 public:
  static LabeledDataset from_instances(std::vector<Instance> instances);

  const std::vector<Instance>& instances() const { return instances_; }
  std::size_t size() const { return instances_.size(); }
  int feature_dim() const { return feature_dim_; }
  int num_classes() const { return static_cast<int>(class_ids_.size()); }
  // sorted ascending; defines the target column order for batches
  const std::vector<std::string>& class_ids() const { return class_ids_; }
  int class_column(const std::string& class_id) const;
  bool has_class(const std::string& class_id) const { return class_cols_.count(class_id) != 0; }
  std::span<const std::size_t> class_instances(const std::string& class_id, Split split) const;
  std::span<const std::size_t> split_indices(Split split) const;

 private:
  LabeledDataset() = default;

  std::vector<Instance> instances_;
  int feature_dim_ = 0;
  std::vector<std::string> class_ids_;
  std::map<std::string, int> class_cols_;
  std::map<std::string, std::array<std::vector<std::size_t>, 3>> class_index_;
  std::array<std::vector<std::size_t>, 3> split_indices_;
};

bool operator==(const LabeledDataset& a, const LabeledDataset& b);

struct SyntheticConfig {
  int num_clean_classes = 20;
  int num_noise_classes = 20;  // 0 disables noise injection
  int instances_per_class = 200;
  int feature_dim = 32;
  int embedding_dim = 8;
  double prototype_noise_sigma = 0.3;
  // ablation switch: draw every class embedding at random instead of deriving
  // clean embeddings from feature prototypes
  bool random_embeddings = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  LabeledDataset dataset;
  ArmSet arms;
  std::set<std::string> clean_class_ids;
};

// Clean classes are Gaussian clouds around random unit prototypes; noise
// classes tag uniformly resampled clean instances with an extra
// out-of-vocabulary label ("noise_000", ...). Splits are stratified 70/15/15
// per class.
SyntheticData generate_synthetic(const SyntheticConfig& config);

// batch_size draws, uniform with replacement, from the class's instances in
// the given split.
Batch sample_batch(const LabeledDataset& dataset, const std::string& class_id, Split split,
                   int batch_size, std::mt19937_64& rng);

// word2vec text format: optional "count dim" first line, then
// "token v1 ... vd" per line.
std::map<std::string, VectorXd> load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::map<std::string, VectorXd>& embeddings,
                     const std::filesystem::path& path);

// JSON-lines, one object per instance:
// {"id": ..., "features": [...], "labels": [...], "split": "train|val|test"}
LabeledDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& path);

}  // namespace banditsl
