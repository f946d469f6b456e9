#pragma once

// UCB arm selection over the class set and pull-count bookkeeping.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "banditsl/gp.hpp"
#include "banditsl/types.hpp"

namespace banditsl {

struct Arm {
  std::string id;
  VectorXd embedding;
};

// Ordered set of candidate classes with unique ids and uniform embedding
// dimension.
class ArmSet {
 public:
  explicit ArmSet(std::vector<Arm> arms);

  std::size_t size() const { return arms_.size(); }
  const std::vector<Arm>& arms() const { return arms_; }
  const Arm& at(std::size_t i) const { return arms_.at(i); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const VectorXd& embedding_of(const std::string& id) const;
  Eigen::Index embedding_dim() const;

 private:
  std::vector<Arm> arms_;
  std::map<std::string, std::size_t> index_;
};

struct Pull {
  Timestep t = 0;
  std::string class_id;
  double reward = 0;
};

struct PullHistory {
  std::vector<Pull> pulls;

  std::size_t size() const { return pulls.size(); }
  bool empty() const { return pulls.empty(); }
};

// Appends one pull; timesteps must be strictly increasing.
PullHistory record_pull(PullHistory history, Timestep t, std::string class_id, double reward);

// Times each class was pulled. Only pulled classes appear; the ArmSet
// overload zero-fills the full class set.
std::map<std::string, long> pull_counts(const PullHistory& history);
std::map<std::string, long> pull_counts(const PullHistory& history, const ArmSet& arms);

// mu + sqrt(beta) * sigma per arm, factorizing the GP once for the round.
VectorXd ucb_scores(const GpState<double>& gp, const ArmSet& arms, double beta, Timestep t);

// Argmax of the UCB scores. Exact ties go to the least-pulled arm, then to
// the lexicographically smallest class id.
std::string select_arm(const GpState<double>& gp, const ArmSet& arms, double beta, Timestep t,
                       const PullHistory& history);

// CSV round-trip (columns: timestep,class_id,reward).
void write_pulls_csv(const std::filesystem::path& path, const PullHistory& history);
PullHistory read_pulls_csv(const std::filesystem::path& path);

}  // namespace banditsl
