#pragma once

// Class rankings from pull counts, Kendall-tau convergence detection,
// multi-run averaging, and ranking-quality metrics.

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "banditsl/bandit.hpp"
#include "banditsl/types.hpp"

namespace banditsl {

// Permutation of class ids, most-pulled first, ties broken by ascending id.
struct Ranking {
  std::vector<std::string> order;
  std::map<std::string, double> counts;

  std::size_t size() const { return order.size(); }
};

Ranking rank_by_pulls(const std::map<std::string, double>& counts);
Ranking rank_by_pulls(const std::map<std::string, long>& counts);

// Normalized Kendall tau distance in [0, 1]: discordant pairs over N(N-1)/2.
// 0 for identical rankings, 1 for exactly reversed ones.
double kendall_distance(const Ranking& a, const Ranking& b);

struct RankingSnapshot {
  Timestep round = 0;
  Ranking ranking;
};

// True iff the newest snapshot and the one `interval` rounds earlier are
// within `threshold` Kendall distance (inclusive). Fewer than two snapshots
// never converge.
bool converged(std::span<const RankingSnapshot> history, Timestep interval, double threshold);

// Ranks classes by mean pull count across runs.
Ranking average_ranking(std::span<const PullHistory> runs,
                        std::span<const std::string> class_ids);

// |top-k intersect targets| / min(k, |targets|).
double recall_at_k(const Ranking& ranking, const std::set<std::string>& targets, std::size_t k);

void write_ranking_csv(const std::filesystem::path& path, const Ranking& ranking,
                       const std::string& count_column = "pull_count");
void write_ranking_json(const std::filesystem::path& path, const Ranking& ranking,
                        const std::string& count_column = "pull_count");

}  // namespace banditsl
