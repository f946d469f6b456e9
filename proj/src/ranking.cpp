#include "banditsl/ranking.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "banditsl/errors.hpp"

namespace banditsl {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::map<std::string, std::size_t> positions(const Ranking& ranking) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < ranking.order.size(); ++i) pos[ranking.order[i]] = i;
  return pos;
}

}  // namespace

Ranking rank_by_pulls(const std::map<std::string, double>& counts) {
  Ranking ranking;
  ranking.counts = counts;
  ranking.order.reserve(counts.size());
  for (const auto& [id, count] : counts) {
    if (count < 0)
      throw ContractViolation("rank_by_pulls: negative count for '" + id + "'");
    ranking.order.push_back(id);
  }
  std::stable_sort(ranking.order.begin(), ranking.order.end(),
                   [&](const std::string& a, const std::string& b) {
                     const double ca = counts.at(a);
                     const double cb = counts.at(b);
                     if (ca != cb) return ca > cb;
                     return a < b;
                   });
  return ranking;
}

Ranking rank_by_pulls(const std::map<std::string, long>& counts) {
  std::map<std::string, double> as_double;
  for (const auto& [id, count] : counts) as_double[id] = static_cast<double>(count);
  return rank_by_pulls(as_double);
}

double kendall_distance(const Ranking& a, const Ranking& b) {
  const std::size_t n = a.order.size();
  if (n < 2) throw ContractViolation("kendall_distance: rankings need at least 2 classes");
  if (b.order.size() != n)
    throw ContractViolation("kendall_distance: rankings cover different class counts");
  const auto pos_b = positions(b);
  for (const std::string& id : a.order) {
    if (pos_b.find(id) == pos_b.end())
      throw ContractViolation("kendall_distance: class '" + id + "' missing from second ranking");
  }
  // literal pair enumeration over the shared class set
  long discordant = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t bi = pos_b.at(a.order[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (bi > pos_b.at(a.order[j])) ++discordant;
    }
  }
  const double total_pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return static_cast<double>(discordant) / total_pairs;
}

bool converged(std::span<const RankingSnapshot> history, Timestep interval, double threshold) {
  if (interval < 1) throw ContractViolation("converged: interval must be at least 1");
  if (history.size() < 2) return false;
  const RankingSnapshot& latest = history.back();
  const Timestep wanted = latest.round - interval;
  for (std::size_t i = history.size() - 1; i-- > 0;) {
    if (history[i].round == wanted)
      return kendall_distance(history[i].ranking, latest.ranking) <= threshold;
    if (history[i].round < wanted) break;
  }
  return false;
}

Ranking average_ranking(std::span<const PullHistory> runs,
                        std::span<const std::string> class_ids) {
  if (runs.empty()) throw ContractViolation("average_ranking: need at least one run");
  if (class_ids.empty()) throw ContractViolation("average_ranking: empty class set");
  std::map<std::string, double> totals;
  for (const std::string& id : class_ids) totals[id] = 0.0;
  for (const PullHistory& run : runs) {
    for (const Pull& pull : run.pulls) {
      auto it = totals.find(pull.class_id);
      if (it == totals.end())
        throw ContractViolation("average_ranking: run pulled class '" + pull.class_id +
                                "' outside the class set");
      it->second += 1.0;
    }
  }
  for (auto& [id, total] : totals) total /= static_cast<double>(runs.size());
  return rank_by_pulls(totals);
}

double recall_at_k(const Ranking& ranking, const std::set<std::string>& targets, std::size_t k) {
  if (k < 1 || k > ranking.size())
    throw ContractViolation("recall_at_k: k must lie in [1, N]");
  if (targets.empty()) throw ContractViolation("recall_at_k: empty target set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += targets.count(ranking.order[i]);
  return static_cast<double>(hits) / static_cast<double>(std::min(k, targets.size()));
}

void write_ranking_csv(const std::filesystem::path& path, const Ranking& ranking,
                       const std::string& count_column) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "rank,class_id," << count_column << '\n';
  for (std::size_t i = 0; i < ranking.order.size(); ++i) {
    out << (i + 1) << ',' << ranking.order[i] << ','
        << format_double(ranking.counts.at(ranking.order[i])) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_ranking_json(const std::filesystem::path& path, const Ranking& ranking,
                        const std::string& count_column) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < ranking.order.size(); ++i) {
    nlohmann::json entry;
    entry["rank"] = i + 1;
    entry["class_id"] = ranking.order[i];
    entry[count_column] = ranking.counts.at(ranking.order[i]);
    entries.push_back(std::move(entry));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << entries.dump(2) << '\n';
}

}  // namespace banditsl
