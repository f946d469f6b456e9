#include "banditsl/bandit.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

#include "banditsl/errors.hpp"

namespace banditsl {

namespace {

// class ids travel through CSV and word2vec text files unquoted
void check_id_token(const std::string& id) {
  if (id.empty()) throw ContractViolation("class id must be nonempty");
  for (char c : id) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == '"') {
      throw ContractViolation("class id '" + id + "' contains whitespace, comma, or quote");
    }
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ArmSet::ArmSet(std::vector<Arm> arms) : arms_(std::move(arms)) {
  if (arms_.empty()) throw ContractViolation("ArmSet: must contain at least one arm");
  const Eigen::Index dim = arms_.front().embedding.size();
  for (std::size_t i = 0; i < arms_.size(); ++i) {
    const Arm& arm = arms_[i];
    check_id_token(arm.id);
    if (arm.embedding.size() != dim) {
      std::ostringstream msg;
      msg << "ArmSet: embedding dimension mismatch for '" << arm.id << "' (" << dim << " vs "
          << arm.embedding.size() << ")";
      throw ContractViolation(msg.str());
    }
    if (!arm.embedding.allFinite())
      throw ContractViolation("ArmSet: embedding for '" + arm.id + "' has non-finite entries");
    if (!index_.emplace(arm.id, i).second)
      throw ContractViolation("ArmSet: duplicate class id '" + arm.id + "'");
  }
}

const VectorXd& ArmSet::embedding_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ContractViolation("ArmSet: unknown class id '" + id + "'");
  return arms_[it->second].embedding;
}

Eigen::Index ArmSet::embedding_dim() const { return arms_.front().embedding.size(); }

PullHistory record_pull(PullHistory history, Timestep t, std::string class_id, double reward) {
  if (!history.pulls.empty() && t <= history.pulls.back().t) {
    std::ostringstream msg;
    msg << "record_pull: timestep " << t << " must exceed last recorded "
        << history.pulls.back().t;
    throw ContractViolation(msg.str());
  }
  check_id_token(class_id);
  history.pulls.push_back({t, std::move(class_id), reward});
  return history;
}

std::map<std::string, long> pull_counts(const PullHistory& history) {
  std::map<std::string, long> counts;
  for (const Pull& pull : history.pulls) ++counts[pull.class_id];
  return counts;
}

std::map<std::string, long> pull_counts(const PullHistory& history, const ArmSet& arms) {
  auto counts = pull_counts(history);
  for (const Arm& arm : arms.arms()) counts.emplace(arm.id, 0);
  return counts;
}

VectorXd ucb_scores(const GpState<double>& gp, const ArmSet& arms, double beta, Timestep t) {
  if (!(beta >= 0)) throw ContractViolation("ucb_scores: beta must be nonnegative");
  const double root_beta = std::sqrt(beta);
  VectorXd scores(static_cast<Eigen::Index>(arms.size()));
  if (gp.empty()) {
    scores.setConstant(root_beta * std::sqrt(gp.kernel().output_scale));
    return scores;
  }
  const GpFactor<double> factor = factorize(gp);
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const auto estimate = posterior(gp, factor, arms.at(i).embedding, t);
    scores(static_cast<Eigen::Index>(i)) = estimate.mean + root_beta * std::sqrt(estimate.variance);
  }
  return scores;
}

std::string select_arm(const GpState<double>& gp, const ArmSet& arms, double beta, Timestep t,
                       const PullHistory& history) {
  const VectorXd scores = ucb_scores(gp, arms, beta, t);
  const auto counts = pull_counts(history);
  const auto count_of = [&](const std::string& id) {
    auto it = counts.find(id);
    return it == counts.end() ? 0L : it->second;
  };
  std::size_t best = 0;
  long best_count = count_of(arms.at(0).id);
  for (std::size_t i = 1; i < arms.size(); ++i) {
    const double score = scores(static_cast<Eigen::Index>(i));
    const double best_score = scores(static_cast<Eigen::Index>(best));
    if (score > best_score) {
      best = i;
      best_count = count_of(arms.at(i).id);
      continue;
    }
    if (score == best_score) {
      const long count = count_of(arms.at(i).id);
      if (count < best_count || (count == best_count && arms.at(i).id < arms.at(best).id)) {
        best = i;
        best_count = count;
      }
    }
  }
  return arms.at(best).id;
}

void write_pulls_csv(const std::filesystem::path& path, const PullHistory& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "timestep,class_id,reward\n";
  for (const Pull& pull : history.pulls) {
    out << pull.t << ',' << pull.class_id << ',' << format_double(pull.reward) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

PullHistory read_pulls_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty pull history file");
  if (line != "timestep,class_id,reward")
    throw DataError(path.string() + ": unexpected header '" + line + "'");
  PullHistory history;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto first = line.find(',');
    const auto second = line.find(',', first == std::string::npos ? first : first + 1);
    if (first == std::string::npos || second == std::string::npos) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": expected 3 fields");
    }
    try {
      const Timestep t = std::stoll(line.substr(0, first));
      std::string id = line.substr(first + 1, second - first - 1);
      const double reward = std::stod(line.substr(second + 1));
      history = record_pull(std::move(history), t, std::move(id), reward);
    } catch (const ContractViolation&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return history;
}

}  // namespace banditsl
