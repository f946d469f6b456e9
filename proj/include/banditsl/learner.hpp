#pragma once

// The supervised model being steered: a learner exposes scores, an analytic
// gradient of the multi-label BCE loss, and flat parameter vectors so any
// model shape serializes the same way. Two built-ins: multi-label logistic
// regression and a one-hidden-layer perceptron.

#include <filesystem>
#include <memory>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "banditsl/types.hpp"

namespace banditsl {

struct Batch {
  MatrixXd features;                 // n x feature_dim
  MatrixXd targets;                  // n x num_classes, entries in {0, 1}
  std::vector<std::size_t> indices;  // source instance indices, when known
};

class Learner {
 public:
  virtual ~Learner() = default;

  virtual const char* name() const = 0;
  virtual Eigen::Index param_count() const = 0;
  virtual VectorXd init_params(std::mt19937_64& rng) const = 0;
  // Per-class probabilities, n x num_classes, entries in [0, 1].
  virtual MatrixXd scores(const VectorXd& params, const MatrixXd& features) const = 0;
  // Gradient of multilabel_loss at (params, batch), same layout as params.
  virtual VectorXd gradient(const VectorXd& params, const Batch& batch) const = 0;
  virtual void append_metadata(nlohmann::json& sidecar) const;

  int num_classes() const { return num_classes_; }
  int feature_dim() const { return feature_dim_; }
  double learning_rate() const { return learning_rate_; }

  void check_params(const VectorXd& params) const;
  void check_batch(const VectorXd& params, const Batch& batch) const;

 protected:
  Learner(int num_classes, int feature_dim, double learning_rate);

 private:
  int num_classes_;
  int feature_dim_;
  double learning_rate_;
};

// p = sigmoid(W x + b), params laid out as [vec(W), b].
class LogisticLearner final : public Learner {
 public:
  LogisticLearner(int num_classes, int feature_dim, double learning_rate);

  const char* name() const override { return "logistic"; }
  Eigen::Index param_count() const override;
  VectorXd init_params(std::mt19937_64& rng) const override;
  MatrixXd scores(const VectorXd& params, const MatrixXd& features) const override;
  VectorXd gradient(const VectorXd& params, const Batch& batch) const override;
};

// p = sigmoid(W2 tanh(W1 x + b1) + b2), params [vec(W1), b1, vec(W2), b2].
class MlpLearner final : public Learner {
 public:
  MlpLearner(int num_classes, int feature_dim, int hidden_units, double learning_rate);

  const char* name() const override { return "mlp"; }
  int hidden_units() const { return hidden_units_; }
  Eigen::Index param_count() const override;
  VectorXd init_params(std::mt19937_64& rng) const override;
  MatrixXd scores(const VectorXd& params, const MatrixXd& features) const override;
  VectorXd gradient(const VectorXd& params, const Batch& batch) const override;
  void append_metadata(nlohmann::json& sidecar) const override;

 private:
  int hidden_units_;
};

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside the loss
// so it stays finite for saturated predictions.
inline constexpr double kProbClamp = 1e-7;

// Mean over instances of the summed per-class binary cross-entropy.
double multilabel_bce(const MatrixXd& probs, const MatrixXd& targets);
double multilabel_loss(const Learner& learner, const VectorXd& params, const Batch& batch);

// One gradient step: params - learning_rate * grad.
VectorXd sgd_update(const Learner& learner, const VectorXd& params, const Batch& batch,
                    double learning_rate);

struct SpgResult {
  double reward = 0;   // validation loss before minus after the update
  VectorXd params;     // updated parameters
};

// Loss on the validation batch, one update on the training batch, loss on the
// same validation batch again; the reward is the drop (may be negative).
SpgResult self_prediction_gain(const Learner& learner, const VectorXd& params,
                               const Batch& train_batch, const Batch& val_batch);

// Classes whose predicted probability reaches the threshold (in (0, 1)).
std::set<std::string> predict_labels(const Learner& learner, const VectorXd& params,
                                     const VectorXd& instance, double threshold,
                                     std::span<const std::string> class_ids);

// Flat binary parameter file plus a JSON sidecar describing shapes; the
// sidecar sits next to the binary with extension .json.
void save_params(const std::filesystem::path& bin_path, const Learner& learner,
                 const VectorXd& params);

struct LoadedLearner {
  std::unique_ptr<Learner> learner;
  VectorXd params;
};

LoadedLearner load_params(const std::filesystem::path& bin_path);

std::unique_ptr<Learner> make_learner(const std::string& type, int num_classes, int feature_dim,
                                      double learning_rate, int hidden_units);

}  // namespace banditsl
