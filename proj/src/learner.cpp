#include "banditsl/learner.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "banditsl/errors.hpp"

namespace banditsl {

namespace {

using Eigen::Index;
using ArrayXXd = Eigen::ArrayXXd;

ArrayXXd sigmoid(const ArrayXXd& z) { return 1.0 / (1.0 + (-z).exp()); }

// Loss gradient w.r.t. the pre-sigmoid activations, already divided by the
// batch size. The clamp makes the loss flat in saturated entries, so those
// contribute zero.
ArrayXXd activation_grad(const ArrayXXd& probs, const MatrixXd& targets) {
  const ArrayXXd in_range =
      ((probs > kProbClamp) && (probs < 1.0 - kProbClamp)).cast<double>();
  return (probs - targets.array()) * in_range / static_cast<double>(targets.rows());
}

}  // namespace

Learner::Learner(int num_classes, int feature_dim, double learning_rate)
    : num_classes_(num_classes), feature_dim_(feature_dim), learning_rate_(learning_rate) {
  if (num_classes_ < 1) throw ContractViolation("Learner: num_classes must be positive");
  if (feature_dim_ < 1) throw ContractViolation("Learner: feature_dim must be positive");
  if (!(learning_rate_ >= 0) || !std::isfinite(learning_rate_))
    throw ContractViolation("Learner: learning_rate must be finite and nonnegative");
}

void Learner::append_metadata(nlohmann::json&) const {}

void Learner::check_params(const VectorXd& params) const {
  if (params.size() != param_count()) {
    std::ostringstream msg;
    msg << name() << ": parameter vector has " << params.size() << " entries, expected "
        << param_count();
    throw ContractViolation(msg.str());
  }
}

void Learner::check_batch(const VectorXd& params, const Batch& batch) const {
  check_params(params);
  if (batch.features.rows() == 0) throw ContractViolation("batch must be nonempty");
  if (batch.features.cols() != feature_dim_) {
    std::ostringstream msg;
    msg << name() << ": batch feature dimension mismatch (" << feature_dim_ << " vs "
        << batch.features.cols() << ")";
    throw ContractViolation(msg.str());
  }
  if (batch.targets.rows() != batch.features.rows() || batch.targets.cols() != num_classes_) {
    std::ostringstream msg;
    msg << name() << ": batch targets must be " << batch.features.rows() << "x" << num_classes_
        << ", got " << batch.targets.rows() << "x" << batch.targets.cols();
    throw ContractViolation(msg.str());
  }
}

// ---------------------------------------------------------------------------
// LogisticLearner

LogisticLearner::LogisticLearner(int num_classes, int feature_dim, double learning_rate)
    : Learner(num_classes, feature_dim, learning_rate) {}

Eigen::Index LogisticLearner::param_count() const {
  return static_cast<Index>(num_classes()) * feature_dim() + num_classes();
}

VectorXd LogisticLearner::init_params(std::mt19937_64&) const {
  // zeros: every probability starts at 0.5
  return VectorXd::Zero(param_count());
}

MatrixXd LogisticLearner::scores(const VectorXd& params, const MatrixXd& features) const {
  check_params(params);
  const Index c = num_classes();
  const Index f = feature_dim();
  Eigen::Map<const MatrixXd> weights(params.data(), c, f);
  Eigen::Map<const VectorXd> biases(params.data() + c * f, c);
  const MatrixXd z = (features * weights.transpose()).rowwise() + biases.transpose();
  return sigmoid(z.array()).matrix();
}

VectorXd LogisticLearner::gradient(const VectorXd& params, const Batch& batch) const {
  check_batch(params, batch);
  const Index c = num_classes();
  const Index f = feature_dim();
  const ArrayXXd probs = scores(params, batch.features).array();
  const MatrixXd g = activation_grad(probs, batch.targets).matrix();
  VectorXd grad(param_count());
  Eigen::Map<MatrixXd>(grad.data(), c, f) = g.transpose() * batch.features;
  Eigen::Map<VectorXd>(grad.data() + c * f, c) = g.colwise().sum().transpose();
  return grad;
}

// ---------------------------------------------------------------------------
// MlpLearner

MlpLearner::MlpLearner(int num_classes, int feature_dim, int hidden_units, double learning_rate)
    : Learner(num_classes, feature_dim, learning_rate), hidden_units_(hidden_units) {
  if (hidden_units_ < 1) throw ContractViolation("MlpLearner: hidden_units must be positive");
}

Eigen::Index MlpLearner::param_count() const {
  const Index h = hidden_units_;
  const Index c = num_classes();
  const Index f = feature_dim();
  return h * f + h + c * h + c;
}

VectorXd MlpLearner::init_params(std::mt19937_64& rng) const {
  std::normal_distribution<double> dist(0.0, 0.1);
  VectorXd params(param_count());
  const Index h = hidden_units_;
  const Index f = feature_dim();
  const Index c = num_classes();
  for (Index i = 0; i < h * f; ++i) params(i) = dist(rng);
  params.segment(h * f, h).setZero();
  for (Index i = 0; i < c * h; ++i) params(h * f + h + i) = dist(rng);
  params.tail(c).setZero();
  return params;
}

MatrixXd MlpLearner::scores(const VectorXd& params, const MatrixXd& features) const {
  check_params(params);
  const Index h = hidden_units_;
  const Index f = feature_dim();
  const Index c = num_classes();
  Eigen::Map<const MatrixXd> w1(params.data(), h, f);
  Eigen::Map<const VectorXd> b1(params.data() + h * f, h);
  Eigen::Map<const MatrixXd> w2(params.data() + h * f + h, c, h);
  Eigen::Map<const VectorXd> b2(params.data() + h * f + h + c * h, c);
  const MatrixXd hidden =
      ((features * w1.transpose()).rowwise() + b1.transpose()).array().tanh().matrix();
  const MatrixXd z = (hidden * w2.transpose()).rowwise() + b2.transpose();
  return sigmoid(z.array()).matrix();
}

VectorXd MlpLearner::gradient(const VectorXd& params, const Batch& batch) const {
  check_batch(params, batch);
  const Index h = hidden_units_;
  const Index f = feature_dim();
  const Index c = num_classes();
  Eigen::Map<const MatrixXd> w1(params.data(), h, f);
  Eigen::Map<const VectorXd> b1(params.data() + h * f, h);
  Eigen::Map<const MatrixXd> w2(params.data() + h * f + h, c, h);
  Eigen::Map<const VectorXd> b2(params.data() + h * f + h + c * h, c);

  const MatrixXd hidden =
      ((batch.features * w1.transpose()).rowwise() + b1.transpose()).array().tanh().matrix();
  const MatrixXd z = (hidden * w2.transpose()).rowwise() + b2.transpose();
  const ArrayXXd probs = sigmoid(z.array());
  const MatrixXd g_out = activation_grad(probs, batch.targets).matrix();  // n x c
  const MatrixXd g_hidden =
      ((g_out * w2).array() * (1.0 - hidden.array().square())).matrix();  // n x h

  VectorXd grad(param_count());
  Eigen::Map<MatrixXd>(grad.data(), h, f) = g_hidden.transpose() * batch.features;
  Eigen::Map<VectorXd>(grad.data() + h * f, h) = g_hidden.colwise().sum().transpose();
  Eigen::Map<MatrixXd>(grad.data() + h * f + h, c, h) = g_out.transpose() * hidden;
  Eigen::Map<VectorXd>(grad.data() + h * f + h + c * h, c) = g_out.colwise().sum().transpose();
  return grad;
}

void MlpLearner::append_metadata(nlohmann::json& sidecar) const {
  sidecar["hidden_units"] = hidden_units_;
}

// ---------------------------------------------------------------------------
// Free operations

double multilabel_bce(const MatrixXd& probs, const MatrixXd& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
    std::ostringstream msg;
    msg << "multilabel_bce: shape mismatch (" << probs.rows() << "x" << probs.cols() << " vs "
        << targets.rows() << "x" << targets.cols() << ")";
    throw ContractViolation(msg.str());
  }
  if (probs.rows() == 0) throw ContractViolation("multilabel_bce: empty batch");
  const ArrayXXd p = probs.array().min(1.0 - kProbClamp).max(kProbClamp);
  const ArrayXXd y = targets.array();
  const double total = -(y * p.log() + (1.0 - y) * (1.0 - p).log()).sum();
  return total / static_cast<double>(probs.rows());
}

double multilabel_loss(const Learner& learner, const VectorXd& params, const Batch& batch) {
  learner.check_batch(params, batch);
  return multilabel_bce(learner.scores(params, batch.features), batch.targets);
}

VectorXd sgd_update(const Learner& learner, const VectorXd& params, const Batch& batch,
                    double learning_rate) {
  const VectorXd grad = learner.gradient(params, batch);
  if (!grad.allFinite()) throw NumericError("sgd_update: non-finite gradient");
  VectorXd updated = params - learning_rate * grad;
  if (!updated.allFinite()) throw NumericError("sgd_update: non-finite parameters after update");
  return updated;
}

SpgResult self_prediction_gain(const Learner& learner, const VectorXd& params,
                               const Batch& train_batch, const Batch& val_batch) {
  const double loss_before = multilabel_loss(learner, params, val_batch);
  VectorXd updated = sgd_update(learner, params, train_batch, learner.learning_rate());
  const double loss_after = multilabel_loss(learner, updated, val_batch);
  return {loss_before - loss_after, std::move(updated)};
}

std::set<std::string> predict_labels(const Learner& learner, const VectorXd& params,
                                     const VectorXd& instance, double threshold,
                                     std::span<const std::string> class_ids) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ContractViolation("predict_labels: threshold must lie in (0, 1)");
  if (static_cast<Index>(class_ids.size()) != learner.num_classes())
    throw ContractViolation("predict_labels: class id list does not match num_classes");
  const MatrixXd probs = learner.scores(params, instance.transpose());
  std::set<std::string> predicted;
  for (Index c = 0; c < probs.cols(); ++c) {
    if (probs(0, c) >= threshold) predicted.insert(class_ids[static_cast<std::size_t>(c)]);
  }
  return predicted;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& bin_path) {
  std::filesystem::path p = bin_path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

void save_params(const std::filesystem::path& bin_path, const Learner& learner,
                 const VectorXd& params) {
  learner.check_params(params);
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot write " + bin_path.string());
  bin.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(sizeof(double)) * params.size());
  if (!bin) throw IoError("write failed for " + bin_path.string());
  bin.close();

  nlohmann::json sidecar;
  sidecar["learner"] = learner.name();
  sidecar["num_classes"] = learner.num_classes();
  sidecar["feature_dim"] = learner.feature_dim();
  sidecar["learning_rate"] = learner.learning_rate();
  sidecar["param_count"] = params.size();
  learner.append_metadata(sidecar);
  std::ofstream meta(sidecar_path(bin_path));
  if (!meta) throw IoError("cannot write " + sidecar_path(bin_path).string());
  meta << sidecar.dump(2) << '\n';
}

LoadedLearner load_params(const std::filesystem::path& bin_path) {
  std::ifstream meta(sidecar_path(bin_path));
  if (!meta) throw IoError("cannot read " + sidecar_path(bin_path).string());
  nlohmann::json sidecar;
  try {
    meta >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(sidecar_path(bin_path).string() + ": " + e.what());
  }

  LoadedLearner loaded;
  try {
    loaded.learner = make_learner(sidecar.at("learner").get<std::string>(),
                                  sidecar.at("num_classes").get<int>(),
                                  sidecar.at("feature_dim").get<int>(),
                                  sidecar.at("learning_rate").get<double>(),
                                  sidecar.value("hidden_units", 64));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(sidecar_path(bin_path).string() + ": " + e.what());
  }

  const Index expected = sidecar.at("param_count").get<Index>();
  if (expected != loaded.learner->param_count()) {
    throw DataError(sidecar_path(bin_path).string() + ": param_count " +
                    std::to_string(expected) + " does not match learner shape " +
                    std::to_string(loaded.learner->param_count()));
  }
  std::ifstream bin(bin_path, std::ios::binary | std::ios::ate);
  if (!bin) throw IoError("cannot read " + bin_path.string());
  const auto bytes = static_cast<std::size_t>(bin.tellg());
  if (bytes != sizeof(double) * static_cast<std::size_t>(expected)) {
    throw DataError(bin_path.string() + ": has " + std::to_string(bytes) +
                    " bytes, expected " + std::to_string(sizeof(double) * expected));
  }
  bin.seekg(0);
  loaded.params.resize(expected);
  bin.read(reinterpret_cast<char*>(loaded.params.data()),
           static_cast<std::streamsize>(bytes));
  if (!bin) throw IoError("read failed for " + bin_path.string());
  return loaded;
}

std::unique_ptr<Learner> make_learner(const std::string& type, int num_classes, int feature_dim,
                                      double learning_rate, int hidden_units) {
  if (type == "logistic")
    return std::make_unique<LogisticLearner>(num_classes, feature_dim, learning_rate);
  if (type == "mlp")
    return std::make_unique<MlpLearner>(num_classes, feature_dim, hidden_units, learning_rate);
  throw ConfigError("unknown learner type '" + type + "' (expected logistic|mlp)");
}

}  // namespace banditsl
