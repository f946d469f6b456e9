#pragma once

// Positive-definite similarity over class embeddings plus the time-discount
// factors that modulate it. All functions here are pure and allocation-light;
// they accept Eigen expressions directly.

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <string_view>

#include "banditsl/errors.hpp"
#include "banditsl/types.hpp"

namespace banditsl {

enum class KernelFamily { Matern12, Matern32, Matern52, SquaredExponential };

inline const char* to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::Matern12: return "matern12";
    case KernelFamily::Matern32: return "matern32";
    case KernelFamily::Matern52: return "matern52";
    case KernelFamily::SquaredExponential: return "squared_exponential";
  }
  return "unknown";
}

inline KernelFamily kernel_family_from_string(std::string_view name) {
  if (name == "matern12") return KernelFamily::Matern12;
  if (name == "matern32") return KernelFamily::Matern32;
  if (name == "matern52") return KernelFamily::Matern52;
  if (name == "squared_exponential") return KernelFamily::SquaredExponential;
  throw ConfigError("unknown kernel family '" + std::string(name) +
                    "' (expected matern12|matern32|matern52|squared_exponential)");
}

template <class Scalar = double>
struct KernelConfig {
  KernelFamily family = KernelFamily::Matern52;
  Scalar lengthscale = 1;
  Scalar output_scale = 1;
  // Word vectors are usually compared by angle; when set, inputs are scaled
  // to unit norm before the Euclidean distance is taken.
  bool normalize = true;

  void validate() const {
    if (!(lengthscale > Scalar(0)))
      throw ContractViolation("KernelConfig: lengthscale must be positive");
    if (!(output_scale > Scalar(0)))
      throw ContractViolation("KernelConfig: output_scale must be positive");
  }
};

// Correlation profile at distance r, in (0, 1]; equals 1 at r = 0.
template <class Scalar>
Scalar kernel_profile(KernelFamily family, Scalar r, Scalar lengthscale) {
  const Scalar z = r / lengthscale;
  switch (family) {
    case KernelFamily::Matern12:
      return std::exp(-z);
    case KernelFamily::Matern32: {
      const Scalar s = std::sqrt(Scalar(3)) * z;
      return (Scalar(1) + s) * std::exp(-s);
    }
    case KernelFamily::Matern52: {
      const Scalar s = std::sqrt(Scalar(5)) * z;
      return (Scalar(1) + s + s * s / Scalar(3)) * std::exp(-s);
    }
    case KernelFamily::SquaredExponential:
      return std::exp(-z * z / Scalar(2));
  }
  throw ContractViolation("kernel_profile: unknown family");
}

// Euclidean distance between two embeddings, optionally after scaling each to
// unit norm. Zero vectors are left untouched (there is nothing to normalize).
template <class DerivedA, class DerivedB>
typename DerivedA::Scalar embedding_distance(bool normalize,
                                             const Eigen::MatrixBase<DerivedA>& x,
                                             const Eigen::MatrixBase<DerivedB>& y) {
  using Scalar = typename DerivedA::Scalar;
  static_assert(std::is_same_v<Scalar, typename DerivedB::Scalar>);
  if (x.size() != y.size()) {
    std::ostringstream msg;
    msg << "embedding dimension mismatch (" << x.size() << " vs " << y.size() << ")";
    throw ContractViolation(msg.str());
  }
  if (!normalize) return (x - y).norm();
  Vector<Scalar> xs = x;
  Vector<Scalar> ys = y;
  const Scalar nx = xs.norm();
  const Scalar ny = ys.norm();
  if (nx > Scalar(0)) xs /= nx;
  if (ny > Scalar(0)) ys /= ny;
  return (xs - ys).norm();
}

// k(x, y) in (0, output_scale]; k(x, x) = output_scale.
template <class Scalar, class DerivedA, class DerivedB>
Scalar kernel_eval(const KernelConfig<Scalar>& config,
                   const Eigen::MatrixBase<DerivedA>& x,
                   const Eigen::MatrixBase<DerivedB>& y) {
  config.validate();
  const Scalar r = embedding_distance(config.normalize, x, y);
  return config.output_scale * kernel_profile(config.family, r, config.lengthscale);
}

// (1 - epsilon)^(gap/2): the weight a reward observed `gap` steps away keeps.
// 1 at gap = 0; 0 for any positive gap when epsilon = 1 (independent rounds).
template <class Scalar>
Scalar time_discount(Scalar epsilon, Timestep gap) {
  if (!(epsilon >= Scalar(0) && epsilon <= Scalar(1)))
    throw ContractViolation("time_discount: epsilon must lie in [0, 1]");
  if (gap < 0) throw ContractViolation("time_discount: gap must be nonnegative");
  if (gap == 0) return Scalar(1);
  return std::pow(Scalar(1) - epsilon, Scalar(gap) / Scalar(2));
}

namespace detail {

template <class Scalar>
void check_history(std::span<const Vector<Scalar>> points, std::span<const Timestep> times) {
  if (points.empty()) throw ContractViolation("kernel: no observations in history");
  if (points.size() != times.size())
    throw ContractViolation("kernel: history points and timesteps differ in length");
  const auto dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) {
      std::ostringstream msg;
      msg << "kernel: history embedding dimension mismatch (" << dim << " vs " << p.size() << ")";
      throw ContractViolation(msg.str());
    }
  }
}

}  // namespace detail

// Gram matrix over the pulled arms: entry (i, j) is
// k(w_i, w_j) * (1 - epsilon)^(|t_i - t_j|/2). Symmetric by construction,
// diagonal exactly output_scale.
template <class Scalar>
Matrix<Scalar> build_gram(const KernelConfig<Scalar>& config,
                          std::span<const Vector<Scalar>> points,
                          std::span<const Timestep> times,
                          Scalar epsilon) {
  config.validate();
  detail::check_history(points, times);
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  Matrix<Scalar> gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    gram(i, i) = config.output_scale;
    for (Eigen::Index j = 0; j < i; ++j) {
      const Timestep gap = std::abs(times[static_cast<std::size_t>(i)] -
                                    times[static_cast<std::size_t>(j)]);
      const Scalar value =
          kernel_eval(config, points[static_cast<std::size_t>(i)],
                      points[static_cast<std::size_t>(j)]) *
          time_discount(epsilon, gap);
      gram(i, j) = value;
      gram(j, i) = value;
    }
  }
  return gram;
}

// Query vector comparing historical arms against a candidate arm at time t:
// entry i is k(w_i, w) * (1 - epsilon)^((t - t_i)/2). Requires t to be no
// earlier than every recorded timestep.
template <class Scalar, class Derived>
Vector<Scalar> build_query_vector(const KernelConfig<Scalar>& config,
                                  std::span<const Vector<Scalar>> points,
                                  std::span<const Timestep> times,
                                  const Eigen::MatrixBase<Derived>& w,
                                  Timestep t,
                                  Scalar epsilon) {
  config.validate();
  detail::check_history(points, times);
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  Vector<Scalar> query(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Timestep observed = times[static_cast<std::size_t>(i)];
    if (t < observed) {
      std::ostringstream msg;
      msg << "build_query_vector: query time " << t << " precedes observation at " << observed;
      throw ContractViolation(msg.str());
    }
    query(i) = kernel_eval(config, points[static_cast<std::size_t>(i)], w) *
               time_discount(epsilon, t - observed);
  }
  return query;
}

}  // namespace banditsl
