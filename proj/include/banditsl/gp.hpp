#pragma once

// Time-varying Gaussian Process posterior over the reward surface. The state
// is a value: observe() returns a new state, queries never mutate. A round
// that scores many candidate arms factorizes once and reuses the factor.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "banditsl/errors.hpp"
#include "banditsl/kernel.hpp"
#include "banditsl/types.hpp"

namespace banditsl {

template <class Scalar = double>
struct PosteriorEstimate {
  Scalar mean = 0;
  Scalar variance = 0;
};

template <class Scalar = double>
class GpState {
 public:
  GpState(KernelConfig<Scalar> kernel, Scalar epsilon, Scalar noise_sigma_f,
          std::size_t window_cap = 500)
      : kernel_(std::move(kernel)),
        epsilon_(epsilon),
        sigma_f_(noise_sigma_f),
        window_cap_(window_cap) {
    kernel_.validate();
    if (!(epsilon_ >= Scalar(0) && epsilon_ <= Scalar(1)))
      throw ContractViolation("GpState: epsilon must lie in [0, 1]");
    if (!(sigma_f_ > Scalar(0)))
      throw ContractViolation("GpState: noise_sigma_f must be positive");
    if (window_cap_ < 1) throw ContractViolation("GpState: window_cap must be positive");
  }

  const KernelConfig<Scalar>& kernel() const { return kernel_; }
  Scalar epsilon() const { return epsilon_; }
  Scalar noise_sigma_f() const { return sigma_f_; }
  std::size_t window_cap() const { return window_cap_; }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  std::span<const Vector<Scalar>> points() const { return points_; }
  std::span<const Timestep> times() const { return times_; }
  std::span<const Scalar> rewards() const { return rewards_; }
  Timestep last_time() const {
    if (times_.empty()) throw ContractViolation("GpState: no observations recorded");
    return times_.back();
  }

  template <class S>
  friend GpState<S> observe(GpState<S> state, Vector<S> w, S reward, Timestep t);

 private:
  KernelConfig<Scalar> kernel_;
  Scalar epsilon_;
  Scalar sigma_f_;
  std::size_t window_cap_;
  std::vector<Vector<Scalar>> points_;
  std::vector<Scalar> rewards_;
  std::vector<Timestep> times_;
};

// Records one (arm, reward, timestep) observation, evicting the oldest entry
// once the window cap is exceeded.
template <class Scalar>
GpState<Scalar> observe(GpState<Scalar> state, Vector<Scalar> w, Scalar reward, Timestep t) {
  if (!w.allFinite()) throw ContractViolation("observe: embedding has non-finite entries");
  if (!std::isfinite(reward)) throw ContractViolation("observe: reward must be finite");
  if (!state.points_.empty()) {
    if (t <= state.times_.back()) {
      std::ostringstream msg;
      msg << "observe: timestep " << t << " must exceed last recorded " << state.times_.back();
      throw ContractViolation(msg.str());
    }
    if (w.size() != state.points_.front().size()) {
      std::ostringstream msg;
      msg << "observe: embedding dimension mismatch (" << state.points_.front().size() << " vs "
          << w.size() << ")";
      throw ContractViolation(msg.str());
    }
  }
  state.points_.push_back(std::move(w));
  state.rewards_.push_back(reward);
  state.times_.push_back(t);
  if (state.points_.size() > state.window_cap_) {
    state.points_.erase(state.points_.begin());
    state.rewards_.erase(state.rewards_.begin());
    state.times_.erase(state.times_.begin());
  }
  return state;
}

// Cholesky factor of (K + sigma_f^2 I + jitter I) with alpha solved against
// the reward history. Valid until the state it came from is replaced.
template <class Scalar = double>
struct GpFactor {
  Eigen::LLT<Matrix<Scalar>> llt;
  Vector<Scalar> alpha;
  Scalar jitter = 0;
};

// Factorizes the regularized Gram system. Gram matrices with near-duplicate
// rows are routine, so a failed factorization retries with diagonal jitter
// escalating from 1e-10 to 1e-4 before giving up.
template <class Scalar>
GpFactor<Scalar> factorize(const GpState<Scalar>& state) {
  if (state.empty()) throw ContractViolation("factorize: empty history");
  Matrix<Scalar> system =
      build_gram(state.kernel(), state.points(), state.times(), state.epsilon());
  system.diagonal().array() += state.noise_sigma_f() * state.noise_sigma_f();

  GpFactor<Scalar> factor;
  Scalar applied = 0;
  for (Scalar jitter : {Scalar(0), Scalar(1e-10), Scalar(1e-9), Scalar(1e-8), Scalar(1e-7),
                        Scalar(1e-6), Scalar(1e-5), Scalar(1e-4)}) {
    system.diagonal().array() += jitter - applied;
    applied = jitter;
    factor.llt.compute(system);
    if (factor.llt.info() == Eigen::Success) {
      factor.jitter = jitter;
      const auto& rewards = state.rewards();
      factor.alpha = factor.llt.solve(
          Eigen::Map<const Vector<Scalar>>(rewards.data(), static_cast<Eigen::Index>(rewards.size())));
      return factor;
    }
  }
  std::ostringstream msg;
  msg << "factorize: system not positive definite after jitter escalation to 1e-4"
      << " (n=" << state.size() << ", sigma_f^2=" << state.noise_sigma_f() * state.noise_sigma_f()
      << ", diag range [" << system.diagonal().minCoeff() << ", " << system.diagonal().maxCoeff()
      << "])";
  throw NumericError(msg.str());
}

// Posterior mean and variance at arm w and time t, reusing a factor computed
// for this state. Negative variance within 1e-10 of zero is numerical residue
// and clamps to zero; anything further negative is a failed solve.
template <class Scalar, class Derived>
PosteriorEstimate<Scalar> posterior(const GpState<Scalar>& state, const GpFactor<Scalar>& factor,
                                    const Eigen::MatrixBase<Derived>& w, Timestep t) {
  const Scalar prior_variance = state.kernel().output_scale;  // k(w, w)
  if (state.empty()) return {Scalar(0), prior_variance};
  const Vector<Scalar> query = build_query_vector(state.kernel(), state.points(), state.times(),
                                                  w, t, state.epsilon());
  const Scalar mean = query.dot(factor.alpha);
  const Scalar variance = prior_variance - query.dot(factor.llt.solve(query));
  if (!std::isfinite(mean) || !std::isfinite(variance))
    throw NumericError("posterior: non-finite estimate");
  if (variance < Scalar(0)) {
    if (variance < Scalar(-1e-10)) {
      std::ostringstream msg;
      msg << "posterior: variance " << variance << " below clamp threshold";
      throw NumericError(msg.str());
    }
    return {mean, Scalar(0)};
  }
  return {mean, variance};
}

template <class Scalar, class Derived>
PosteriorEstimate<Scalar> posterior(const GpState<Scalar>& state,
                                    const Eigen::MatrixBase<Derived>& w, Timestep t) {
  if (state.empty()) return {Scalar(0), state.kernel().output_scale};
  return posterior(state, factorize(state), w, t);
}

}  // namespace banditsl
