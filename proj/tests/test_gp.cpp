#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "banditsl/errors.hpp"
#include "banditsl/gp.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace banditsl;
using testutil::vec;

namespace {

struct RandomInstance {
  GpState<double> state;
  oracle::KernelSpec spec;
  double epsilon = 0;
  double sigma_f = 0;
  std::vector<oracle::Vec> points;
  std::vector<long long> times;
  oracle::Vec rewards;
  Timestep next_time = 1;
};

RandomInstance random_instance(std::mt19937_64& rng, int max_history = 50, int max_dim = 8) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const char* families[] = {"matern12", "matern32", "matern52", "squared_exponential"};
  const KernelFamily enums[] = {KernelFamily::Matern12, KernelFamily::Matern32,
                                KernelFamily::Matern52, KernelFamily::SquaredExponential};
  const int which = static_cast<int>(rng() % 4);
  KernelConfig<double> kernel{enums[which], 0.3 + 1.7 * uniform(rng), 0.5 + 1.5 * uniform(rng),
                              rng() % 2 == 0};
  const double epsilon = rng() % 4 == 0 ? 0.0 : uniform(rng);
  const double sigma_f = 0.05 + 0.45 * uniform(rng);
  const int dim = 1 + static_cast<int>(rng() % max_dim);
  const int history = 1 + static_cast<int>(rng() % max_history);

  RandomInstance instance{GpState<double>(kernel, epsilon, sigma_f, 1000),
                          {families[which], kernel.lengthscale, kernel.output_scale,
                           kernel.normalize},
                          epsilon,
                          sigma_f,
                          {},
                          {},
                          {},
                          1};
  std::normal_distribution<double> gauss(0.0, 1.0);
  Timestep t = 0;
  for (int i = 0; i < history; ++i) {
    const VectorXd w = testutil::random_vec(dim, rng);
    const double reward = gauss(rng);
    t += 1 + static_cast<Timestep>(rng() % 3);
    instance.state = observe(std::move(instance.state), w, reward, t);
    instance.points.push_back(testutil::to_std(w));
    instance.times.push_back(t);
    instance.rewards.push_back(reward);
  }
  instance.next_time = t + 1 + static_cast<Timestep>(rng() % 3);
  return instance;
}

}  // namespace

TEST_CASE("posterior with empty history is the prior") {
  GpState<double> state({KernelFamily::Matern52, 1.0, 1.0, true}, 0.1, 0.1);
  const auto estimate = posterior(state, vec({0.3, 0.4}), 1);
  CHECK(estimate.mean == 0.0);
  CHECK(estimate.variance == 1.0);

  GpState<double> scaled({KernelFamily::Matern32, 1.0, 2.5, true}, 0.1, 0.1);
  CHECK(posterior(scaled, vec({0.3, 0.4}), 1).variance == 2.5);
}

TEST_CASE("posterior interpolates a noise-free observation") {
  GpState<double> state({KernelFamily::Matern52, 1.0, 1.0, true}, 0.0, 1e-6);
  const VectorXd w = vec({0.6, 0.8});
  state = observe(std::move(state), w, 0.5, 1);
  const auto estimate = posterior(state, w, 1);
  CHECK(estimate.mean == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(estimate.variance == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(estimate.variance >= 0.0);
}

TEST_CASE("posterior matches the dense elimination oracle") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto instance = random_instance(rng);
    const int dim = static_cast<int>(instance.points.front().size());
    const VectorXd w = testutil::random_vec(dim, rng);
    const auto actual = posterior(instance.state, w, instance.next_time);
    const auto expected =
        oracle::posterior(instance.spec, instance.epsilon, instance.sigma_f, instance.points,
                          instance.times, instance.rewards, testutil::to_std(w),
                          instance.next_time);
    CHECK(actual.mean == doctest::Approx(expected.mean).epsilon(1e-10));
    CHECK(std::abs(actual.variance - std::max(expected.variance, 0.0)) <= 1e-8);
  }
}

TEST_CASE("observe appends and evicts oldest beyond window_cap") {
  GpState<double> state({KernelFamily::Matern52, 1.0, 1.0, true}, 0.0, 0.1, 2);
  CHECK(state.empty());
  state = observe(std::move(state), vec({1.0, 0.0}), 0.1, 1);
  CHECK(state.size() == 1);
  state = observe(std::move(state), vec({0.0, 1.0}), 0.2, 2);
  state = observe(std::move(state), vec({1.0, 1.0}), 0.3, 3);
  REQUIRE(state.size() == 2);
  CHECK(state.times()[0] == 2);
  CHECK(state.times()[1] == 3);
  CHECK(state.rewards()[0] == 0.2);
  CHECK(state.rewards()[1] == 0.3);
}

TEST_CASE("observe rejects non-monotone timesteps and bad values") {
  GpState<double> state({KernelFamily::Matern52, 1.0, 1.0, true}, 0.0, 0.1);
  state = observe(std::move(state), vec({1.0}), 0.1, 5);
  CHECK_THROWS_AS(observe(state, vec({1.0}), 0.1, 5), ContractViolation);
  CHECK_THROWS_AS(observe(state, vec({1.0}), 0.1, 4), ContractViolation);
  CHECK_THROWS_AS(observe(state, vec({1.0, 2.0}), 0.1, 6), ContractViolation);
  CHECK_THROWS_AS(observe(state, vec({1.0}), std::nan(""), 6), ContractViolation);
}

TEST_CASE("observing pulls the posterior mean toward the reward") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    auto instance = random_instance(rng, 20, 5);
    const int dim = static_cast<int>(instance.points.front().size());
    const VectorXd w = testutil::random_vec(dim, rng);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double reward = gauss(rng);

    const double before = posterior(instance.state, w, instance.next_time).mean;
    auto updated = observe(instance.state, w, reward, instance.next_time);
    const double after = posterior(updated, w, instance.next_time).mean;
    CHECK(std::abs(after - reward) < std::abs(before - reward));
  }
}

TEST_CASE("posterior variance never exceeds the prior") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    const auto instance = random_instance(rng, 30, 6);
    const int dim = static_cast<int>(instance.points.front().size());
    const auto factor = factorize(instance.state);
    for (int q = 0; q < 5; ++q) {
      const VectorXd w = testutil::random_vec(dim, rng);
      const auto estimate = posterior(instance.state, factor, w, instance.next_time);
      CHECK(estimate.variance <= instance.state.kernel().output_scale + 1e-10);
      CHECK(estimate.variance >= 0.0);
    }
  }
}

TEST_CASE("posterior is invariant to uniform timestamp shifts") {
  std::mt19937_64 rng(24);
  for (double epsilon : {0.0, 0.2}) {
    std::vector<VectorXd> points;
    std::vector<double> rewards;
    std::vector<Timestep> times{1, 4, 5, 9};
    for (int i = 0; i < 4; ++i) {
      points.push_back(testutil::random_vec(3, rng));
      rewards.push_back(0.1 * (i + 1));
    }
    const Timestep shift = 1000;
    GpState<double> base({KernelFamily::Matern52, 1.0, 1.0, true}, epsilon, 0.1);
    GpState<double> shifted = base;
    for (int i = 0; i < 4; ++i) {
      base = observe(std::move(base), points[i], rewards[i], times[i]);
      shifted = observe(std::move(shifted), points[i], rewards[i], times[i] + shift);
    }
    const VectorXd w = testutil::random_vec(3, rng);
    const auto a = posterior(base, w, 12);
    const auto b = posterior(shifted, w, 12 + shift);
    CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-12));
    CHECK(a.variance == doctest::Approx(b.variance).epsilon(1e-12));
  }
}

TEST_CASE("epsilon = 1 forgets all strictly older observations") {
  std::mt19937_64 rng(25);
  GpState<double> state({KernelFamily::Matern52, 1.0, 1.3, true}, 1.0, 0.2);
  for (Timestep t = 1; t <= 6; ++t)
    state = observe(std::move(state), testutil::random_vec(3, rng), 0.5, t);
  const VectorXd w = testutil::random_vec(3, rng);
  const auto estimate = posterior(state, w, 7);
  CHECK(estimate.mean == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(estimate.variance == doctest::Approx(1.3).epsilon(1e-12));
}

TEST_CASE("repeat observations shrink the variance at the observed point") {
  GpState<double> state({KernelFamily::Matern52, 1.0, 1.0, true}, 0.0, 0.3);
  const VectorXd w = vec({0.6, 0.8, 0.0});
  double previous = posterior(state, w, 1).variance;
  for (Timestep t = 1; t <= 12; ++t) {
    state = observe(std::move(state), w, 0.4, t);
    const double variance = posterior(state, w, t).variance;
    CHECK(variance <= previous + 1e-12);
    previous = variance;
  }
}

TEST_CASE("near-duplicate rows survive via jitter escalation") {
  // all-identical points with tiny noise make the plain system numerically
  // singular; the escalating jitter must still produce finite estimates
  GpState<double> state({KernelFamily::Matern52, 1.0, 1.0, true}, 0.0, 1e-6, 100);
  const VectorXd w = vec({1.0, 2.0});
  for (Timestep t = 1; t <= 40; ++t) state = observe(std::move(state), w, 0.25, t);
  const auto estimate = posterior(state, w, 40);
  CHECK(std::isfinite(estimate.mean));
  CHECK(estimate.variance >= 0.0);
  CHECK(estimate.mean == doctest::Approx(0.25).epsilon(1e-3));
}

TEST_CASE("GpState constructor validates hyperparameters") {
  const KernelConfig<double> kernel{KernelFamily::Matern52, 1.0, 1.0, true};
  CHECK_THROWS_AS(GpState<double>(kernel, -0.1, 0.1), ContractViolation);
  CHECK_THROWS_AS(GpState<double>(kernel, 1.1, 0.1), ContractViolation);
  CHECK_THROWS_AS(GpState<double>(kernel, 0.5, 0.0), ContractViolation);
  CHECK_THROWS_AS(GpState<double>(kernel, 0.5, 0.1, 0), ContractViolation);
}
