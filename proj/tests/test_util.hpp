#pragma once

#include <initializer_list>
#include <random>
#include <vector>

#include "banditsl/types.hpp"
#include "oracles.hpp"

namespace testutil {

inline banditsl::VectorXd vec(std::initializer_list<double> values) {
  banditsl::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double value : values) v(i++) = value;
  return v;
}

inline oracle::Vec to_std(const banditsl::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

inline banditsl::VectorXd random_vec(int dim, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  banditsl::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = gauss(rng);
  return v;
}

}  // namespace testutil
