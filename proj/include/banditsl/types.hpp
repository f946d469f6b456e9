#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace banditsl {

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

// Round counter of the training loop. Observations are stamped with strictly
// increasing timesteps; gaps between stamps drive the time discount.
using Timestep = std::int64_t;

}  // namespace banditsl
