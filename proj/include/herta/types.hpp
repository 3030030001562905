#pragma once

#include <Eigen/Dense>

namespace herta {

/// Row-major dense matrix (features X, labels Y, weights W, sketches Q).
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Matrices with more rows than this are refused by the dense (oracle-grade) helpers.
inline constexpr Eigen::Index default_dense_limit = 2000;

} // namespace herta
