#pragma once

#include <Eigen/Dense>

namespace mhscreen {

// Persisted matrices are row-major 32-bit floats; keeping the in-memory
// layout identical makes the .bin files a plain memory dump.
using RowMatrixXf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::VectorXf;

} // namespace mhscreen
