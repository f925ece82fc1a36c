#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <cstdint>

namespace gblab {

// Dense 64-bit numerics throughout; Eigen is the only math dependency.
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

using Seed = std::uint64_t;

}  // namespace gblab
