#pragma once

#include <Eigen/Dense>

namespace ergolab {

using Vec = Eigen::VectorXd;
using Covec = Eigen::RowVectorXd;
using Mat = Eigen::MatrixXd;

// One row per Monte-Carlo path, one column per state coordinate. Row-major so
// that a single path state is contiguous and can be mapped without copying.
using PathMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VecRef = Eigen::Ref<const Vec>;
using CovecRef = Eigen::Ref<const Covec>;

inline Eigen::Map<const Vec> row_view(const PathMatrix& paths, Eigen::Index m) {
    return Eigen::Map<const Vec>(paths.row(m).data(), paths.cols());
}

}  // namespace ergolab
