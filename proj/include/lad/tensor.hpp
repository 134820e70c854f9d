#pragma once

#include <Eigen/Dense>

namespace lad {

// Row-major dense matrix used for every parameter and activation. A spatial
// feature map of H x W x C is stored as (H*W) x C with position r*W + c, so
// the flat storage order is exactly (row, col, channel) row-major.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct GridGeometry {
    int height = 4;
    int width = 4;

    int positions() const { return height * width; }
    friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

}  // namespace lad
