#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace bodyfit {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

// Point clouds are stored one row per point.
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using MatX2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using TrianglesMat = Eigen::Matrix<int, Eigen::Dynamic, 3>;

}  // namespace bodyfit
