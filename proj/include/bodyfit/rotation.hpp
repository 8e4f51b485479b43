#pragma once

#include <array>

#include "bodyfit/linalg.hpp"

namespace bodyfit {

// Axis-angle exponential map. The direction of the input is the rotation
// axis and its magnitude the angle in radians. Series-stable near zero.
Mat3 rodrigues(const Vec3& axis_angle);

// dR/d(axis_angle[i]), i = 0..2, evaluated analytically with the same
// series-stable branches as rodrigues().
std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle);

}  // namespace bodyfit
