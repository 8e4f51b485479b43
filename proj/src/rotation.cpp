#include "bodyfit/rotation.hpp"

#include <cmath>

namespace bodyfit {

namespace {

Mat3 skew(const Vec3& w) {
    Mat3 s;
    s << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), 0, w.x();
    return s;
}

}  // namespace

Mat3 rodrigues(const Vec3& axis_angle) {
    const double theta2 = axis_angle.squaredNorm();
    const double theta = std::sqrt(theta2);
    // a = sin(t)/t, b = (1-cos(t))/t^2; the closed forms cancel
    // catastrophically below ~1e-4 rad.
    double a, b;
    if (theta < 1e-4) {
        a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
        b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
    } else {
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    const Mat3 w = skew(axis_angle);
    return Mat3::Identity() + a * w + b * (w * w);
}

std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle) {
    const double theta2 = axis_angle.squaredNorm();
    const double theta = std::sqrt(theta2);
    const double theta4 = theta2 * theta2;

    // R = I + a W + b W^2 with W = [w]x. Differentiating the scalar
    // coefficients through theta gives
    //   dR/dw_i = f3 w_i W + a [e_i]x + f4 w_i W^2 + b (W [e_i]x + [e_i]x W)
    // where f3 = a'/theta and f4 = b'/theta, both finite at zero.
    double a, b, f3, f4;
    if (theta < 1e-2) {
        a = 1.0 - theta2 / 6.0 + theta4 / 120.0;
        b = 0.5 - theta2 / 24.0 + theta4 / 720.0;
        f3 = -1.0 / 3.0 + theta2 / 30.0 - theta4 / 840.0;
        f4 = -1.0 / 12.0 + theta2 / 180.0 - theta4 / 6720.0;
    } else {
        const double s = std::sin(theta);
        const double c = std::cos(theta);
        a = s / theta;
        b = (1.0 - c) / theta2;
        f3 = (theta * c - s) / (theta2 * theta);
        f4 = (theta * s - 2.0 * (1.0 - c)) / theta4;
    }

    const Mat3 w = skew(axis_angle);
    const Mat3 w2 = w * w;
    std::array<Mat3, 3> out;
    for (int i = 0; i < 3; ++i) {
        const Mat3 ei = skew(Vec3::Unit(i));
        out[static_cast<std::size_t>(i)] = f3 * axis_angle[i] * w + a * ei +
                                           f4 * axis_angle[i] * w2 +
                                           b * (w * ei + ei * w);
    }
    return out;
}

}  // namespace bodyfit
