#pragma once

#include <vector>

#include "bodyfit/linalg.hpp"

namespace bodyfit {

// Calibrated pinhole camera. Camera frame: x_cam = rotation * X + translation,
// optical axis along +z, pixel = (fx * x/z + cx, fy * y/z + cy).
struct Camera {
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    int width = 1, height = 1;

    void validate() const;
};

struct Projection {
    MatX2 pixels;               // N x 2
    Vec depths;                 // camera-frame z
    std::vector<bool> behind;   // depth <= 1e-6
};

Projection project(const Camera& camera, const MatX3& points);

// Inverse of project for a known depth; returns the world-frame point.
Vec3 unproject(const Camera& camera, const Vec2& pixel, double depth);

}  // namespace bodyfit
