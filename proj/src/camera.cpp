#include "bodyfit/camera.hpp"

#include <cmath>
#include <string>

#include "bodyfit/errors.hpp"

namespace bodyfit {

void Camera::validate() const {
    if (fx <= 0.0 || fy <= 0.0) throw ValidationError("camera focal lengths must be positive");
    if (width < 1 || height < 1) throw ValidationError("camera image size must be at least 1x1");
    if (std::abs(rotation.determinant() - 1.0) > 1e-6 ||
        (rotation * rotation.transpose() - Mat3::Identity()).norm() > 1e-6)
        throw ValidationError("camera rotation must be orthonormal with determinant +1");
}

Projection project(const Camera& camera, const MatX3& points) {
    if (!points.allFinite()) throw DataError("projection input contains non-finite points");
    const auto n = points.rows();
    Projection out;
    out.pixels.resize(n, 2);
    out.depths.resize(n);
    out.behind.assign(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 pc = camera.rotation * points.row(i).transpose() + camera.translation;
        out.depths[i] = pc.z();
        if (pc.z() <= 1e-6) {
            out.behind[static_cast<std::size_t>(i)] = true;
            out.pixels.row(i).setZero();
            continue;
        }
        out.pixels(i, 0) = camera.fx * pc.x() / pc.z() + camera.cx;
        out.pixels(i, 1) = camera.fy * pc.y() / pc.z() + camera.cy;
    }
    return out;
}

Vec3 unproject(const Camera& camera, const Vec2& pixel, double depth) {
    const Vec3 pc((pixel.x() - camera.cx) * depth / camera.fx,
                  (pixel.y() - camera.cy) * depth / camera.fy, depth);
    return camera.rotation.transpose() * (pc - camera.translation);
}

}  // namespace bodyfit
