#pragma once

#include <filesystem>

#include "bodyfit/camera.hpp"
#include "bodyfit/linalg.hpp"

namespace bodyfit {

// Coverage image in [0,1]; values(row, col), row 0 at the top.
struct SilhouetteImage {
    Mat values;

    int width() const { return static_cast<int>(values.cols()); }
    int height() const { return static_cast<int>(values.rows()); }

    static SilhouetteImage zeros(int width, int height) {
        return SilhouetteImage{Mat::Zero(height, width)};
    }
};

struct MeshTopology {
    TrianglesMat triangles;  // F x 3 vertex indices

    int triangle_count() const { return static_cast<int>(triangles.rows()); }
    void validate(int vertex_count) const;
};

MeshTopology load_topology(const std::filesystem::path& model_path);

struct RenderStats {
    int dropped_triangles = 0;  // behind-camera
};

// Soft coverage: per triangle, logistic(signed_distance / sigma) with the
// signed distance positive inside; pixels aggregate triangles as a
// probabilistic union 1 - prod(1 - c). Pixel samples sit at (col + 0.5,
// row + 0.5). Triangles with any vertex behind the camera are dropped and
// counted in stats.
SilhouetteImage render_silhouette(const Camera& camera, const MeshTopology& topology,
                                  const MatX3& vertices, double sigma,
                                  RenderStats* stats = nullptr);

// Reference hard rasterizer (point-in-triangle coverage); the sigma -> 0
// limit of render_silhouette.
SilhouetteImage render_hard(const Camera& camera, const MeshTopology& topology,
                            const MatX3& vertices);

// Mean of squared per-pixel differences (normalized by pixel count).
double silhouette_mse(const SilhouetteImage& a, const SilhouetteImage& b);

struct SilhouetteLoss {
    double loss = 0.0;
    MatX3 grad_vertices;  // d(loss)/d(world-frame vertex coordinates)
    SilhouetteImage rendered;
    RenderStats stats;
};

// ||S - R(V)||^2 / pixel_count together with its gradient through
// rasterization and projection.
SilhouetteLoss silhouette_loss(const SilhouetteImage& target, const Camera& camera,
                               const MeshTopology& topology, const MatX3& vertices,
                               double sigma);

}  // namespace bodyfit
