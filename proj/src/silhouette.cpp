#include "bodyfit/silhouette.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bodyfit/container.hpp"
#include "bodyfit/errors.hpp"

namespace bodyfit {

namespace {

// logistic(logit_cutoff) ~ 1e-6; beyond this band a triangle's coverage is
// treated as zero, which bounds the rasterization work per triangle.
constexpr double kLogitCutoff = 13.815511;

double cross2(const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); }

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct SegResult {
    double dist2;
    double t;
    Vec2 closest;
};

SegResult segment_closest(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Vec2 q = a + t * ab;
    return {(p - q).squaredNorm(), t, q};
}

struct SdGrad {
    Vec2 d[3];  // d(sd)/d(triangle vertex i)
};

// Signed distance from pixel p to the triangle boundary, positive inside.
// The gradient treats the active edge and its foot parameter as fixed
// (envelope theorem), which is exact away from ties.
double signed_distance(const Vec2& p, const Vec2 v[3], SdGrad* grad) {
    const double e0 = cross2(v[1] - v[0], p - v[0]);
    const double e1 = cross2(v[2] - v[1], p - v[1]);
    const double e2 = cross2(v[0] - v[2], p - v[2]);
    const bool inside = (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) ||
                        (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0);

    int best = 0;
    SegResult best_seg = segment_closest(p, v[0], v[1]);
    for (int k = 1; k < 3; ++k) {
        const SegResult s = segment_closest(p, v[k], v[(k + 1) % 3]);
        if (s.dist2 < best_seg.dist2) {
            best = k;
            best_seg = s;
        }
    }
    const double d = std::sqrt(best_seg.dist2);
    const double sign = inside ? 1.0 : -1.0;

    if (grad != nullptr) {
        grad->d[0].setZero();
        grad->d[1].setZero();
        grad->d[2].setZero();
        if (d > 1e-12) {
            const Vec2 dir = (best_seg.closest - p) / d;
            grad->d[best] = sign * (1.0 - best_seg.t) * dir;
            grad->d[(best + 1) % 3] = sign * best_seg.t * dir;
        }
    }
    return sign * d;
}

bool point_in_triangle(const Vec2& p, const Vec2 v[3]) {
    const double e0 = cross2(v[1] - v[0], p - v[0]);
    const double e1 = cross2(v[2] - v[1], p - v[1]);
    const double e2 = cross2(v[0] - v[2], p - v[2]);
    return (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0);
}

struct Bbox {
    int r0, r1, c0, c1;  // half-open pixel ranges
    bool empty;
};

Bbox triangle_bbox(const Vec2 v[3], double margin, int width, int height) {
    double xmin = v[0].x(), xmax = v[0].x(), ymin = v[0].y(), ymax = v[0].y();
    for (int k = 1; k < 3; ++k) {
        xmin = std::min(xmin, v[k].x());
        xmax = std::max(xmax, v[k].x());
        ymin = std::min(ymin, v[k].y());
        ymax = std::max(ymax, v[k].y());
    }
    Bbox b;
    b.c0 = std::max(0, static_cast<int>(std::floor(xmin - margin - 0.5)));
    b.c1 = std::min(width, static_cast<int>(std::ceil(xmax + margin + 0.5)) + 1);
    b.r0 = std::max(0, static_cast<int>(std::floor(ymin - margin - 0.5)));
    b.r1 = std::min(height, static_cast<int>(std::ceil(ymax + margin + 0.5)) + 1);
    b.empty = b.c0 >= b.c1 || b.r0 >= b.r1;
    return b;
}

struct ProjectedTriangle {
    Vec2 v[3];
    bool dropped;
};

std::vector<ProjectedTriangle> project_triangles(const MeshTopology& topology,
                                                 const Projection& proj, RenderStats* stats) {
    std::vector<ProjectedTriangle> out(static_cast<std::size_t>(topology.triangle_count()));
    for (int f = 0; f < topology.triangle_count(); ++f) {
        auto& pt = out[static_cast<std::size_t>(f)];
        pt.dropped = false;
        for (int k = 0; k < 3; ++k) {
            const int idx = topology.triangles(f, k);
            if (proj.behind[static_cast<std::size_t>(idx)]) pt.dropped = true;
            pt.v[k] = proj.pixels.row(idx).transpose();
        }
        if (pt.dropped && stats != nullptr) ++stats->dropped_triangles;
    }
    return out;
}

}  // namespace

void MeshTopology::validate(int vertex_count) const {
    for (int f = 0; f < triangle_count(); ++f) {
        const int a = triangles(f, 0), b = triangles(f, 1), c = triangles(f, 2);
        if (a < 0 || b < 0 || c < 0 || a >= vertex_count || b >= vertex_count ||
            c >= vertex_count)
            throw ValidationError("triangle " + std::to_string(f) +
                                  " references a vertex out of range");
        if (a == b || b == c || a == c)
            throw ValidationError("triangle " + std::to_string(f) + " repeats a vertex index");
    }
}

MeshTopology load_topology(const std::filesystem::path& model_path) {
    const TensorContainer c = read_container(model_path);
    const TensorArray& t = c.at("triangles");
    if (t.dtype != Dtype::i64 || t.shape.size() != 2 || t.shape[1] != 3)
        throw FormatError(model_path.string() + ": 'triangles' must be an int64 F x 3 array");
    MeshTopology topo;
    topo.triangles.resize(static_cast<Eigen::Index>(t.shape[0]), 3);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < topo.triangles.rows(); ++r)
        for (Eigen::Index col = 0; col < 3; ++col)
            topo.triangles(r, col) = static_cast<int>(t.i64[k++]);
    return topo;
}

SilhouetteImage render_silhouette(const Camera& camera, const MeshTopology& topology,
                                  const MatX3& vertices, double sigma, RenderStats* stats) {
    if (sigma <= 0.0) throw ValidationError("render sigma must be positive");
    topology.validate(static_cast<int>(vertices.rows()));
    const Projection proj = project(camera, vertices);
    const auto tris = project_triangles(topology, proj, stats);

    Mat prod = Mat::Ones(camera.height, camera.width);
    const double margin = sigma * kLogitCutoff;
    for (const auto& tri : tris) {
        if (tri.dropped) continue;
        const Bbox box = triangle_bbox(tri.v, margin, camera.width, camera.height);
        if (box.empty) continue;
        for (int r = box.r0; r < box.r1; ++r)
            for (int c = box.c0; c < box.c1; ++c) {
                const Vec2 p(c + 0.5, r + 0.5);
                const double sd = signed_distance(p, tri.v, nullptr);
                if (sd < -margin) continue;
                prod(r, c) *= 1.0 - logistic(sd / sigma);
            }
    }
    return SilhouetteImage{Mat::Ones(camera.height, camera.width) - prod};
}

SilhouetteImage render_hard(const Camera& camera, const MeshTopology& topology,
                            const MatX3& vertices) {
    topology.validate(static_cast<int>(vertices.rows()));
    const Projection proj = project(camera, vertices);
    const auto tris = project_triangles(topology, proj, nullptr);

    Mat img = Mat::Zero(camera.height, camera.width);
    for (const auto& tri : tris) {
        if (tri.dropped) continue;
        const Bbox box = triangle_bbox(tri.v, 0.0, camera.width, camera.height);
        if (box.empty) continue;
        for (int r = box.r0; r < box.r1; ++r)
            for (int c = box.c0; c < box.c1; ++c) {
                if (img(r, c) == 1.0) continue;
                const Vec2 p(c + 0.5, r + 0.5);
                if (point_in_triangle(p, tri.v)) img(r, c) = 1.0;
            }
    }
    return SilhouetteImage{std::move(img)};
}

double silhouette_mse(const SilhouetteImage& a, const SilhouetteImage& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw DimensionError("silhouette images differ in size: " + std::to_string(a.width()) +
                             "x" + std::to_string(a.height()) + " vs " +
                             std::to_string(b.width()) + "x" + std::to_string(b.height()));
    return (a.values - b.values).squaredNorm() / static_cast<double>(a.values.size());
}

SilhouetteLoss silhouette_loss(const SilhouetteImage& target, const Camera& camera,
                               const MeshTopology& topology, const MatX3& vertices,
                               double sigma) {
    if (target.width() != camera.width || target.height() != camera.height)
        throw DimensionError("target mask is " + std::to_string(target.width()) + "x" +
                             std::to_string(target.height()) + " but the camera renders " +
                             std::to_string(camera.width) + "x" + std::to_string(camera.height));
    if (sigma <= 0.0) throw ValidationError("render sigma must be positive");
    topology.validate(static_cast<int>(vertices.rows()));

    SilhouetteLoss out;
    const Projection proj = project(camera, vertices);
    const auto tris = project_triangles(topology, proj, &out.stats);
    const double margin = sigma * kLogitCutoff;
    const double pixel_count = static_cast<double>(camera.width) * camera.height;

    Mat prod = Mat::Ones(camera.height, camera.width);
    for (const auto& tri : tris) {
        if (tri.dropped) continue;
        const Bbox box = triangle_bbox(tri.v, margin, camera.width, camera.height);
        if (box.empty) continue;
        for (int r = box.r0; r < box.r1; ++r)
            for (int c = box.c0; c < box.c1; ++c) {
                const Vec2 p(c + 0.5, r + 0.5);
                const double sd = signed_distance(p, tri.v, nullptr);
                if (sd < -margin) continue;
                prod(r, c) *= 1.0 - logistic(sd / sigma);
            }
    }
    out.rendered.values = Mat::Ones(camera.height, camera.width) - prod;
    out.loss = (out.rendered.values - target.values).squaredNorm() / pixel_count;

    // Backward pass. d(loss)/d(pixel) = 2 (R - S) / P; the union derivative
    // for one triangle is prod / (1 - c). prod == 0 means some triangle is
    // fully saturated there, and every gradient path through that pixel
    // carries a factor that is exactly zero.
    MatX2 grad2d = MatX2::Zero(vertices.rows(), 2);
    for (std::size_t f = 0; f < tris.size(); ++f) {
        const auto& tri = tris[f];
        if (tri.dropped) continue;
        const Bbox box = triangle_bbox(tri.v, margin, camera.width, camera.height);
        if (box.empty) continue;
        for (int r = box.r0; r < box.r1; ++r)
            for (int c = box.c0; c < box.c1; ++c) {
                if (prod(r, c) == 0.0) continue;
                const Vec2 p(c + 0.5, r + 0.5);
                SdGrad sg;
                const double sd = signed_distance(p, tri.v, &sg);
                if (sd < -margin) continue;
                const double cov = logistic(sd / sigma);
                const double d_pixel = 2.0 * (out.rendered.values(r, c) - target.values(r, c)) /
                                       pixel_count;
                const double d_cov = d_pixel * prod(r, c) / (1.0 - cov);
                const double d_sd = d_cov * cov * (1.0 - cov) / sigma;
                for (int k = 0; k < 3; ++k) {
                    const int idx = topology.triangles(static_cast<Eigen::Index>(f), k);
                    grad2d.row(idx) += d_sd * sg.d[k].transpose();
                }
            }
    }

    // Chain pixel-space gradients through the pinhole projection.
    out.grad_vertices = MatX3::Zero(vertices.rows(), 3);
    for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
        if (proj.behind[static_cast<std::size_t>(i)]) continue;
        if (grad2d.row(i).isZero(0.0)) continue;
        const Vec3 pc = camera.rotation * vertices.row(i).transpose() + camera.translation;
        Eigen::Matrix<double, 2, 3> dpix_dcam;
        dpix_dcam << camera.fx / pc.z(), 0.0, -camera.fx * pc.x() / (pc.z() * pc.z()),
                     0.0, camera.fy / pc.z(), -camera.fy * pc.y() / (pc.z() * pc.z());
        out.grad_vertices.row(i) = grad2d.row(i) * (dpix_dcam * camera.rotation);
    }
    return out;
}

}  // namespace bodyfit
